//! Disjoint train/test identity splits.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetDescriptor, Sample, Split};
use crate::error::{ensure, Error, Result};
use crate::rng::{stream_rng, TAG_SPLIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitProtocol {
    /// Train on `floor(n/2)` identities, test on the rest.
    Half,
    /// Test on exactly this many identities, train on the remainder.
    FixedTestCount(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub dataset: String,
    pub dataset_id: u32,
    /// Local identity ids, ascending.
    pub train_identities: Vec<usize>,
    pub test_identities: Vec<usize>,
    pub seed: u64,
}

pub fn make_split(dataset: &DatasetDescriptor, protocol: SplitProtocol, seed: u64) -> Result<SplitSpec> {
    let n = dataset.num_identities;
    let test = match protocol {
        SplitProtocol::Half => {
            ensure!(n >= 2, Error::TooFewIdentities { needed: 2, available: n });
            n - n / 2
        }
        SplitProtocol::FixedTestCount(k) => {
            ensure!(k >= 1, Error::InvalidArgument("test identity count must be positive".into()));
            ensure!(k <= n, Error::TooFewIdentities { needed: k, available: n });
            k
        }
    };
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut stream_rng(seed, &[TAG_SPLIT, dataset.dataset_id as u64]));
    let mut test_identities = ids[..test].to_vec();
    let mut train_identities = ids[test..].to_vec();
    test_identities.sort_unstable();
    train_identities.sort_unstable();
    Ok(SplitSpec { dataset: dataset.name.clone(), dataset_id: dataset.dataset_id, train_identities, test_identities, seed })
}

/// Mark each sample of the split's dataset as train or test.
pub fn apply_split(samples: &mut [Sample], split: &SplitSpec) -> Result<()> {
    for s in samples.iter_mut() {
        ensure!(
            s.dataset_id == split.dataset_id,
            Error::InvalidArgument(format!("sample of dataset {} given split for dataset {}", s.dataset_id, split.dataset_id))
        );
        s.split = if split.test_identities.binary_search(&s.local_identity).is_ok() {
            Split::Test
        } else if split.train_identities.binary_search(&s.local_identity).is_ok() {
            Split::Train
        } else {
            return Err(Error::IdentityOutOfRange {
                dataset: s.dataset_id,
                identity: s.local_identity,
                limit: split.train_identities.len() + split.test_identities.len(),
            });
        };
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desc(n: usize) -> DatasetDescriptor {
        DatasetDescriptor { dataset_id: 3, name: "d".into(), num_identities: n, has_attributes: false, camera_count: 2 }
    }

    #[test]
    fn half_sizes() {
        let s = make_split(&desc(632), SplitProtocol::Half, 0).unwrap();
        assert_eq!((s.train_identities.len(), s.test_identities.len()), (316, 316));
        let s = make_split(&desc(971), SplitProtocol::Half, 0).unwrap();
        assert_eq!((s.train_identities.len(), s.test_identities.len()), (485, 486));
    }

    #[test]
    fn fixed_count_disjoint_and_seeded() {
        let s = make_split(&desc(10), SplitProtocol::FixedTestCount(4), 7).unwrap();
        assert_eq!((s.train_identities.len(), s.test_identities.len()), (6, 4));
        assert!(s.test_identities.iter().all(|i| !s.train_identities.contains(i)));
        assert_eq!(s, make_split(&desc(10), SplitProtocol::FixedTestCount(4), 7).unwrap());
        assert!(matches!(
            make_split(&desc(3), SplitProtocol::FixedTestCount(4), 0),
            Err(Error::TooFewIdentities { needed: 4, available: 3 })
        ));
    }
}
