//! Cumulative matching characteristic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::trial::ProbeGalleryTrial;
use crate::error::{ensure, Error, Result};
use crate::matcher::{rank_sample, SignatureStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmcCurve {
    /// `values[k]`: fraction of probes whose match ranks within the top k+1.
    pub values: Vec<f64>,
    pub trials: usize,
}

impl CmcCurve {
    pub fn rank1(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    /// Value at 1-based rank `k`, saturating at the last entry.
    pub fn at(&self, k: usize) -> f64 {
        let i = k.max(1).min(self.values.len()) - 1;
        self.values.get(i).copied().unwrap_or(0.0)
    }
}

/// 1-based rank of each probe's true match in the trial gallery.
pub fn match_ranks(trial: &ProbeGalleryTrial, store: &SignatureStore) -> Result<Vec<usize>> {
    let gallery = store.subset(&trial.gallery)?;
    trial
        .probes
        .iter()
        .zip(&trial.probe_identities)
        .map(|(&probe, &identity)| {
            let ranked = rank_sample(store, probe, &gallery)?;
            ranked
                .gallery_indices
                .iter()
                .position(|&g| gallery.global_identities()[g] == identity)
                .map(|p| p + 1)
                .ok_or_else(|| Error::InvalidArgument(format!("identity {identity} has no gallery image")))
        })
        .collect()
}

/// CMC over `trials`, pooling probes across trials. With equally sized
/// trials this is the mean of the per-trial curves.
pub fn cmc(trials: &[ProbeGalleryTrial], store: &SignatureStore, max_rank: Option<usize>) -> Result<CmcCurve> {
    ensure!(!trials.is_empty(), Error::InvalidArgument("no trials".into()));
    let gallery_size = trials[0].gallery.len();
    ensure!(gallery_size > 0, Error::EmptyGallery);
    ensure!(
        trials.iter().all(|t| t.gallery.len() == gallery_size),
        Error::InvalidArgument("trials have different gallery sizes".into())
    );
    let len = max_rank.unwrap_or(gallery_size).clamp(1, gallery_size);
    let ranks: Vec<Vec<usize>> = trials.par_iter().map(|t| match_ranks(t, store)).collect::<Result<_>>()?;
    let mut hits = vec![0usize; len];
    let mut probes = 0usize;
    for r in ranks.iter().flatten() {
        probes += 1;
        for h in hits.iter_mut().skip(r - 1) {
            *h += 1;
        }
    }
    ensure!(probes > 0, Error::InvalidArgument("trials contain no probes".into()));
    Ok(CmcCurve { values: hits.iter().map(|&h| h as f64 / probes as f64).collect(), trials: trials.len() })
}

#[cfg(test)]
mod tests {
    use ndarray::Array2;

    use super::*;

    /// Identity i has probe id 100+i and gallery id 200+i.
    fn setup(probe_rows: &[[f32; 3]], gallery_rows: &[[f32; 3]]) -> (ProbeGalleryTrial, SignatureStore) {
        let n = probe_rows.len();
        let flat: Vec<f32> = probe_rows.iter().chain(gallery_rows).flatten().copied().collect();
        let ids: Vec<u64> = (0..n as u64).map(|i| 100 + i).chain((0..n as u64).map(|i| 200 + i)).collect();
        let ident: Vec<usize> = (0..n).chain(0..n).collect();
        let store = SignatureStore::new(
            Array2::from_shape_vec((2 * n, 3), flat).unwrap(),
            ids,
            ident,
            [vec![0; n], vec![1; n]].concat(),
            [0; 32],
        )
        .unwrap();
        let trial = ProbeGalleryTrial {
            probes: (0..n as u64).map(|i| 100 + i).collect(),
            gallery: (0..n as u64).map(|i| 200 + i).collect(),
            probe_identities: (0..n).collect(),
        };
        (trial, store)
    }

    #[test]
    fn one_hot_signatures_are_perfect() {
        let e = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let (t, s) = setup(&e, &e);
        assert_eq!(cmc(&[t], &s, None).unwrap().values, vec![1.0; 3]);
    }

    #[test]
    fn adversarial_match_last() {
        // Each probe is closest to every wrong gallery entry.
        let p = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let g = [[-1.0, 1.0, 1.0], [1.0, -1.0, 1.0], [1.0, 1.0, -1.0]];
        let (t, s) = setup(&p, &g);
        assert_eq!(match_ranks(&t, &s).unwrap(), vec![3, 3, 3]);
        assert_eq!(cmc(&[t], &s, None).unwrap().values, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn identical_trials_average_exactly() {
        let p = [[1.0, 0.2, 0.0], [0.3, 1.0, 0.1], [1.0, 0.1, 0.2]];
        let g = [[0.0, 1.0, 0.0], [0.1, 1.0, 0.3], [0.9, 0.0, 0.5]];
        let (t, s) = setup(&p, &g);
        let one = cmc(&[t.clone()], &s, None).unwrap();
        let many = cmc(&vec![t; 7], &s, None).unwrap();
        assert_eq!(one.values, many.values);
        assert_eq!(many.trials, 7);
    }

    #[test]
    fn missing_signature_reported() {
        let e = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let (mut t, s) = setup(&e, &e);
        t.probes[1] = 999;
        assert!(matches!(cmc(&[t], &s, None), Err(Error::MissingSignature(999))));
    }
}
