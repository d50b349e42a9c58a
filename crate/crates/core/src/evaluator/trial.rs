//! Cross-camera single-shot probe/gallery trials.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::{ensure, Error, Result};
use crate::rng::{derive_seed, stream_rng, TAG_TRIAL};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeGalleryTrial {
    pub probes: Vec<u64>,
    /// One image per identity, in ascending identity order.
    pub gallery: Vec<u64>,
    /// Global identity of each probe.
    pub probe_identities: Vec<usize>,
}

/// Group samples by identity and camera.
fn by_identity(samples: &[&Sample]) -> BTreeMap<usize, BTreeMap<u32, Vec<u64>>> {
    let mut groups: BTreeMap<usize, BTreeMap<u32, Vec<u64>>> = BTreeMap::new();
    for s in samples {
        groups.entry(s.global_identity).or_default().entry(s.camera_id).or_default().push(s.sample_id);
    }
    groups
}

/// Samples whose identity was seen by at least two cameras.
pub fn multi_camera<'a>(samples: &[&'a Sample]) -> Vec<&'a Sample> {
    let groups = by_identity(samples);
    samples.iter().copied().filter(|s| groups[&s.global_identity].len() >= 2).collect()
}

/// For each identity pick a probe image from a random camera and a gallery
/// image from a different random camera.
pub fn make_trial(samples: &[&Sample], seed: u64) -> Result<ProbeGalleryTrial> {
    let groups = by_identity(samples);
    let single: Vec<usize> = groups.iter().filter(|(_, cams)| cams.len() < 2).map(|(&id, _)| id).collect();
    ensure!(single.is_empty(), Error::SingleCamera(single));
    let mut rng = stream_rng(seed, &[]);
    let mut trial = ProbeGalleryTrial { probes: vec![], gallery: vec![], probe_identities: vec![] };
    for (&id, cams) in &groups {
        let cams: Vec<&Vec<u64>> = cams.values().collect();
        let p = rng.random_range(0..cams.len());
        let mut g = rng.random_range(0..cams.len() - 1);
        if g >= p {
            g += 1;
        }
        trial.probes.push(*cams[p].choose(&mut rng).expect("camera groups are non-empty"));
        trial.gallery.push(*cams[g].choose(&mut rng).expect("camera groups are non-empty"));
        trial.probe_identities.push(id);
    }
    Ok(trial)
}

/// `count` independent trials with seeds derived from `seed`.
pub fn make_trials(samples: &[&Sample], count: usize, seed: u64) -> Result<Vec<ProbeGalleryTrial>> {
    (0..count as u64).map(|t| make_trial(samples, derive_seed(seed, &[TAG_TRIAL, t]))).collect()
}

#[cfg(test)]
mod tests {
    use ndarray::Array3;

    use super::*;
    use crate::data::Split;

    pub(crate) fn sample(id: u64, identity: usize, camera: u32) -> Sample {
        Sample {
            sample_id: id,
            image: Array3::zeros((1, 1, 1)),
            local_identity: identity,
            global_identity: identity,
            dataset_id: 0,
            camera_id: camera,
            split: Split::Test,
            attributes: None,
        }
    }

    #[test]
    fn two_by_two_trial_shape() {
        let s = [sample(0, 0, 0), sample(1, 0, 1), sample(2, 1, 0), sample(3, 1, 1)];
        let refs: Vec<&Sample> = s.iter().collect();
        for seed in 0..20 {
            let t = make_trial(&refs, seed).unwrap();
            assert_eq!(t.probe_identities, vec![0, 1]);
            for (p, g) in t.probes.iter().zip(&t.gallery) {
                assert_ne!(s[*p as usize].camera_id, s[*g as usize].camera_id);
                assert_eq!(s[*p as usize].global_identity, s[*g as usize].global_identity);
            }
        }
        assert_eq!(make_trial(&refs, 4).unwrap(), make_trial(&refs, 4).unwrap());
    }

    #[test]
    fn single_camera_identities_listed() {
        let s = [sample(0, 0, 0), sample(1, 0, 1), sample(2, 5, 0), sample(3, 5, 0), sample(4, 6, 1)];
        let refs: Vec<&Sample> = s.iter().collect();
        match make_trial(&refs, 0) {
            Err(Error::SingleCamera(ids)) => assert_eq!(ids, vec![5, 6]),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(multi_camera(&refs).len(), 2);
    }
}
