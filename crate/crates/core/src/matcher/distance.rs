//! Cosine distance and gallery ranking.

use serde::{Deserialize, Serialize};

use super::store::SignatureStore;
use crate::error::{ensure, Error, Result};

/// `1 - <a, b> / (|a| |b|)`, accumulated in f64 and clamped to `[0, 2]`.
pub fn cosine_distance<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> Result<f64> {
    ensure!(a.len() == b.len(), Error::Shape(format!("vectors of length {} and {}", a.len(), b.len())));
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y): (f64, f64) = (x.into(), y.into());
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    ensure!(dot.is_finite() && na.is_finite() && nb.is_finite(), Error::NonFinite("signature".into()));
    ensure!(na > 0.0 && nb > 0.0, Error::ZeroNorm);
    // sqrt(na * nb) rather than sqrt(na) * sqrt(nb): exact for a == b.
    Ok((1.0 - dot / (na * nb).sqrt()).clamp(0.0, 2.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub probe_sample_id: Option<u64>,
    /// Gallery rows, nearest first.
    pub gallery_indices: Vec<usize>,
    pub gallery_sample_ids: Vec<u64>,
    pub distances: Vec<f64>,
}

/// Rank every gallery row by ascending distance to `probe`; equal distances
/// keep gallery order.
pub fn rank(probe: &[f32], gallery: &SignatureStore) -> Result<RankedResult> {
    ensure!(!gallery.is_empty(), Error::EmptyGallery);
    ensure!(
        probe.len() == gallery.dim(),
        Error::Shape(format!("probe has dimension {}, gallery {}", probe.len(), gallery.dim()))
    );
    let dist: Vec<f64> = (0..gallery.len())
        .map(|i| cosine_distance(probe, gallery.vector(i)))
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..gallery.len()).collect();
    order.sort_by(|&i, &j| dist[i].total_cmp(&dist[j]));
    Ok(RankedResult {
        probe_sample_id: None,
        gallery_sample_ids: order.iter().map(|&i| gallery.sample_ids()[i]).collect(),
        distances: order.iter().map(|&i| dist[i]).collect(),
        gallery_indices: order,
    })
}

/// Rank using a stored row as the probe.
pub fn rank_sample(probes: &SignatureStore, probe_sample_id: u64, gallery: &SignatureStore) -> Result<RankedResult> {
    let row = probes.row_of(probe_sample_id).ok_or(Error::MissingSignature(probe_sample_id))?;
    let mut r = rank(probes.vector(row), gallery)?;
    r.probe_sample_id = Some(probe_sample_id);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(rows: &[[f32; 2]]) -> SignatureStore {
        let flat: Vec<f32> = rows.iter().flatten().copied().collect();
        let n = rows.len();
        SignatureStore::new(
            ndarray::Array2::from_shape_vec((n, 2), flat).unwrap(),
            (0..n as u64).map(|i| 10 + i).collect(),
            (0..n).collect(),
            vec![0; n],
            [0; 32],
        )
        .unwrap()
    }

    #[test]
    fn reference_values() {
        assert_eq!(cosine_distance(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 1.0);
        assert_eq!(cosine_distance(&[1.5, -2.0], &[-1.5, 2.0]).unwrap(), 2.0);
    }

    #[test]
    fn zero_norm_is_an_error() {
        assert!(matches!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroNorm)));
        assert!(matches!(cosine_distance(&[1.0f32], &[0.0f32]), Err(Error::ZeroNorm)));
    }

    #[test]
    fn hand_computed_ordering() {
        // Angles 90°, 45°, 0° from the probe (1, 0).
        let g = store(&[[0.0, 1.0], [1.0, 1.0], [2.0, 0.0]]);
        let r = rank(&[1.0, 0.0], &g).unwrap();
        assert_eq!(r.gallery_indices, vec![2, 1, 0]);
        assert_eq!(r.gallery_sample_ids, vec![12, 11, 10]);
        assert_eq!(r.distances[0], 0.0);
        assert!((r.distances[1] - (1.0 - 0.5f64.sqrt())).abs() < 1e-12);
        assert_eq!(r.distances[2], 1.0);
    }

    #[test]
    fn ties_keep_gallery_order() {
        let g = store(&[[1.0, 1.0], [0.0, 1.0], [2.0, 2.0], [1.0, 1.0]]);
        let r = rank(&[3.0, 3.0], &g).unwrap();
        assert_eq!(r.gallery_indices, vec![0, 2, 3, 1]);
    }

    #[test]
    fn empty_gallery_rejected() {
        let g = SignatureStore::empty(2, [0; 32]);
        assert!(matches!(rank(&[1.0, 0.0], &g), Err(Error::EmptyGallery)));
    }

    #[test]
    fn probe_in_gallery_ranks_first() {
        let g = store(&[[0.3, 1.0], [1.0, -0.2], [-0.5, 0.1]]);
        let r = rank_sample(&g, 11, &g).unwrap();
        assert_eq!(r.probe_sample_id, Some(11));
        assert_eq!(r.gallery_sample_ids[0], 11);
        assert_eq!(r.distances[0], 0.0);
    }
}
