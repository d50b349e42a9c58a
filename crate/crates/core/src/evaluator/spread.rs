//! Intra-class compactness of a set of signatures.

use std::collections::BTreeMap;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::matcher::SignatureStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    /// Mean Euclidean distance from each signature to its identity centroid.
    pub intra: f64,
    /// Mean Euclidean distance from each signature to the global centroid.
    pub total: f64,
}

impl Spread {
    /// `intra / total`; insensitive to a global rescaling of the signatures.
    pub fn ratio(&self) -> f64 {
        if self.total > 0.0 {
            self.intra / self.total
        } else {
            0.0
        }
    }
}

fn distance(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn signature_spread(store: &SignatureStore) -> Result<Spread> {
    ensure!(!store.is_empty(), Error::InvalidArgument("spread of an empty store".into()));
    let rows: Vec<Array1<f64>> = (0..store.len()).map(|r| store.vector(r).iter().map(|&v| v as f64).collect()).collect();
    let mut sums: BTreeMap<usize, (Array1<f64>, usize)> = BTreeMap::new();
    for (row, &id) in rows.iter().zip(store.global_identities()) {
        let e = sums.entry(id).or_insert_with(|| (Array1::zeros(store.dim()), 0));
        e.0 += row;
        e.1 += 1;
    }
    let centroids: BTreeMap<usize, Array1<f64>> = sums.into_iter().map(|(id, (s, n))| (id, s / n as f64)).collect();
    let global = rows.iter().fold(Array1::zeros(store.dim()), |acc, r| acc + r) / rows.len() as f64;
    let n = rows.len() as f64;
    let intra = rows.iter().zip(store.global_identities()).map(|(r, id)| distance(r, &centroids[id])).sum::<f64>() / n;
    let total = rows.iter().map(|r| distance(r, &global)).sum::<f64>() / n;
    Ok(Spread { intra, total })
}
