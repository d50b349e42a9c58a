//! Frequency-weighted softmax cross-entropy over the merged identity space.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::weights::LossWeights;
use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone)]
pub struct IdentityLoss {
    /// Batch mean of the weighted per-sample losses.
    pub value: f64,
    pub per_sample: Vec<f64>,
    /// d value / d logits.
    pub grad: Array2<f64>,
}

/// Numerically stable softmax and log-softmax of one row.
pub(crate) fn softmax_row(z: ArrayView1<f64>) -> (Array1<f64>, Array1<f64>) {
    let max = z.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let shifted = z.mapv(|v| v - max);
    let lse = shifted.mapv(f64::exp).sum().ln();
    let log_p = shifted.mapv(|v| v - lse);
    (log_p.mapv(f64::exp), log_p)
}

pub fn identity_loss(logits: ArrayView2<f64>, labels: &[usize], weights: &LossWeights) -> Result<IdentityLoss> {
    let (n, k) = logits.dim();
    ensure!(
        k == weights.num_identities(),
        Error::Shape(format!("{k} identity logits for {} classes", weights.num_identities()))
    );
    ensure!(n == labels.len(), Error::Shape(format!("{n} logit rows for {} labels", labels.len())));
    ensure!(n > 0, Error::Shape("empty batch".into()));
    ensure!(logits.iter().all(|v| v.is_finite()), Error::NonFinite("identity logits".into()));

    let mut per_sample = Vec::with_capacity(n);
    let mut grad = Array2::zeros((n, k));
    let scale = 1.0 / n as f64;
    for (i, &y) in labels.iter().enumerate() {
        ensure!(y < k, Error::LabelOutOfRange { label: y, classes: k });
        let w = weights.identity_class_weights[y];
        let (p, log_p) = softmax_row(logits.row(i));
        per_sample.push(-w * log_p[y]);
        let mut g = grad.row_mut(i);
        g.assign(&(p * (w * scale)));
        g[y] -= w * scale;
    }
    let value = per_sample.iter().sum::<f64>() * scale;
    Ok(IdentityLoss { value, per_sample, grad })
}
