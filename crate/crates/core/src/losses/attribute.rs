//! Class-reweighted attribute losses: sigmoid cross-entropy for binary
//! attributes, softmax cross-entropy for categorical ones.

use ndarray::{Array1, ArrayView1};

use super::identity::softmax_row;
use super::weights::LossWeights;
use crate::data::{AttributeAnnotation, AttributeKind, AttributeSchema};
use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone)]
pub struct AttributeSampleLoss {
    /// Sum of `per_attribute`.
    pub value: f64,
    pub per_attribute: Vec<f64>,
    /// Gradient per head, same widths as the logits.
    pub grads: Vec<Array1<f64>>,
}

/// `softplus(z) - t*z`, the binary cross-entropy of logit `z` at target `t`.
fn sigmoid_xent(z: f64, t: f64) -> f64 {
    z.max(0.0) - t * z + (-z.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn attribute_loss_sample(
    logits: &[ArrayView1<f64>],
    annotation: &AttributeAnnotation,
    schema: &AttributeSchema,
    weights: &LossWeights,
) -> Result<AttributeSampleLoss> {
    ensure!(
        logits.len() == schema.len() && annotation.values().len() == schema.len(),
        Error::Annotation(format!(
            "{} heads and {} labels for {} attributes",
            logits.len(),
            annotation.values().len(),
            schema.len()
        ))
    );
    ensure!(
        weights.attribute_class_weights.len() == schema.len(),
        Error::Shape("attribute weight table does not match schema".into())
    );
    let mut per_attribute = Vec::with_capacity(schema.len());
    let mut grads = Vec::with_capacity(schema.len());
    for (l, entry) in schema.entries().iter().enumerate() {
        let z = logits[l];
        let d = annotation.values()[l];
        ensure!(
            z.len() == entry.head_width(),
            Error::Shape(format!("head `{}` has {} logits, expected {}", entry.name, z.len(), entry.head_width()))
        );
        ensure!(d < entry.cardinality, Error::Annotation(format!("`{}` = {d} out of range", entry.name)));
        ensure!(z.iter().all(|v| v.is_finite()), Error::NonFinite(format!("logits of `{}`", entry.name)));
        let w = weights.attribute_class_weights[l][d];
        match entry.kind {
            AttributeKind::Binary => {
                let t = d as f64;
                per_attribute.push(w * sigmoid_xent(z[0], t));
                grads.push(Array1::from_elem(1, w * (sigmoid(z[0]) - t)));
            }
            AttributeKind::Categorical => {
                let (p, log_p) = softmax_row(z);
                per_attribute.push(-w * log_p[d]);
                let mut g = p * w;
                g[d] -= w;
                grads.push(g);
            }
        }
    }
    Ok(AttributeSampleLoss { value: per_attribute.iter().sum(), per_attribute, grads })
}
