//! Masked multi-task objective: identity loss over every sample, center
//! loss over every sample, attribute losses only over annotated samples.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::attribute::attribute_loss_sample;
use super::center::{center_loss, Centers};
use super::identity::identity_loss;
use super::weights::LossWeights;
use crate::data::{AttributeAnnotation, AttributeSchema, Batch};
use crate::error::{ensure, Error, Result};

/// Network outputs the objective consumes.
#[derive(Debug, Clone, Copy)]
pub struct OutputsView<'a> {
    pub identity_logits: ArrayView2<'a, f64>,
    pub signatures: ArrayView2<'a, f64>,
    pub attribute_logits: &'a [Array2<f64>],
}

/// Supervision for one batch. `mask[i]` gates the attribute term of sample
/// i; a masked-out sample may still carry a label.
#[derive(Debug, Clone, Copy)]
pub struct Targets<'a> {
    pub identities: &'a [usize],
    pub mask: &'a [bool],
    pub attributes: &'a [Option<AttributeAnnotation>],
}

impl<'a> From<&'a Batch> for Targets<'a> {
    fn from(b: &'a Batch) -> Self {
        Self { identities: &b.global_identities, mask: &b.attribute_mask, attributes: &b.attribute_labels }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_id: f64,
    pub l_cs: f64,
    /// Masked batch sum of each attribute's loss.
    pub l_att_per_attribute: Vec<f64>,
    /// Attribute loss of each sample, zero where masked out.
    pub l_att_per_sample: Vec<f64>,
    pub l_att_total: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn recombine(&self) -> f64 {
        self.l_id + self.alpha * self.l_cs + self.lambda * self.l_att_total
    }
}

#[derive(Debug, Clone)]
pub struct LossGrads {
    pub identity_logits: Array2<f64>,
    pub signatures: Array2<f64>,
    pub attribute_logits: Vec<Array2<f64>>,
}

pub fn total_loss(
    outputs: OutputsView<'_>,
    targets: Targets<'_>,
    centers: &Centers,
    weights: &LossWeights,
    schema: &AttributeSchema,
) -> Result<(LossBreakdown, LossGrads)> {
    let n = targets.identities.len();
    ensure!(
        targets.mask.len() == n && targets.attributes.len() == n,
        Error::Shape("mask, attribute labels and identities differ in length".into())
    );
    ensure!(
        outputs.attribute_logits.len() == schema.len(),
        Error::Shape(format!("{} attribute heads for {} attributes", outputs.attribute_logits.len(), schema.len()))
    );
    for (head, entry) in outputs.attribute_logits.iter().zip(schema.entries()) {
        ensure!(
            head.dim() == (n, entry.head_width()),
            Error::Shape(format!("head `{}` has shape {:?}", entry.name, head.dim()))
        );
    }
    ensure!(
        weights.alpha.is_finite() && weights.lambda.is_finite(),
        Error::NonFinite("loss weights".into())
    );

    let id = identity_loss(outputs.identity_logits, targets.identities, weights)?;
    let cs = center_loss(outputs.signatures, targets.identities, centers)?;

    let mut att_grads: Vec<Array2<f64>> = outputs.attribute_logits.iter().map(|h| Array2::zeros(h.raw_dim())).collect();
    let mut per_attribute = vec![0.0; schema.len()];
    let mut per_sample = vec![0.0; n];
    let mut l_att_total = 0.0;
    for i in 0..n {
        if !targets.mask[i] {
            continue;
        }
        let ann = targets.attributes[i]
            .as_ref()
            .ok_or_else(|| Error::Annotation(format!("sample {i} is masked in but has no attribute labels")))?;
        let rows: Vec<_> = outputs.attribute_logits.iter().map(|h| h.row(i)).collect();
        let s = attribute_loss_sample(&rows, ann, schema, weights)?;
        for (l, v) in s.per_attribute.iter().enumerate() {
            per_attribute[l] += v;
            att_grads[l].row_mut(i).assign(&(&s.grads[l] * weights.lambda));
        }
        per_sample[i] = s.value;
        l_att_total += s.value;
    }

    let breakdown = LossBreakdown {
        l_id: id.value,
        l_cs: cs.value,
        l_att_per_attribute: per_attribute,
        l_att_per_sample: per_sample,
        l_att_total,
        alpha: weights.alpha,
        lambda: weights.lambda,
        total: id.value + weights.alpha * cs.value + weights.lambda * l_att_total,
    };
    let grads = LossGrads {
        identity_logits: id.grad,
        signatures: cs.grad * weights.alpha,
        attribute_logits: att_grads,
    };
    Ok((breakdown, grads))
}

#[cfg(test)]
mod tests {
    use ndarray::Array2;

    use super::*;
    use crate::data::AttributeSchema;

    fn fixture(n: usize, annotated: &[usize]) -> (Array2<f64>, Array2<f64>, Vec<Array2<f64>>, Vec<usize>, Vec<Option<AttributeAnnotation>>) {
        let schema = AttributeSchema::pedestrian();
        let k = 4;
        let d = 3;
        let logits = Array2::from_shape_fn((n, k), |(i, j)| ((i * 7 + j * 3) % 5) as f64 * 0.3 - 0.6);
        let sig = Array2::from_shape_fn((n, d), |(i, j)| ((i + 2 * j) % 4) as f64 * 0.5 - 0.7);
        let heads = schema
            .head_widths()
            .iter()
            .map(|&w| Array2::from_shape_fn((n, w), |(i, j)| ((3 * i + j) % 7) as f64 * 0.2 - 0.5))
            .collect();
        let ids = (0..n).map(|i| i % k).collect();
        let labels = (0..n)
            .map(|i| {
                annotated.contains(&i).then(|| {
                    let v = schema.entries().iter().map(|e| (i * 5 + 1) % e.cardinality).collect();
                    AttributeAnnotation::new(v, &schema).unwrap()
                })
            })
            .collect();
        (logits, sig, heads, ids, labels)
    }

    fn weights(alpha: f64, lambda: f64) -> LossWeights {
        let schema = AttributeSchema::pedestrian();
        let att: Vec<Vec<usize>> = schema.entries().iter().map(|e| (1..=e.cardinality).collect()).collect();
        LossWeights::from_counts(alpha, lambda, &[2, 3, 1, 4], &att).unwrap()
    }

    #[test]
    fn reduces_to_identity_term() {
        let (z, x, h, ids, labels) = fixture(6, &[0, 3]);
        let mask: Vec<bool> = labels.iter().map(Option::is_some).collect();
        let centers = Centers::zeros(4, 3);
        let out = OutputsView { identity_logits: z.view(), signatures: x.view(), attribute_logits: &h };
        let t = Targets { identities: &ids, mask: &mask, attributes: &labels };
        let (b, _) = total_loss(out, t, &centers, &weights(0.0, 0.0), &AttributeSchema::pedestrian()).unwrap();
        assert_eq!(b.total, b.l_id);

        let none = vec![false; 6];
        let t = Targets { identities: &ids, mask: &none, attributes: &labels };
        let (b, g) = total_loss(out, t, &centers, &weights(0.06, 100.0), &AttributeSchema::pedestrian()).unwrap();
        assert_eq!(b.total, b.l_id + 0.06 * b.l_cs);
        assert_eq!(b.l_att_total, 0.0);
        assert!(g.attribute_logits.iter().all(|a| a.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn nine_samples_three_annotated() {
        let annotated = [1, 4, 7];
        let (z, x, h, ids, labels) = fixture(9, &annotated);
        let mask: Vec<bool> = labels.iter().map(Option::is_some).collect();
        let schema = AttributeSchema::pedestrian();
        let w = weights(0.05, 100.0);
        let out = OutputsView { identity_logits: z.view(), signatures: x.view(), attribute_logits: &h };
        let t = Targets { identities: &ids, mask: &mask, attributes: &labels };
        let (b, _) = total_loss(out, t, &Centers::zeros(4, 3), &w, &schema).unwrap();
        let mut expected = 0.0;
        for &i in &annotated {
            let rows: Vec<_> = h.iter().map(|a| a.row(i)).collect();
            expected += attribute_loss_sample(&rows, labels[i].as_ref().unwrap(), &schema, &w).unwrap().value;
        }
        assert_eq!(b.l_att_total, expected);
        assert_eq!(b.l_att_per_sample.iter().filter(|&&v| v > 0.0).count(), 3);
        assert!((b.total - b.recombine()).abs() <= 1e-12 * b.total.abs());
    }

    #[test]
    fn mask_without_label_rejected() {
        let (z, x, h, ids, labels) = fixture(3, &[]);
        let mask = vec![true, false, false];
        let out = OutputsView { identity_logits: z.view(), signatures: x.view(), attribute_logits: &h };
        let t = Targets { identities: &ids, mask: &mask, attributes: &labels };
        assert!(total_loss(out, t, &Centers::zeros(4, 3), &weights(0.0, 1.0), &AttributeSchema::pedestrian()).is_err());
    }
}
