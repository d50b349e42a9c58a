//! Per-attribute average precision on held-out samples.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{AttributeAnnotation, AttributeKind, AttributeSchema};
use crate::error::{ensure, Error, Result};
use crate::losses::identity::softmax_row;

/// Precision averaged over the positions of the positives in the
/// score-descending order; equal scores keep input order. `None` without
/// positives.
pub fn average_precision(scores: &[f64], positives: &[bool]) -> Option<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &i) in order.iter().enumerate() {
        if positives[i] {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub class: usize,
    pub support: usize,
    /// `None` when support is below the threshold.
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeAp {
    pub name: String,
    /// AP of the positive class (binary) or mean AP over supported classes
    /// (categorical); `None` when excluded.
    pub ap: Option<f64>,
    pub classes: Vec<ClassAp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeApReport {
    pub attributes: Vec<AttributeAp>,
    /// Mean over reported attributes.
    pub mean_ap: Option<f64>,
    /// Attributes without any class meeting `min_support`.
    pub excluded: Vec<String>,
    pub min_support: usize,
}

/// `logits[l]` holds the head outputs of attribute `l` for every sample.
pub fn attribute_average_precision(
    logits: &[Array2<f64>],
    annotations: &[AttributeAnnotation],
    schema: &AttributeSchema,
    min_support: usize,
) -> Result<AttributeApReport> {
    ensure!(min_support >= 1, Error::InvalidArgument("min_support must be at least 1".into()));
    ensure!(
        logits.len() == schema.len(),
        Error::Shape(format!("{} attribute outputs for {} attributes", logits.len(), schema.len()))
    );
    let n = annotations.len();
    for (l, (out, entry)) in logits.iter().zip(schema.entries()).enumerate() {
        ensure!(
            out.dim() == (n, entry.head_width()),
            Error::Shape(format!("attribute {l} output {:?}, expected {:?}", out.dim(), (n, entry.head_width())))
        );
    }
    for a in annotations {
        a.validate(schema)?;
    }

    let mut attributes = Vec::with_capacity(schema.len());
    let mut excluded = Vec::new();
    for (l, entry) in schema.entries().iter().enumerate() {
        let labels: Vec<usize> = annotations.iter().map(|a| a.values()[l]).collect();
        let scored: Vec<(usize, Vec<f64>)> = match entry.kind {
            AttributeKind::Binary => vec![(1, logits[l].column(0).to_vec())],
            AttributeKind::Categorical => {
                let log_p: Vec<_> = logits[l].rows().into_iter().map(|r| softmax_row(r).1).collect();
                (0..entry.cardinality).map(|c| (c, log_p.iter().map(|lp| lp[c]).collect())).collect()
            }
        };
        let classes: Vec<ClassAp> = scored
            .into_iter()
            .map(|(class, scores)| {
                let positives: Vec<bool> = labels.iter().map(|&y| y == class).collect();
                let support = positives.iter().filter(|&&p| p).count();
                let ap = (support >= min_support).then(|| average_precision(&scores, &positives)).flatten();
                ClassAp { class, support, ap }
            })
            .collect();
        let supported: Vec<f64> = classes.iter().filter_map(|c| c.ap).collect();
        let ap = (!supported.is_empty()).then(|| supported.iter().sum::<f64>() / supported.len() as f64);
        if ap.is_none() {
            excluded.push(entry.name.clone());
        }
        attributes.push(AttributeAp { name: entry.name.clone(), ap, classes });
    }
    let reported: Vec<f64> = attributes.iter().filter_map(|a| a.ap).collect();
    let mean_ap = (!reported.is_empty()).then(|| reported.iter().sum::<f64>() / reported.len() as f64);
    Ok(AttributeApReport { attributes, mean_ap, excluded, min_support })
}

#[cfg(test)]
mod tests {
    use ndarray::{array, Array2};

    use super::*;
    use crate::data::{AttributeEntry, AttributeKind};

    #[test]
    fn hand_case() {
        let ap = average_precision(&[0.9, 0.8, 0.3, 0.2], &[true, false, true, false]).unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(average_precision(&[0.1, 0.2], &[false, false]), None);
    }

    fn schema() -> AttributeSchema {
        AttributeSchema::new(vec![
            AttributeEntry { name: "bag".into(), kind: AttributeKind::Binary, cardinality: 2 },
            AttributeEntry { name: "color".into(), kind: AttributeKind::Categorical, cardinality: 3 },
        ])
        .unwrap()
    }

    #[test]
    fn perfect_scores_give_one() {
        let s = schema();
        let labels = [[1, 0], [0, 1], [1, 1], [0, 2]];
        let ann: Vec<_> = labels.iter().map(|v| AttributeAnnotation::new(v.to_vec(), &s).unwrap()).collect();
        let bag = array![[3.0], [-2.0], [1.0], [-4.0]];
        let mut color = Array2::zeros((4, 3));
        for (i, v) in labels.iter().enumerate() {
            color[[i, v[1]]] = 5.0;
        }
        let r = attribute_average_precision(&[bag, color], &ann, &s, 1).unwrap();
        assert_eq!(r.mean_ap, Some(1.0));
        assert!(r.excluded.is_empty());
    }

    #[test]
    fn rare_classes_filtered() {
        let s = schema();
        let labels = [[0, 0], [0, 0], [0, 1], [0, 0]];
        let ann: Vec<_> = labels.iter().map(|v| AttributeAnnotation::new(v.to_vec(), &s).unwrap()).collect();
        let r = attribute_average_precision(&[Array2::zeros((4, 1)), Array2::zeros((4, 3))], &ann, &s, 2).unwrap();
        assert_eq!(r.excluded, vec!["bag".to_string()]);
        let color = &r.attributes[1];
        assert_eq!(color.classes.iter().map(|c| c.support).collect::<Vec<_>>(), vec![3, 1, 0]);
        assert_eq!(color.classes[1].ap, None);
        // All-equal scores keep input order: positives at 1, 2, 4.
        let expect = (1.0 + 1.0 + 0.75) / 3.0;
        assert!((color.ap.unwrap() - expect).abs() < 1e-15);
        assert_eq!(r.mean_ap, color.ap);
    }
}
