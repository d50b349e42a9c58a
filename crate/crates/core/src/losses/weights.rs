use serde::{Deserialize, Serialize};

use crate::data::DatasetRegistry;
use crate::error::{ensure, Error, Result};

/// Term weights of the training objective plus per-class reweighting
/// tables. Class weights are reciprocal training frequencies; classes that
/// never occur get weight 0 and drop out of every sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub lambda: f64,
    pub identity_class_weights: Vec<f64>,
    pub attribute_class_weights: Vec<Vec<f64>>,
}

fn reciprocal(counts: &[usize]) -> Vec<f64> {
    counts.iter().map(|&c| if c == 0 { 0.0 } else { 1.0 / c as f64 }).collect()
}

impl LossWeights {
    pub fn from_counts(
        alpha: f64,
        lambda: f64,
        class_counts: &[usize],
        attribute_counts: &[Vec<usize>],
    ) -> Result<Self> {
        ensure!(
            alpha >= 0.0 && alpha.is_finite(),
            Error::InvalidArgument(format!("alpha must be finite and nonnegative, got {alpha}"))
        );
        ensure!(
            lambda >= 0.0 && lambda.is_finite(),
            Error::InvalidArgument(format!("lambda must be finite and nonnegative, got {lambda}"))
        );
        Ok(Self {
            alpha,
            lambda,
            identity_class_weights: reciprocal(class_counts),
            attribute_class_weights: attribute_counts.iter().map(|c| reciprocal(c)).collect(),
        })
    }

    pub fn from_registry(registry: &DatasetRegistry, alpha: f64, lambda: f64) -> Result<Self> {
        Self::from_counts(alpha, lambda, registry.class_counts(), &registry.attribute_counts())
    }

    pub fn num_identities(&self) -> usize {
        self.identity_class_weights.len()
    }
}
