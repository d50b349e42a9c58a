//! Full held-out evaluation and its JSON report.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::attributes::{attribute_average_precision, AttributeApReport};
use super::cmc::{cmc, CmcCurve};
use super::split::SplitSpec;
use super::trial::make_trials;
use crate::data::{AttributeAnnotation, DatasetRegistry, Sample};
use crate::error::{ensure, Error, Result};
use crate::matcher::{extract, forward_all};
use crate::model::Model;
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    pub trials: usize,
    pub trial_seed: u64,
    /// Truncate CMC curves to this rank; full gallery when absent.
    pub max_rank: Option<usize>,
    /// Minimum test occurrences for an attribute class to be scored.
    pub min_support: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { trials: 10, trial_seed: 0, max_rank: None, min_support: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEval {
    pub dataset: String,
    pub dataset_id: u32,
    pub test_identities: usize,
    pub cmc: Vec<f64>,
    pub rank1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean of the per-dataset curves, truncated to the smallest gallery.
    pub cmc: Vec<f64>,
    pub rank1: f64,
    pub trials: usize,
    pub per_dataset: Vec<DatasetEval>,
    pub per_attribute_ap: BTreeMap<String, Option<f64>>,
    pub mean_ap: Option<f64>,
    pub attributes: Option<AttributeApReport>,
    pub splits: Vec<SplitSpec>,
    pub trial_seed: u64,
    pub model_digest: String,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

/// Rank-1 and CMC per dataset over cross-camera trials of its test
/// identities.
pub fn evaluate_reid(model: &Model, samples: &[&Sample], opts: &EvalOptions) -> Result<Vec<(u32, CmcCurve)>> {
    ensure!(opts.trials >= 1, Error::InvalidArgument("at least one trial is required".into()));
    let store = extract(model, samples)?;
    let mut datasets: Vec<u32> = samples.iter().map(|s| s.dataset_id).collect();
    datasets.sort_unstable();
    datasets.dedup();
    datasets
        .into_iter()
        .map(|d| {
            let subset: Vec<&Sample> = samples.iter().copied().filter(|s| s.dataset_id == d).collect();
            let trials = make_trials(&subset, opts.trials, derive_seed(opts.trial_seed, &[d as u64]))?;
            Ok((d, cmc(&trials, &store, opts.max_rank)?))
        })
        .collect()
}

/// Attribute AP over the annotated subset of `samples`; `None` when the
/// model has no attribute heads or nothing is annotated.
pub fn evaluate_attributes(model: &Model, samples: &[&Sample], min_support: usize) -> Result<Option<AttributeApReport>> {
    let schema = &model.config().attribute_schema;
    let annotated: Vec<&Sample> = samples.iter().copied().filter(|s| s.attributes.is_some()).collect();
    if schema.is_empty() || annotated.is_empty() {
        return Ok(None);
    }
    let out = forward_all(model, &annotated)?;
    let ann: Vec<AttributeAnnotation> = annotated.iter().map(|s| s.attributes.clone().expect("filtered")).collect();
    attribute_average_precision(&out.attribute_logits, &ann, schema, min_support).map(Some)
}

/// Evaluate on the registry's test split.
pub fn evaluate(model: &Model, registry: &DatasetRegistry, splits: &[SplitSpec], opts: &EvalOptions) -> Result<EvalReport> {
    let test: Vec<&Sample> = registry.test_samples().collect();
    ensure!(!test.is_empty(), Error::InvalidArgument("registry has no test samples".into()));
    let curves = evaluate_reid(model, &test, opts)?;

    let per_dataset: Vec<DatasetEval> = curves
        .iter()
        .map(|(d, c)| {
            let desc = registry.descriptors().iter().find(|x| x.dataset_id == *d).expect("sample dataset is registered");
            let ids: std::collections::BTreeSet<usize> =
                test.iter().filter(|s| s.dataset_id == *d).map(|s| s.global_identity).collect();
            DatasetEval {
                dataset: desc.name.clone(),
                dataset_id: *d,
                test_identities: ids.len(),
                cmc: c.values.clone(),
                rank1: c.rank1(),
            }
        })
        .collect();
    let len = per_dataset.iter().map(|d| d.cmc.len()).min().unwrap_or(0);
    let cmc: Vec<f64> =
        (0..len).map(|k| per_dataset.iter().map(|d| d.cmc[k]).sum::<f64>() / per_dataset.len() as f64).collect();

    let attributes = evaluate_attributes(model, &test, opts.min_support)?;
    let per_attribute_ap = attributes
        .as_ref()
        .map(|a| a.attributes.iter().map(|x| (x.name.clone(), x.ap)).collect())
        .unwrap_or_default();

    Ok(EvalReport {
        rank1: cmc.first().copied().unwrap_or(0.0),
        cmc,
        trials: opts.trials,
        per_dataset,
        per_attribute_ap,
        mean_ap: attributes.as_ref().and_then(|a| a.mean_ap),
        attributes,
        splits: splits.to_vec(),
        trial_seed: opts.trial_seed,
        model_digest: model.digest(),
    })
}
