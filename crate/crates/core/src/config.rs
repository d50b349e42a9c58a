//! Declarative run configuration (TOML).
//!
//! ```toml
//! seed = 0
//!
//! [data]
//! kind = "synthetic"          # or "manifests" with `paths`, `image_height`, `image_width`
//! num_datasets = 3
//!
//! [split]
//! protocol = "half"           # or { fixed_test_count = 100 }
//! per_dataset = { CUHK03 = { fixed_test_count = 100 } }
//!
//! [model]
//! backbone = { tiny_cnn = { channels = [16, 32, 64] } }
//! signature_dim = 4096
//!
//! [train]                     # Hyperparameters
//! alpha = 0.06
//!
//! [plan]
//! stage2 = ["with_attributes", "without_attributes"]
//!
//! [eval]                      # EvalOptions
//! trials = 10
//! ```
//!
//! Every section and field is optional; unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SyntheticConfig;
use crate::error::{ensure, Error, Result};
use crate::evaluator::{EvalOptions, SplitProtocol};
use crate::model::BackboneKind;
use crate::trainer::Hyperparameters;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    Synthetic(SyntheticConfig),
    Manifests {
        /// Manifest files; relative paths resolve against the config file.
        paths: Vec<PathBuf>,
        image_height: usize,
        image_width: usize,
    },
}

impl Default for DataConfig {
    fn default() -> Self {
        Self::Synthetic(SyntheticConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub protocol: SplitProtocol,
    /// Split seed; the run seed when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Protocol overrides by dataset name.
    pub per_dataset: BTreeMap<String, SplitProtocol>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { protocol: SplitProtocol::Half, seed: None, per_dataset: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub backbone: BackboneKind,
    pub signature_dim: usize,
    pub fc2_dim: usize,
    pub fc2_stop_gradient: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { backbone: BackboneKind::default(), signature_dim: 4096, fc2_dim: 100, fc2_stop_gradient: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage2Variant {
    WithAttributes,
    WithoutAttributes,
}

impl Stage2Variant {
    pub fn attributes_enabled(self) -> bool {
        self == Self::WithAttributes
    }

    /// Output directory name of this variant.
    pub fn dir_name(self) -> &'static str {
        match self {
            Self::WithAttributes => "stage2-attributes",
            Self::WithoutAttributes => "stage2-plain",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanConfig {
    /// Stage-2 runs started from the stage-1 result, in order.
    pub stage2: Vec<Stage2Variant>,
    /// Steps between checkpoint writes; 0 writes only at stage end.
    pub checkpoint_every: usize,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self { stage2: vec![Stage2Variant::WithAttributes], checkpoint_every: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub split: SplitConfig,
    pub model: ModelSection,
    pub train: Hyperparameters,
    pub plan: PlanConfig,
    pub eval: EvalOptions,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse a file; relative manifest paths are resolved against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        if let DataConfig::Manifests { paths, .. } = &mut cfg.data {
            let base = path.parent().unwrap_or(Path::new("."));
            for p in paths.iter_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        match &self.data {
            DataConfig::Synthetic(s) => s.validate()?,
            DataConfig::Manifests { paths, image_height, image_width } => {
                ensure!(!paths.is_empty(), Error::Config("no manifest paths given".into()));
                ensure!(*image_height > 0 && *image_width > 0, Error::Config("image size must be positive".into()));
            }
        }
        ensure!(self.model.signature_dim > 0, Error::Config("signature_dim must be positive".into()));
        ensure!(self.model.fc2_dim > 0, Error::Config("fc2_dim must be positive".into()));
        ensure!(self.eval.trials > 0, Error::Config("eval.trials must be positive".into()));
        ensure!(self.eval.min_support > 0, Error::Config("eval.min_support must be positive".into()));
        let mut seen = self.plan.stage2.clone();
        seen.dedup();
        ensure!(seen.len() == self.plan.stage2.len(), Error::Config("repeated stage-2 variant".into()));
        Ok(())
    }

    pub fn split_seed(&self) -> u64 {
        self.split.seed.unwrap_or(self.seed)
    }

    /// The α grid: one config per α, each with both stage-2 variants.
    pub fn alpha_grid(&self, alphas: &[f64]) -> Vec<RunConfig> {
        alphas
            .iter()
            .map(|&alpha| {
                let mut c = self.clone();
                c.train.alpha = alpha;
                c.plan.stage2 = vec![Stage2Variant::WithAttributes, Stage2Variant::WithoutAttributes];
                c
            })
            .collect()
    }
}
