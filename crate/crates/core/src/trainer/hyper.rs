//! Training hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::optim::AdamConfig;

/// The center-loss weights explored in the α grid.
pub const ALPHA_GRID: [f64; 4] = [0.0, 0.05, 0.06, 0.1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Stage {
    /// Identity and center losses at the higher learning rate.
    One = 1,
    /// Continuation at the lower learning rate, optionally with attributes.
    Two = 2,
}

impl Stage {
    pub fn number(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for Stage {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Self::One),
            2 => Ok(Self::Two),
            _ => Err(Error::Config(format!("stage must be 1 or 2, got {v}"))),
        }
    }
}

impl From<Stage> for u8 {
    fn from(s: Stage) -> u8 {
        s.number()
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.number())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hyperparameters {
    /// Keep probability of the dropout after the backbone.
    pub dropout_keep: f64,
    pub l2_regularization: f64,
    pub batch_size: usize,
    /// Weight of the attribute losses when enabled.
    pub lambda: f64,
    /// Center update rate.
    pub cs_alpha: f64,
    /// Weight of the center loss.
    pub alpha: f64,
    pub stage1_lr: f64,
    pub stage2_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Hard caps on the length of each stage.
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    /// Steps between training rank-1 evaluations; 0 disables them.
    pub log_every: usize,
    /// Trials averaged by each training rank-1 evaluation.
    pub log_trials: usize,
    /// Stop a stage once this many consecutive evaluations fail to beat the
    /// earlier best by more than `plateau_min_delta`; 0 runs to the cap.
    pub plateau_window: usize,
    pub plateau_min_delta: f64,
    pub freeze_backbone: bool,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            dropout_keep: 0.8,
            l2_regularization: 0.001,
            batch_size: 64,
            lambda: 100.0,
            cs_alpha: 0.9,
            alpha: 0.06,
            stage1_lr: 1e-4,
            stage2_lr: 1e-6,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            stage1_epochs: 100,
            stage2_epochs: 20,
            log_every: 100,
            log_trials: 2,
            plateau_window: 10,
            plateau_min_delta: 0.001,
            freeze_backbone: false,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("l2_regularization", self.l2_regularization),
            ("lambda", self.lambda),
            ("stage1_lr", self.stage1_lr),
            ("stage2_lr", self.stage2_lr),
            ("adam_epsilon", self.adam_epsilon),
        ];
        for (name, v) in positive {
            ensure!(v > 0.0 && v.is_finite(), Error::Config(format!("{name} must be positive, got {v}")));
        }
        ensure!(
            self.alpha >= 0.0 && self.alpha.is_finite(),
            Error::Config(format!("alpha must be non-negative, got {}", self.alpha))
        );
        ensure!(
            self.plateau_min_delta >= 0.0,
            Error::Config(format!("plateau_min_delta must be non-negative, got {}", self.plateau_min_delta))
        );
        for (name, v) in [("dropout_keep", self.dropout_keep), ("cs_alpha", self.cs_alpha)] {
            ensure!(v > 0.0 && v <= 1.0, Error::Config(format!("{name} must lie in (0, 1], got {v}")));
        }
        for (name, v) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            ensure!((0.0..1.0).contains(&v), Error::Config(format!("{name} must lie in [0, 1), got {v}")));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("stage1_epochs", self.stage1_epochs),
            ("stage2_epochs", self.stage2_epochs),
            ("log_trials", self.log_trials),
        ] {
            ensure!(v > 0, Error::Config(format!("{name} must be positive")));
        }
        Ok(())
    }

    pub fn learning_rate(&self, stage: Stage) -> f64 {
        match stage {
            Stage::One => self.stage1_lr,
            Stage::Two => self.stage2_lr,
        }
    }

    pub fn epochs(&self, stage: Stage) -> usize {
        match stage {
            Stage::One => self.stage1_epochs,
            Stage::Two => self.stage2_epochs,
        }
    }

    pub fn adam(&self, stage: Stage) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate(stage),
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
            l2: self.l2_regularization,
        }
    }

    /// Name of the first field that differs from `other`, ignoring `skip`.
    pub(crate) fn first_difference(&self, other: &Self, skip: &[&str]) -> Option<(String, String, String)> {
        let a = serde_json::to_value(self).ok()?;
        let b = serde_json::to_value(other).ok()?;
        a.as_object()?.iter().find_map(|(k, va)| {
            let vb = &b[k];
            (!skip.contains(&k.as_str()) && va != vb).then(|| (k.clone(), va.to_string(), vb.to_string()))
        })
    }
}
