use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::backbone::Pooling;
use crate::data::AttributeSchema;
use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    /// Stride-2 3×3 conv blocks with ReLU, then pooling.
    TinyCnn {
        channels: Vec<usize>,
        #[serde(default)]
        pool: Pooling,
    },
    /// A user-supplied [`Backbone`](super::Backbone) implementation.
    ExternalPretrained { name: String, feature_dim: usize },
}

impl Default for BackboneKind {
    fn default() -> Self {
        BackboneKind::TinyCnn { channels: vec![16, 32, 64], pool: Pooling::Average }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub backbone: BackboneKind,
    pub input_height: usize,
    pub input_width: usize,
    pub input_channels: usize,
    /// Size of the FC1 signature layer.
    pub signature_dim: usize,
    /// Size of the FC2 attribute layer.
    pub fc2_dim: usize,
    pub num_identities: usize,
    pub attribute_schema: AttributeSchema,
    /// Probability of keeping a unit in the dropout before FC1/FC2.
    pub dropout_keep: f64,
    /// Block attribute gradients from flowing through FC2 into the backbone.
    #[serde(default)]
    pub fc2_stop_gradient: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneKind::default(),
            input_height: 32,
            input_width: 16,
            input_channels: 3,
            signature_dim: 4096,
            fc2_dim: 100,
            num_identities: 1,
            attribute_schema: AttributeSchema::pedestrian(),
            dropout_keep: 0.8,
            fc2_stop_gradient: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.signature_dim >= 1, Error::InvalidArgument("signature_dim must be at least 1".into()));
        ensure!(self.fc2_dim >= 1, Error::InvalidArgument("fc2_dim must be at least 1".into()));
        ensure!(self.num_identities >= 1, Error::InvalidArgument("num_identities must be at least 1".into()));
        ensure!(
            self.dropout_keep > 0.0 && self.dropout_keep <= 1.0,
            Error::InvalidArgument(format!("dropout_keep must lie in (0, 1], got {}", self.dropout_keep))
        );
        ensure!(
            self.input_height >= 1 && self.input_width >= 1 && self.input_channels >= 1,
            Error::InvalidArgument("input dimensions must be positive".into())
        );
        if let BackboneKind::TinyCnn { channels, .. } = &self.backbone {
            ensure!(
                !channels.is_empty() && channels.iter().all(|&c| c > 0),
                Error::InvalidArgument("tiny_cnn needs at least one positive channel count".into())
            );
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        hex::encode(self.digest_bytes())
    }

    pub fn digest_bytes(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).into()
    }

    /// Name of the first top-level field that differs, if any.
    pub(crate) fn first_difference(&self, other: &Self, skip: &[&str]) -> Option<(String, String, String)> {
        let a = serde_json::to_value(self).ok()?;
        let b = serde_json::to_value(other).ok()?;
        let (a, b) = (a.as_object()?, b.as_object()?);
        for (k, va) in a {
            if skip.contains(&k.as_str()) {
                continue;
            }
            let vb = b.get(k).cloned().unwrap_or(serde_json::Value::Null);
            if *va != vb {
                return Some((k.clone(), va.to_string(), vb.to_string()));
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!(c.signature_dim, 4096);
        assert_eq!(c.fc2_dim, 100);
        assert_eq!(c.dropout_keep, 0.8);
    }

    #[test]
    fn invalid_values() {
        for bad in [
            ModelConfig { dropout_keep: 0.0, ..Default::default() },
            ModelConfig { dropout_keep: 1.1, ..Default::default() },
            ModelConfig { signature_dim: 0, ..Default::default() },
            ModelConfig { backbone: BackboneKind::TinyCnn { channels: vec![], pool: Pooling::Average }, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn digest_and_difference() {
        let a = ModelConfig::default();
        let b = ModelConfig { signature_dim: 64, ..a.clone() };
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.first_difference(&b, &[]).unwrap().0, "signature_dim");
        assert!(a.first_difference(&a, &[]).is_none());
    }
}
