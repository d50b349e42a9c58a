//! Backbone → dropout → {FC1 signature, FC2 attribute} → classifier heads.
//!
//! FC1 and FC2 are parallel affine branches on the same dropped backbone
//! feature. The identity classifier reads FC1; one classifier per attribute
//! reads FC2.

use ndarray::{Array2, ArrayD, ArrayView2, ArrayView4, Axis, Ix1, Ix2};
use rand::RngCore;
use sha2::{Digest, Sha256};

use super::backbone::{uniform_init, Backbone, BackboneCache, TinyCnn};
use super::config::{BackboneKind, ModelConfig};
use super::layers::dropout_mask;
use super::param::{Param, ParamFilter, ParamGroup, ParamRole};
use crate::data::AttributeSchema;
use crate::error::{ensure, Error, Result};
use crate::losses::LossGrads;

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// FC1 activations, N×D.
    pub signatures: Array2<f64>,
    /// N×K.
    pub identity_logits: Array2<f64>,
    /// One N×width matrix per attribute.
    pub attribute_logits: Vec<Array2<f64>>,
}

#[derive(Debug)]
pub struct ForwardCache {
    backbone: BackboneCache,
    mask: Option<Array2<f64>>,
    dropped: Array2<f64>,
    fc2: Array2<f64>,
    signatures: Array2<f64>,
}

/// Parameter gradients in [`Model::parameters`] order.
pub type Gradients = Vec<ArrayD<f64>>;

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    backbone: Box<dyn Backbone>,
    heads: Vec<Param>,
}

const FC1_W: usize = 0;
const FC1_B: usize = 1;
const FC2_W: usize = 2;
const FC2_B: usize = 3;
const ID_W: usize = 4;
const ID_B: usize = 5;
const ATTR0: usize = 6;

fn mat(p: &Param) -> ArrayView2<'_, f64> {
    p.value.view().into_dimensionality::<Ix2>().expect("weight is 2-D")
}

fn affine(x: ArrayView2<f64>, w: &Param, b: &Param) -> Array2<f64> {
    let mut y = x.dot(&mat(w));
    y += &b.value.view().into_dimensionality::<Ix1>().expect("bias is 1-D");
    y
}

impl Model {
    /// Build a model with the built-in tiny backbone.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let backbone: Box<dyn Backbone> = match &config.backbone {
            BackboneKind::TinyCnn { channels, pool } => Box::new(TinyCnn::new(
                (config.input_height, config.input_width, config.input_channels),
                channels,
                *pool,
                seed,
            )?),
            BackboneKind::ExternalPretrained { name, .. } => {
                return Err(Error::InvalidArgument(format!(
                    "external backbone `{name}` must be supplied through Model::with_backbone"
                )))
            }
        };
        Self::with_backbone(config, backbone, seed)
    }

    /// Build a model around a caller-provided backbone.
    pub fn with_backbone(config: ModelConfig, backbone: Box<dyn Backbone>, seed: u64) -> Result<Self> {
        config.validate()?;
        let f = backbone.feature_dim();
        if let BackboneKind::ExternalPretrained { feature_dim, .. } = &config.backbone {
            ensure!(
                *feature_dim == f,
                Error::ConfigMismatch {
                    field: "backbone.feature_dim".into(),
                    expected: feature_dim.to_string(),
                    found: f.to_string(),
                }
            );
        }
        let d = config.signature_dim;
        let f2 = config.fc2_dim;
        let k = config.num_identities;
        let mut specs: Vec<(String, usize, usize)> =
            vec![("fc1".into(), f, d), ("fc2".into(), f, f2), ("identity".into(), d, k)];
        for e in config.attribute_schema.entries() {
            specs.push((format!("attr.{}", e.name), f2, e.head_width()));
        }
        // Offset init streams past the backbone's.
        let base = 1000u64;
        let mut heads = Vec::with_capacity(2 * specs.len());
        for (i, (name, fan_in, out)) in specs.into_iter().enumerate() {
            heads.push(Param {
                name: format!("{name}.weight"),
                value: uniform_init(&[fan_in, out], fan_in, 1.0, seed, base + i as u64),
                role: ParamRole::Weight,
                group: ParamGroup::Head,
            });
            heads.push(Param {
                name: format!("{name}.bias"),
                value: ArrayD::zeros(vec![out]),
                role: ParamRole::Bias,
                group: ParamGroup::Head,
            });
        }
        Ok(Self { config, backbone, heads })
    }

    /// Copy of this model with freshly initialized heads for `schema`; the
    /// backbone, FC1, FC2 and identity head are kept.
    pub fn with_attribute_schema(&self, schema: AttributeSchema, seed: u64) -> Result<Self> {
        let config = ModelConfig { attribute_schema: schema, ..self.config.clone() };
        let mut out = Self::with_backbone(config, self.backbone.clone(), seed)?;
        out.heads[..ATTR0].clone_from_slice(&self.heads[..ATTR0]);
        Ok(out)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// All trainable tensors: backbone first, then FC1, FC2, the identity
    /// head and the attribute heads in schema order.
    pub fn parameters(&self) -> Vec<&Param> {
        self.backbone.params().iter().chain(self.heads.iter()).collect()
    }

    pub fn parameters_filtered(&self, filter: ParamFilter) -> Vec<&Param> {
        self.parameters().into_iter().filter(|p| filter.includes(p)).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Param> {
        self.backbone.params_mut().iter_mut().chain(self.heads.iter_mut()).collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.parameters().iter().flat_map(|p| p.value.iter().copied()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        ensure!(
            flat.len() == self.num_parameters(),
            Error::Shape(format!("{} values for {} parameters", flat.len(), self.num_parameters()))
        );
        let mut offset = 0;
        for p in self.parameters_mut() {
            let n = p.len();
            p.value.iter_mut().zip(&flat[offset..offset + n]).for_each(|(d, s)| *d = *s);
            offset += n;
        }
        Ok(())
    }

    /// SHA-256 over the config and every parameter value.
    pub fn digest(&self) -> String {
        hex::encode(self.digest_bytes())
    }

    pub fn digest_bytes(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.config.digest_bytes());
        for p in self.parameters() {
            h.update(p.name.as_bytes());
            for v in p.value.iter() {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().into()
    }

    /// Deterministic forward pass without dropout.
    pub fn forward_eval(&self, images: ArrayView4<f64>) -> Result<ForwardOutput> {
        self.forward_impl(images, None).map(|(o, _)| o)
    }

    /// Forward pass with dropout drawn from `rng`; keeps what `backward` needs.
    pub fn forward_train(&self, images: ArrayView4<f64>, rng: &mut dyn RngCore) -> Result<(ForwardOutput, ForwardCache)> {
        self.forward_impl(images, Some(rng))
    }

    fn forward_impl(
        &self,
        images: ArrayView4<f64>,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<(ForwardOutput, ForwardCache)> {
        let (features, bcache) = self.backbone.forward(images)?;
        let mask = match rng {
            Some(rng) if self.config.dropout_keep < 1.0 => {
                Some(dropout_mask(features.nrows(), features.ncols(), self.config.dropout_keep, rng))
            }
            _ => None,
        };
        let dropped = match &mask {
            Some(m) => &features * m,
            None => features,
        };
        let h = &self.heads;
        let signatures = affine(dropped.view(), &h[FC1_W], &h[FC1_B]);
        let fc2 = affine(dropped.view(), &h[FC2_W], &h[FC2_B]);
        let identity_logits = affine(signatures.view(), &h[ID_W], &h[ID_B]);
        let attribute_logits: Vec<Array2<f64>> = (0..self.config.attribute_schema.len())
            .map(|l| affine(fc2.view(), &h[ATTR0 + 2 * l], &h[ATTR0 + 2 * l + 1]))
            .collect();
        let finite = signatures.iter().chain(identity_logits.iter()).all(|v| v.is_finite())
            && attribute_logits.iter().all(|a| a.iter().all(|v| v.is_finite()));
        ensure!(finite, Error::NonFinite("network activations".into()));
        let out = ForwardOutput { signatures: signatures.clone(), identity_logits, attribute_logits };
        let cache = ForwardCache { backbone: bcache, mask, dropped, fc2, signatures };
        Ok((out, cache))
    }

    /// Backpropagate loss gradients w.r.t. the outputs into parameter
    /// gradients.
    pub fn backward(&self, cache: &ForwardCache, grads: &LossGrads) -> Result<Gradients> {
        let h = &self.heads;
        let n = cache.signatures.nrows();
        ensure!(
            grads.identity_logits.nrows() == n && grads.signatures.nrows() == n,
            Error::Shape("gradient batch size differs from the forward pass".into())
        );
        ensure!(
            grads.attribute_logits.len() == self.config.attribute_schema.len(),
            Error::Shape("attribute gradient count differs from schema".into())
        );
        let mut head_grads: Vec<ArrayD<f64>> = Vec::with_capacity(h.len());
        head_grads.resize(h.len(), ArrayD::zeros(vec![0]));

        // Identity head and the signature gradient.
        head_grads[ID_W] = cache.signatures.t().dot(&grads.identity_logits).into_dyn();
        head_grads[ID_B] = grads.identity_logits.sum_axis(Axis(0)).into_dyn();
        let d_sig = grads.identity_logits.dot(&mat(&h[ID_W]).t()) + &grads.signatures;

        // Attribute heads and the FC2 gradient.
        let mut d_fc2 = Array2::zeros(cache.fc2.raw_dim());
        for (l, g) in grads.attribute_logits.iter().enumerate() {
            head_grads[ATTR0 + 2 * l] = cache.fc2.t().dot(g).into_dyn();
            head_grads[ATTR0 + 2 * l + 1] = g.sum_axis(Axis(0)).into_dyn();
            d_fc2 += &g.dot(&mat(&h[ATTR0 + 2 * l]).t());
        }

        head_grads[FC1_W] = cache.dropped.t().dot(&d_sig).into_dyn();
        head_grads[FC1_B] = d_sig.sum_axis(Axis(0)).into_dyn();
        head_grads[FC2_W] = cache.dropped.t().dot(&d_fc2).into_dyn();
        head_grads[FC2_B] = d_fc2.sum_axis(Axis(0)).into_dyn();

        let mut d_dropped = d_sig.dot(&mat(&h[FC1_W]).t());
        if !self.config.fc2_stop_gradient {
            d_dropped += &d_fc2.dot(&mat(&h[FC2_W]).t());
        }
        if let Some(m) = &cache.mask {
            d_dropped *= m;
        }
        let mut out = self.backbone.backward(&cache.backbone, d_dropped.view())?;
        out.extend(head_grads);
        Ok(out)
    }

    /// Names of the attribute-head tensors.
    pub(crate) fn is_attribute_head(name: &str) -> bool {
        name.starts_with("attr.")
    }
}

#[cfg(test)]
mod tests {
    use ndarray::Array4;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn config(k: usize) -> ModelConfig {
        ModelConfig {
            backbone: BackboneKind::TinyCnn { channels: vec![4, 8, 8], pool: Default::default() },
            input_height: 16,
            input_width: 16,
            input_channels: 3,
            signature_dim: 12,
            fc2_dim: 6,
            num_identities: k,
            attribute_schema: AttributeSchema::pedestrian(),
            dropout_keep: 0.8,
            fc2_stop_gradient: false,
        }
    }

    fn images(n: usize) -> Array4<f64> {
        Array4::from_shape_fn((n, 16, 16, 3), |(a, b, c, d)| ((a * 17 + b * 5 + c * 3 + d * 7) % 13) as f64 / 13.0)
    }

    #[test]
    fn output_shapes() {
        let m = Model::new(config(10), 0).unwrap();
        let out = m.forward_eval(images(2).view()).unwrap();
        assert_eq!(out.identity_logits.dim(), (2, 10));
        assert_eq!(out.signatures.dim(), (2, 12));
        let widths: Vec<_> = out.attribute_logits.iter().map(|a| a.ncols()).collect();
        assert_eq!(widths, vec![1, 8, 9, 1, 1, 1, 1, 1, 1]);
        assert!(out.attribute_logits.iter().all(|a| a.nrows() == 2));
    }

    #[test]
    fn eval_is_deterministic() {
        let m = Model::new(config(3), 1).unwrap();
        let x = images(3);
        assert_eq!(m.forward_eval(x.view()).unwrap(), m.forward_eval(x.view()).unwrap());
    }

    #[test]
    fn full_keep_matches_eval() {
        let mut c = config(3);
        c.dropout_keep = 1.0;
        let m = Model::new(c, 1).unwrap();
        let x = images(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (train, _) = m.forward_train(x.view(), &mut rng).unwrap();
        assert_eq!(train, m.forward_eval(x.view()).unwrap());
    }

    #[test]
    fn parameter_count_closed_form() {
        let m = Model::new(config(10), 0).unwrap();
        let backbone = (27 * 4 + 4) + (36 * 8 + 8) + (72 * 8 + 8);
        let fc1 = 8 * 12 + 12;
        let fc2 = 8 * 6 + 6;
        let id = 12 * 10 + 10;
        let attrs: usize = [1, 8, 9, 1, 1, 1, 1, 1, 1].iter().map(|w| 6 * w + w).sum();
        assert_eq!(m.num_parameters(), backbone + fc1 + fc2 + id + attrs);
    }

    #[test]
    fn parameter_order_is_stable() {
        let m = Model::new(config(4), 0).unwrap();
        let a: Vec<_> = m.parameters().iter().map(|p| p.name.clone()).collect();
        let b: Vec<_> = m.parameters().iter().map(|p| p.name.clone()).collect();
        assert_eq!(a, b);
        assert_eq!(a[0], "backbone.conv0.weight");
        assert_eq!(a.last().unwrap(), "attr.hair_length.bias");
        let frozen = m.parameters_filtered(ParamFilter { freeze_backbone: true });
        assert!(frozen.iter().all(|p| p.group == ParamGroup::Head));
        assert_eq!(frozen.len(), a.len() - 6);
    }

    #[test]
    fn branches_are_parallel() {
        let m = Model::new(config(4), 2).unwrap();
        let x = images(2);
        let base = m.forward_eval(x.view()).unwrap();

        let mut m2 = m.clone();
        m2.heads[FC2_W].value.mapv_inplace(|v| v + 0.3);
        let out = m2.forward_eval(x.view()).unwrap();
        assert_eq!(out.signatures, base.signatures);
        assert_ne!(out.attribute_logits, base.attribute_logits);

        let mut m3 = m.clone();
        m3.heads[FC1_W].value.mapv_inplace(|v| v * 1.5);
        let out = m3.forward_eval(x.view()).unwrap();
        assert_eq!(out.attribute_logits, base.attribute_logits);
        assert_ne!(out.signatures, base.signatures);
    }

    #[test]
    fn external_backbone_requires_hook() {
        let c = ModelConfig {
            backbone: BackboneKind::ExternalPretrained { name: "resnet50".into(), feature_dim: 2048 },
            ..config(2)
        };
        assert!(Model::new(c, 0).is_err());
    }

    #[test]
    fn schema_swap_keeps_shared_layers() {
        let m = Model::new(config(4), 0).unwrap();
        let bare = m.with_attribute_schema(AttributeSchema::empty(), 1).unwrap();
        assert_eq!(bare.parameters().len(), m.parameters().len() - 2 * 9);
        let back = bare.with_attribute_schema(AttributeSchema::pedestrian(), 0).unwrap();
        assert_eq!(back.flat_params(), m.flat_params());
    }

    #[test]
    fn flat_params_round_trip() {
        let mut m = Model::new(config(3), 0).unwrap();
        let mut flat = m.flat_params();
        flat[5] += 1.0;
        m.set_flat_params(&flat).unwrap();
        assert_eq!(m.flat_params(), flat);
        assert!(m.set_flat_params(&flat[1..]).is_err());
    }
}
