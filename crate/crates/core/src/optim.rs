//! Adam optimizer with L2 regularization on weight tensors.

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::model::{Gradients, Model, ParamFilter, ParamRole};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// L2 coefficient added to weight (not bias) gradients.
    pub l2: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, l2: 1e-3 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.l2 >= 0.0;
        ensure!(ok, Error::Config(format!("invalid optimizer settings {self:?}")));
        Ok(())
    }
}

/// Moment estimates, one pair per model parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub filter: ParamFilter,
    pub step: u64,
    pub m: Vec<ArrayD<f64>>,
    pub v: Vec<ArrayD<f64>>,
}

impl Adam {
    pub fn new(model: &Model, config: AdamConfig, filter: ParamFilter) -> Result<Self> {
        config.validate()?;
        let zeros: Vec<_> = model.parameters().iter().map(|p| ArrayD::zeros(p.value.raw_dim())).collect();
        Ok(Self { config, filter, step: 0, m: zeros.clone(), v: zeros })
    }

    /// One update. Parameters excluded by the filter are left untouched.
    pub fn step(&mut self, model: &mut Model, grads: &Gradients) -> Result<()> {
        let mut params = model.parameters_mut();
        ensure!(
            grads.len() == params.len() && self.m.len() == params.len(),
            Error::Shape(format!("{} gradients for {} parameters", grads.len(), params.len()))
        );
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (i, p) in params.iter_mut().enumerate() {
            if !self.filter.includes(p) {
                continue;
            }
            let g = &grads[i];
            ensure!(g.shape() == p.value.shape(), Error::Shape(format!("gradient shape for `{}`", p.name)));
            let l2 = if p.role == ParamRole::Weight { c.l2 } else { 0.0 };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            ndarray::Zip::from(&mut p.value).and(m).and(v).and(g).for_each(|w, m, v, &g| {
                let g = g + l2 * *w;
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                let mh = *m / bc1;
                let vh = *v / bc2;
                *w -= c.learning_rate * mh / (vh.sqrt() + c.epsilon);
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::AttributeSchema;
    use crate::model::{BackboneKind, ModelConfig, ParamGroup};

    fn model() -> Model {
        let config = ModelConfig {
            backbone: BackboneKind::TinyCnn { channels: vec![2], pool: Default::default() },
            input_height: 4,
            input_width: 4,
            input_channels: 1,
            signature_dim: 3,
            fc2_dim: 2,
            num_identities: 2,
            attribute_schema: AttributeSchema::empty(),
            dropout_keep: 1.0,
            fc2_stop_gradient: false,
        };
        Model::new(config, 0).unwrap()
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // With bias correction the first Adam step is lr·sign(g) up to epsilon.
        let mut m = model();
        let before = m.flat_params();
        let grads: Gradients = m.parameters().iter().map(|p| ArrayD::from_elem(p.value.raw_dim(), 0.5)).collect();
        let cfg = AdamConfig { learning_rate: 0.01, l2: 0.0, ..Default::default() };
        let mut opt = Adam::new(&m, cfg, ParamFilter::default()).unwrap();
        opt.step(&mut m, &grads).unwrap();
        for (a, b) in before.iter().zip(m.flat_params()) {
            assert!((a - b - 0.01).abs() < 1e-8);
        }
    }

    #[test]
    fn l2_only_touches_weights() {
        let mut m = model();
        let before: Vec<_> = m.parameters().iter().map(|p| p.value.clone()).collect();
        let grads: Gradients = m.parameters().iter().map(|p| ArrayD::zeros(p.value.raw_dim())).collect();
        let cfg = AdamConfig { learning_rate: 0.01, l2: 1.0, ..Default::default() };
        let mut opt = Adam::new(&m, cfg, ParamFilter::default()).unwrap();
        opt.step(&mut m, &grads).unwrap();
        for (p, b) in m.parameters().iter().zip(&before) {
            match p.role {
                ParamRole::Bias => assert_eq!(&p.value, b),
                ParamRole::Weight => assert!(p.value.iter().zip(b).all(|(x, y)| *y == 0.0 || x != y)),
            }
        }
    }

    #[test]
    fn frozen_backbone_untouched() {
        let mut m = model();
        let before: Vec<_> = m.parameters().iter().map(|p| p.value.clone()).collect();
        let grads: Gradients = m.parameters().iter().map(|p| ArrayD::from_elem(p.value.raw_dim(), 1.0)).collect();
        let mut opt = Adam::new(&m, AdamConfig::default(), ParamFilter { freeze_backbone: true }).unwrap();
        opt.step(&mut m, &grads).unwrap();
        for (p, b) in m.parameters().iter().zip(&before) {
            assert_eq!(p.group == ParamGroup::Backbone, &p.value == b, "{}", p.name);
        }
    }

    #[test]
    fn rejects_bad_settings() {
        let cfg = AdamConfig { beta1: 1.0, ..Default::default() };
        assert!(Adam::new(&model(), cfg, ParamFilter::default()).is_err());
    }
}
