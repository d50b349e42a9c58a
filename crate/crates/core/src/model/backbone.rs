//! Feature extractors that sit in front of the FC1/FC2 heads.

use std::any::Any;
use std::fmt;

use ndarray::{Array2, Array4, ArrayD, ArrayView2, ArrayView4, Axis, Ix1, Ix2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{col2im, conv_out, im2col, KERNEL};
use super::param::{Param, ParamGroup, ParamRole};
use crate::error::{ensure, Error, Result};
use crate::rng::{stream_rng, TAG_INIT};

/// Opaque per-forward state a backbone needs for its backward pass.
pub struct BackboneCache(pub Box<dyn Any + Send + Sync>);

impl fmt::Debug for BackboneCache {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("BackboneCache")
    }
}

/// A differentiable image-to-feature map. Parameters must be reported in a
/// stable order; `backward` returns one gradient per parameter in that order.
pub trait Backbone: Send + Sync + fmt::Debug {
    fn feature_dim(&self) -> usize;
    fn forward(&self, images: ArrayView4<f64>) -> Result<(Array2<f64>, BackboneCache)>;
    fn backward(&self, cache: &BackboneCache, grad_features: ArrayView2<f64>) -> Result<Vec<ArrayD<f64>>>;
    fn params(&self) -> &[Param];
    fn params_mut(&mut self) -> &mut [Param];
    fn clone_box(&self) -> Box<dyn Backbone>;
}

impl Clone for Box<dyn Backbone> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

/// Uniform initialization scaled by fan-in.
pub(crate) fn uniform_init(shape: &[usize], fan_in: usize, gain: f64, seed: u64, index: u64) -> ArrayD<f64> {
    let bound = gain / (fan_in as f64).sqrt();
    let mut rng = stream_rng(seed, &[TAG_INIT, index]);
    ArrayD::from_shape_simple_fn(shape.to_vec(), || rng.random_range(-bound..bound))
}

/// How the last feature map becomes a feature vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Global average over positions; feature size = last channel count.
    #[default]
    Average,
    /// Concatenate all positions; keeps spatial layout.
    Flatten,
}

/// Stride-2 conv blocks with ReLU followed by pooling.
#[derive(Debug, Clone)]
pub struct TinyCnn {
    input: (usize, usize, usize),
    channels: Vec<usize>,
    pool: Pooling,
    params: Vec<Param>,
}

struct TinyCnnCache {
    input_shapes: Vec<(usize, usize, usize, usize)>,
    cols: Vec<Array2<f64>>,
    /// Post-ReLU activations, rows `(n, y, x)`.
    activations: Vec<Array2<f64>>,
    last_spatial: usize,
}

impl TinyCnn {
    pub fn new(input: (usize, usize, usize), channels: &[usize], pool: Pooling, seed: u64) -> Result<Self> {
        ensure!(!channels.is_empty(), Error::InvalidArgument("tiny_cnn needs at least one block".into()));
        let mut params = Vec::with_capacity(2 * channels.len());
        let mut cin = input.2;
        for (i, &cout) in channels.iter().enumerate() {
            let fan_in = KERNEL * KERNEL * cin;
            params.push(Param {
                name: format!("backbone.conv{i}.weight"),
                value: uniform_init(&[fan_in, cout], fan_in, 6f64.sqrt(), seed, 2 * i as u64),
                role: ParamRole::Weight,
                group: ParamGroup::Backbone,
            });
            params.push(Param {
                name: format!("backbone.conv{i}.bias"),
                value: ArrayD::zeros(vec![cout]),
                role: ParamRole::Bias,
                group: ParamGroup::Backbone,
            });
            cin = cout;
        }
        Ok(Self { input, channels: channels.to_vec(), pool, params })
    }

    pub fn output_spatial(&self) -> (usize, usize) {
        self.channels.iter().fold((self.input.0, self.input.1), |(h, w), _| (conv_out(h), conv_out(w)))
    }

    fn weight(&self, i: usize) -> ArrayView2<'_, f64> {
        self.params[2 * i].value.view().into_dimensionality::<Ix2>().expect("conv weight is 2-D")
    }
}

impl Backbone for TinyCnn {
    fn feature_dim(&self) -> usize {
        let c = *self.channels.last().expect("non-empty");
        match self.pool {
            Pooling::Average => c,
            Pooling::Flatten => {
                let (h, w) = self.output_spatial();
                h * w * c
            }
        }
    }

    fn forward(&self, images: ArrayView4<f64>) -> Result<(Array2<f64>, BackboneCache)> {
        let (n, h, w, c) = images.dim();
        ensure!(
            (h, w, c) == self.input,
            Error::Shape(format!("images are {h}x{w}x{c}, backbone expects {:?}", self.input))
        );
        let mut x: Array4<f64> = images.to_owned();
        let mut input_shapes = Vec::new();
        let mut cols_cache = Vec::new();
        let mut activations = Vec::new();
        for (i, &cout) in self.channels.iter().enumerate() {
            let (_, h, w, _) = x.dim();
            input_shapes.push(x.dim());
            let cols = im2col(x.view());
            let bias = self.params[2 * i + 1].value.view().into_dimensionality::<Ix1>().expect("bias is 1-D");
            let mut z = cols.dot(&self.weight(i));
            z += &bias;
            z.mapv_inplace(|v| v.max(0.0));
            x = z.clone().into_shape_with_order((n, conv_out(h), conv_out(w), cout)).expect("conv reshape");
            cols_cache.push(cols);
            activations.push(z);
        }
        let (_, ho, wo, cout) = x.dim();
        let spatial = ho * wo;
        let pooled = match self.pool {
            Pooling::Average => x
                .into_shape_with_order((n, spatial, cout))
                .expect("pool reshape")
                .mean_axis(Axis(1))
                .expect("non-empty spatial"),
            Pooling::Flatten => x.into_shape_with_order((n, spatial * cout)).expect("flatten reshape"),
        };
        let cache = TinyCnnCache { input_shapes, cols: cols_cache, activations, last_spatial: spatial };
        Ok((pooled, BackboneCache(Box::new(cache))))
    }

    fn backward(&self, cache: &BackboneCache, grad_features: ArrayView2<f64>) -> Result<Vec<ArrayD<f64>>> {
        let cache = cache
            .0
            .downcast_ref::<TinyCnnCache>()
            .ok_or_else(|| Error::Shape("cache was not produced by this backbone".into()))?;
        let n = grad_features.nrows();
        let last = self.channels.len() - 1;
        let spatial = cache.last_spatial;
        let cout = self.channels[last];
        let mut grad_act = match self.pool {
            // Average pooling spreads the gradient evenly over positions.
            Pooling::Average => {
                let mut g = Array2::zeros((n * spatial, cout));
                for (r, mut row) in g.outer_iter_mut().enumerate() {
                    row.assign(&(&grad_features.row(r / spatial) / spatial as f64));
                }
                g
            }
            Pooling::Flatten => {
                grad_features.as_standard_layout().into_owned().into_shape_with_order((n * spatial, cout)).expect("unflatten")
            }
        };

        let mut grads: Vec<ArrayD<f64>> = vec![ArrayD::zeros(vec![0]); self.params.len()];
        for i in (0..self.channels.len()).rev() {
            let mut dz = grad_act;
            dz.zip_mut_with(&cache.activations[i], |g, &a| {
                if a <= 0.0 {
                    *g = 0.0;
                }
            });
            grads[2 * i] = cache.cols[i].t().dot(&dz).into_dyn();
            grads[2 * i + 1] = dz.sum_axis(Axis(0)).into_dyn();
            if i == 0 {
                break;
            }
            let dcols = dz.dot(&self.weight(i).t());
            let shape = cache.input_shapes[i];
            let dx = col2im(dcols.view(), shape);
            grad_act = dx.into_shape_with_order((shape.0 * shape.1 * shape.2, shape.3)).expect("grad reshape");
        }
        Ok(grads)
    }

    fn params(&self) -> &[Param] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    fn clone_box(&self) -> Box<dyn Backbone> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_param_count() {
        let b = TinyCnn::new((16, 16, 3), &[4, 8, 16], Pooling::Average, 0).unwrap();
        assert_eq!(b.output_spatial(), (2, 2));
        let count: usize = b.params().iter().map(Param::len).sum();
        assert_eq!(count, (27 * 4 + 4) + (36 * 8 + 8) + (72 * 16 + 16));
        let x = Array4::from_elem((2, 16, 16, 3), 0.5);
        let (f, _) = b.forward(x.view()).unwrap();
        assert_eq!(f.dim(), (2, 16));
    }

    #[test]
    fn flatten_keeps_positions() {
        let b = TinyCnn::new((16, 8, 3), &[4, 5], Pooling::Flatten, 0).unwrap();
        assert_eq!(b.feature_dim(), 4 * 2 * 5);
        let x = Array4::from_shape_fn((2, 16, 8, 3), |(n, y, x, c)| (n + y * 3 + x + c) as f64 / 40.0);
        let (f, _) = b.forward(x.view()).unwrap();
        assert_eq!(f.dim(), (2, 40));
    }

    #[test]
    fn rejects_wrong_input() {
        let b = TinyCnn::new((16, 16, 3), &[4], Pooling::Average, 0).unwrap();
        assert!(b.forward(Array4::zeros((1, 8, 16, 3)).view()).is_err());
    }
}
