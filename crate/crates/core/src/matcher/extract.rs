//! Signature extraction from the FC1 layer.

use ndarray::{Array2, Array4, ArrayView2, Axis};
use rayon::prelude::*;

use super::store::SignatureStore;
use crate::data::Sample;
use crate::error::{ensure, Error, Result};
use crate::model::{ForwardOutput, Model};

const CHUNK: usize = 64;

/// Stack sample images into an NHWC batch.
pub(crate) fn stack_images(samples: &[&Sample]) -> Result<Array4<f64>> {
    let (h, w, c) = samples[0].image.dim();
    let mut out = Array4::zeros((samples.len(), h, w, c));
    for (i, s) in samples.iter().enumerate() {
        ensure!(
            s.image.dim() == (h, w, c),
            Error::Shape(format!("sample {} has image shape {:?}, expected {:?}", s.sample_id, s.image.dim(), (h, w, c)))
        );
        out.index_axis_mut(Axis(0), i).assign(&s.image);
    }
    Ok(out)
}

/// Evaluation-mode outputs for `samples`, rows in input order.
pub(crate) fn forward_all(model: &Model, samples: &[&Sample]) -> Result<ForwardOutput> {
    ensure!(!samples.is_empty(), Error::InvalidArgument("no samples to run".into()));
    let chunks: Vec<ForwardOutput> = samples
        .par_chunks(CHUNK)
        .map(|chunk| model.forward_eval(stack_images(chunk)?.view()))
        .collect::<Result<_>>()?;
    let cat = |f: &dyn Fn(&ForwardOutput) -> ArrayView2<f64>| -> Result<Array2<f64>> {
        let views: Vec<_> = chunks.iter().map(f).collect();
        ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))
    };
    let heads = model.config().attribute_schema.len();
    Ok(ForwardOutput {
        signatures: cat(&|o| o.signatures.view())?,
        identity_logits: cat(&|o| o.identity_logits.view())?,
        attribute_logits: (0..heads).map(|l| cat(&|o| o.attribute_logits[l].view())).collect::<Result<_>>()?,
    })
}

/// Evaluation-mode FC1 signatures of `samples`, one row per sample in input
/// order.
pub fn extract(model: &Model, samples: &[&Sample]) -> Result<SignatureStore> {
    if samples.is_empty() {
        return Ok(SignatureStore::empty(model.config().signature_dim, model.digest_bytes()));
    }
    let out = forward_all(model, samples)?;
    SignatureStore::new(
        out.signatures.mapv(|v| v as f32),
        samples.iter().map(|s| s.sample_id).collect(),
        samples.iter().map(|s| s.global_identity).collect(),
        samples.iter().map(|s| s.camera_id).collect(),
        model.digest_bytes(),
    )
}
