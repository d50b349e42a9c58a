//! Backpropagation through the whole network against central differences.

use mtreid::data::{AttributeAnnotation, AttributeSchema};
use mtreid::losses::{finite_difference_check, total_loss, Centers, LossWeights, OutputsView, Targets};
use mtreid::model::{BackboneKind, Model, ModelConfig, Pooling};
use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: usize = 4;
const K: usize = 3;

fn config(pool: Pooling, keep: f64) -> ModelConfig {
    ModelConfig {
        backbone: BackboneKind::TinyCnn { channels: vec![2, 3, 3], pool },
        input_height: 16,
        input_width: 16,
        input_channels: 3,
        signature_dim: 4,
        fc2_dim: 3,
        num_identities: K,
        attribute_schema: AttributeSchema::pedestrian(),
        dropout_keep: keep,
        fc2_stop_gradient: false,
    }
}

fn check(pool: Pooling, keep: f64) -> f64 {
    let model = Model::new(config(pool, keep), 17).unwrap();
    let schema = AttributeSchema::pedestrian();
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let images = Array4::from_shape_simple_fn((N, 16, 16, 3), || r.random_range(0.0..1.0));
    let labels = vec![0, 1, 2, 1];
    let mask = vec![true, false, true, true];
    let annotations: Vec<Option<AttributeAnnotation>> = mask
        .iter()
        .map(|&m| {
            m.then(|| {
                let v = schema.entries().iter().map(|e| r.random_range(0..e.cardinality)).collect();
                AttributeAnnotation::new(v, &schema).unwrap()
            })
        })
        .collect();
    let att_counts: Vec<Vec<usize>> = schema.entries().iter().map(|e| vec![2; e.cardinality]).collect();
    let weights = LossWeights::from_counts(0.06, 1.0, &[1, 2, 1], &att_counts).unwrap();
    let centers = Centers::from_matrix(ndarray::Array2::from_shape_fn((K, 4), |(i, j)| 0.1 * (i + j) as f64)).unwrap();

    let f = |theta: &[f64]| {
        let mut m = model.clone();
        m.set_flat_params(theta)?;
        // Same dropout mask at every evaluation.
        let (out, cache) = m.forward_train(images.view(), &mut ChaCha8Rng::seed_from_u64(99))?;
        let outputs = OutputsView {
            identity_logits: out.identity_logits.view(),
            signatures: out.signatures.view(),
            attribute_logits: &out.attribute_logits,
        };
        let targets = Targets { identities: &labels, mask: &mask, attributes: &annotations };
        let (loss, grads) = total_loss(outputs, targets, &centers, &weights, &schema)?;
        let g: Vec<f64> = m.backward(&cache, &grads)?.iter().flat_map(|a| a.iter().copied()).collect();
        Ok((loss.total, g))
    };
    let report = finite_difference_check(f, &model.flat_params(), 1e-6).unwrap();
    report
        .analytic
        .iter()
        .zip(&report.numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

#[test]
fn average_pooling_without_dropout() {
    let e = check(Pooling::Average, 1.0);
    assert!(e < 1e-4, "{e}");
}

#[test]
fn flatten_pooling_with_dropout() {
    let e = check(Pooling::Flatten, 0.7);
    assert!(e < 1e-4, "{e}");
}
