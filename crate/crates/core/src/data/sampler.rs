//! Epoch-wise batch sampling over the training split.

use ndarray::{s, Array4};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::registry::DatasetRegistry;
use super::schema::AttributeAnnotation;
use crate::error::{ensure, Error, Result};
use crate::rng::{stream_rng, TAG_EPOCH};

#[derive(Debug, Clone)]
pub struct Batch {
    /// N×H×W×C.
    pub images: Array4<f64>,
    pub sample_ids: Vec<u64>,
    pub global_identities: Vec<usize>,
    /// True where the sample carries an attribute annotation.
    pub attribute_mask: Vec<bool>,
    pub attribute_labels: Vec<Option<AttributeAnnotation>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.global_identities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.global_identities.is_empty()
    }

    /// Assemble a batch from explicit training-sample positions.
    pub fn from_train_indices(registry: &DatasetRegistry, indices: &[usize]) -> Result<Self> {
        let (h, w, c) = registry.image_shape().ok_or(Error::EmptyRegistry)?;
        let mut images = Array4::zeros((indices.len(), h, w, c));
        let mut sample_ids = Vec::with_capacity(indices.len());
        let mut global_identities = Vec::with_capacity(indices.len());
        let mut attribute_mask = Vec::with_capacity(indices.len());
        let mut attribute_labels = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            let sample = registry.train_sample(i);
            images.slice_mut(s![row, .., .., ..]).assign(&sample.image);
            sample_ids.push(sample.sample_id);
            global_identities.push(sample.global_identity);
            attribute_mask.push(sample.attributes.is_some());
            attribute_labels.push(sample.attributes.clone());
        }
        Ok(Self { images, sample_ids, global_identities, attribute_mask, attribute_labels })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerState {
    pub epoch: u64,
    pub position: usize,
}

/// Draws batches without replacement: each epoch is a seeded permutation of
/// the training split, cut into consecutive batches. The last batch of an
/// epoch may be short.
#[derive(Debug, Clone)]
pub struct EpochSampler {
    seed: u64,
    stream: u64,
    batch_size: usize,
    state: SamplerState,
    order: Vec<usize>,
}

impl EpochSampler {
    pub fn new(registry: &DatasetRegistry, batch_size: usize, seed: u64, stream: u64) -> Result<Self> {
        Self::resume(registry, batch_size, seed, stream, SamplerState { epoch: 0, position: 0 })
    }

    pub fn resume(
        registry: &DatasetRegistry,
        batch_size: usize,
        seed: u64,
        stream: u64,
        state: SamplerState,
    ) -> Result<Self> {
        ensure!(!registry.is_empty(), Error::EmptyRegistry);
        ensure!(batch_size >= 1, Error::InvalidArgument("batch size must be at least 1".into()));
        ensure!(
            state.position < registry.num_train(),
            Error::InvalidArgument(format!("sampler position {} beyond epoch", state.position))
        );
        let order = Self::permutation(registry.num_train(), seed, stream, state.epoch);
        Ok(Self { seed, stream, batch_size, state, order })
    }

    fn permutation(n: usize, seed: u64, stream: u64, epoch: u64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream_rng(seed, &[TAG_EPOCH, stream, epoch]));
        order
    }

    pub fn state(&self) -> SamplerState {
        self.state
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn epoch(&self) -> u64 {
        self.state.epoch
    }

    /// Next batch; epoch rollover happens after the batch that exhausts the
    /// current permutation.
    pub fn next_batch(&mut self, registry: &DatasetRegistry) -> Result<Batch> {
        ensure!(
            registry.num_train() == self.order.len(),
            Error::InvalidArgument("sampler was built for a different registry".into())
        );
        let start = self.state.position;
        let end = (start + self.batch_size).min(self.order.len());
        let batch = Batch::from_train_indices(registry, &self.order[start..end])?;
        if end == self.order.len() {
            self.state = SamplerState { epoch: self.state.epoch + 1, position: 0 };
            self.order = Self::permutation(self.order.len(), self.seed, self.stream, self.state.epoch);
        } else {
            self.state.position = end;
        }
        Ok(batch)
    }

    /// Number of batches in one epoch.
    pub fn batches_per_epoch(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }
}

/// One-shot draw of a batch from a fresh seeded epoch.
pub fn sample_batch(registry: &DatasetRegistry, batch_size: usize, seed: u64) -> Result<Batch> {
    EpochSampler::new(registry, batch_size, seed, 0)?.next_batch(registry)
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use ndarray::Array3;

    use super::*;
    use crate::data::sample::{DatasetDescriptor, Sample, Split};
    use crate::data::schema::AttributeSchema;

    fn registry(annotated: &[bool]) -> DatasetRegistry {
        let schema = AttributeSchema::pedestrian();
        let datasets = annotated
            .iter()
            .enumerate()
            .map(|(d, &attrs)| {
                let desc = DatasetDescriptor {
                    dataset_id: d as u32,
                    name: format!("d{d}"),
                    num_identities: 4,
                    has_attributes: attrs,
                    camera_count: 2,
                };
                let samples = (0..12)
                    .map(|k| Sample {
                        sample_id: 0,
                        image: Array3::from_elem((2, 2, 3), k as f64 / 12.0),
                        local_identity: k % 4,
                        global_identity: 0,
                        dataset_id: 0,
                        camera_id: (k % 2) as u32,
                        split: Split::Train,
                        attributes: attrs.then(|| AttributeAnnotation::new(vec![k % 2; 9], &schema).unwrap()),
                    })
                    .collect();
                (desc, samples)
            })
            .collect();
        DatasetRegistry::register(datasets, schema).unwrap()
    }

    #[test]
    fn mask_reflects_annotations() {
        let all = registry(&[true]);
        assert!(sample_batch(&all, 8, 0).unwrap().attribute_mask.iter().all(|&m| m));
        let none = registry(&[false]);
        assert!(sample_batch(&none, 8, 0).unwrap().attribute_mask.iter().all(|&m| !m));
        let mixed = registry(&[true, false]);
        let b = sample_batch(&mixed, 24, 3).unwrap();
        for (i, id) in b.sample_ids.iter().enumerate() {
            let s = mixed.sample(*id).unwrap();
            assert_eq!(b.attribute_mask[i], s.attributes.is_some());
            assert_eq!(b.attribute_mask[i], b.attribute_labels[i].is_some());
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let reg = registry(&[true, false]);
        let a = sample_batch(&reg, 7, 11).unwrap();
        let b = sample_batch(&reg, 7, 11).unwrap();
        assert_eq!(a.sample_ids, b.sample_ids);
        assert_eq!(a.images, b.images);
        let c = sample_batch(&reg, 7, 12).unwrap();
        assert_ne!(a.sample_ids, c.sample_ids);
    }

    #[test]
    fn epoch_covers_every_sample_once() {
        let reg = registry(&[true, false, false]);
        let mut sampler = EpochSampler::new(&reg, 5, 1, 0).unwrap();
        let mut seen: HashMap<u64, usize> = HashMap::new();
        let mut sizes = Vec::new();
        for _ in 0..sampler.batches_per_epoch() {
            let b = sampler.next_batch(&reg).unwrap();
            sizes.push(b.len());
            for id in b.sample_ids {
                *seen.entry(id).or_default() += 1;
            }
        }
        assert_eq!(sampler.epoch(), 1);
        assert_eq!(seen.len(), reg.num_train());
        assert!(seen.values().all(|&c| c == 1));
        assert_eq!(sizes, vec![5, 5, 5, 5, 5, 5, 5, 1]);
    }

    #[test]
    fn resume_continues_sequence() {
        let reg = registry(&[false, true]);
        let mut a = EpochSampler::new(&reg, 5, 9, 2).unwrap();
        a.next_batch(&reg).unwrap();
        a.next_batch(&reg).unwrap();
        let mut b = EpochSampler::resume(&reg, 5, 9, 2, a.state()).unwrap();
        for _ in 0..6 {
            assert_eq!(a.next_batch(&reg).unwrap().sample_ids, b.next_batch(&reg).unwrap().sample_ids);
        }
    }

    #[test]
    fn empty_registry_rejected() {
        let reg = DatasetRegistry::register(vec![], AttributeSchema::empty()).unwrap();
        assert!(matches!(sample_batch(&reg, 4, 0), Err(Error::EmptyRegistry)));
    }
}
