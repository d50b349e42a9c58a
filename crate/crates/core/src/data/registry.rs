//! Joint training universe over several identity datasets.
//!
//! Each dataset keeps its local identity labels; registration shifts them by
//! the cumulative identity count of the datasets registered before it, so
//! identity ranges never overlap.

use std::collections::HashSet;

use super::sample::{DatasetDescriptor, Sample, Split};
use super::schema::AttributeSchema;
use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone)]
pub struct DatasetRegistry {
    descriptors: Vec<DatasetDescriptor>,
    offsets: Vec<usize>,
    schema: AttributeSchema,
    all: Vec<Sample>,
    train: Vec<usize>,
    test: Vec<usize>,
    class_counts: Vec<usize>,
    total_identities: usize,
    image_shape: Option<(usize, usize, usize)>,
}

impl DatasetRegistry {
    /// Merge datasets in the given order. Sample ids are reassigned
    /// sequentially over the input order.
    pub fn register(datasets: Vec<(DatasetDescriptor, Vec<Sample>)>, schema: AttributeSchema) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut descriptors = Vec::with_capacity(datasets.len());
        let mut offsets = Vec::with_capacity(datasets.len());
        let mut all = Vec::new();
        let mut offset = 0usize;
        let mut image_shape = None;

        for (desc, samples) in datasets {
            ensure!(seen.insert(desc.dataset_id), Error::DuplicateDataset(desc.dataset_id));
            ensure!(
                desc.num_identities > 0,
                Error::InvalidArgument(format!("dataset `{}` declares zero identities", desc.name))
            );
            ensure!(
                desc.camera_count > 0,
                Error::InvalidArgument(format!("dataset `{}` declares zero cameras", desc.name))
            );
            for mut s in samples {
                ensure!(
                    s.local_identity < desc.num_identities,
                    Error::IdentityOutOfRange {
                        dataset: desc.dataset_id,
                        identity: s.local_identity,
                        limit: desc.num_identities,
                    }
                );
                if let Some(a) = &s.attributes {
                    ensure!(
                        desc.has_attributes,
                        Error::Annotation(format!("dataset `{}` is declared without attributes", desc.name))
                    );
                    a.validate(&schema)?;
                }
                let shape = s.image.dim();
                match image_shape {
                    None => image_shape = Some(shape),
                    Some(expected) => ensure!(
                        expected == shape,
                        Error::Shape(format!("image {:?} differs from {:?}", shape, expected))
                    ),
                }
                s.dataset_id = desc.dataset_id;
                s.global_identity = offset + s.local_identity;
                s.sample_id = all.len() as u64;
                all.push(s);
            }
            offsets.push(offset);
            offset += desc.num_identities;
            descriptors.push(desc);
        }

        let total_identities = offset;
        let mut class_counts = vec![0usize; total_identities];
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, s) in all.iter().enumerate() {
            match s.split {
                Split::Train => {
                    class_counts[s.global_identity] += 1;
                    train.push(i);
                }
                Split::Test => test.push(i),
            }
        }

        Ok(Self { descriptors, offsets, schema, all, train, test, class_counts, total_identities, image_shape })
    }

    pub fn descriptors(&self) -> &[DatasetDescriptor] {
        &self.descriptors
    }

    pub fn schema(&self) -> &AttributeSchema {
        &self.schema
    }

    /// First global identity of each dataset, in registration order.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn offset_of(&self, dataset_id: u32) -> Option<usize> {
        self.descriptors.iter().position(|d| d.dataset_id == dataset_id).map(|i| self.offsets[i])
    }

    pub fn total_identities(&self) -> usize {
        self.total_identities
    }

    /// H, W, C of every registered image.
    pub fn image_shape(&self) -> Option<(usize, usize, usize)> {
        self.image_shape
    }

    pub fn num_train(&self) -> usize {
        self.train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty()
    }

    /// The i-th training sample.
    pub fn train_sample(&self, i: usize) -> &Sample {
        &self.all[self.train[i]]
    }

    pub fn train_samples(&self) -> impl Iterator<Item = &Sample> + '_ {
        self.train.iter().map(move |&i| &self.all[i])
    }

    pub fn test_samples(&self) -> impl Iterator<Item = &Sample> + '_ {
        self.test.iter().map(move |&i| &self.all[i])
    }

    pub fn all_samples(&self) -> &[Sample] {
        &self.all
    }

    pub fn sample(&self, sample_id: u64) -> Option<&Sample> {
        self.all.get(sample_id as usize)
    }

    /// Training images per global identity; zero for identities that only
    /// appear in the test split.
    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    /// Occurrences of each class of each attribute among annotated training
    /// samples.
    pub fn attribute_counts(&self) -> Vec<Vec<usize>> {
        let mut counts: Vec<Vec<usize>> = self.schema.entries().iter().map(|e| vec![0; e.cardinality]).collect();
        for s in self.train_samples() {
            if let Some(a) = &s.attributes {
                for (l, &v) in a.values().iter().enumerate() {
                    counts[l][v] += 1;
                }
            }
        }
        counts
    }

    pub fn has_attributes(&self) -> bool {
        self.descriptors.iter().any(|d| d.has_attributes)
    }
}

#[cfg(test)]
mod tests {
    use ndarray::Array3;

    use super::*;
    use crate::data::schema::AttributeAnnotation;

    fn desc(id: u32, n: usize, attrs: bool) -> DatasetDescriptor {
        DatasetDescriptor { dataset_id: id, name: format!("d{id}"), num_identities: n, has_attributes: attrs, camera_count: 2 }
    }

    fn sample(identity: usize, camera: u32, split: Split) -> Sample {
        Sample {
            sample_id: 0,
            image: Array3::zeros((2, 2, 3)),
            local_identity: identity,
            global_identity: identity,
            dataset_id: 0,
            camera_id: camera,
            split,
            attributes: None,
        }
    }

    fn one_per_identity(n: usize) -> Vec<Sample> {
        (0..n).map(|i| sample(i, 0, Split::Train)).collect()
    }

    #[test]
    fn single_dataset_keeps_local_ids() {
        let reg = DatasetRegistry::register(vec![(desc(0, 5, false), one_per_identity(5))], AttributeSchema::empty())
            .unwrap();
        let ids: Vec<_> = reg.train_samples().map(|s| s.global_identity).collect();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn two_datasets_are_offset() {
        let reg = DatasetRegistry::register(
            vec![(desc(0, 3, false), one_per_identity(3)), (desc(1, 5, false), one_per_identity(5))],
            AttributeSchema::empty(),
        )
        .unwrap();
        assert_eq!(reg.total_identities(), 8);
        let second: Vec<_> = reg.train_samples().filter(|s| s.dataset_id == 1).map(|s| s.global_identity).collect();
        assert_eq!(second, vec![3, 4, 5, 6, 7]);
    }

    #[test]
    fn reference_dataset_sizes_sum() {
        let sizes = [971, 1467, 632, 1501];
        let datasets = sizes.iter().enumerate().map(|(i, &n)| (desc(i as u32, n, i == 3), Vec::new())).collect();
        let reg = DatasetRegistry::register(datasets, AttributeSchema::pedestrian()).unwrap();
        assert_eq!(reg.total_identities(), 4571);
        assert_eq!(reg.offsets(), &[0, 971, 2438, 3070]);
    }

    #[test]
    fn rejects_duplicates_and_out_of_range() {
        let err = DatasetRegistry::register(
            vec![(desc(0, 2, false), vec![]), (desc(0, 2, false), vec![])],
            AttributeSchema::empty(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateDataset(0)));
        let err = DatasetRegistry::register(vec![(desc(0, 2, false), one_per_identity(3))], AttributeSchema::empty())
            .unwrap_err();
        assert!(matches!(err, Error::IdentityOutOfRange { identity: 2, limit: 2, .. }));
    }

    #[test]
    fn rejects_attributes_on_plain_dataset() {
        let schema = AttributeSchema::pedestrian();
        let mut s = sample(0, 0, Split::Train);
        s.attributes = Some(AttributeAnnotation::new(vec![0; 9], &schema).unwrap());
        assert!(DatasetRegistry::register(vec![(desc(0, 1, false), vec![s])], schema).is_err());
    }

    #[test]
    fn counts_use_training_split_only() {
        let samples = vec![
            sample(0, 0, Split::Train),
            sample(0, 1, Split::Train),
            sample(1, 0, Split::Test),
            sample(1, 1, Split::Test),
        ];
        let reg = DatasetRegistry::register(vec![(desc(0, 2, false), samples)], AttributeSchema::empty()).unwrap();
        assert_eq!(reg.class_counts(), &[2, 0]);
        assert_eq!(reg.num_train(), 2);
        assert_eq!(reg.test_samples().count(), 2);
    }
}
