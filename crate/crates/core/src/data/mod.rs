//! Datasets: attribute schema, samples, the merged registry, batch sampling,
//! synthetic generation and manifest ingestion.

pub mod manifest;
pub mod registry;
pub mod sample;
pub mod sampler;
pub mod schema;
pub mod synthetic;

pub use manifest::{load_manifest, write_manifest, ImageSize, ManifestEntry, ManifestHeader};
pub use registry::DatasetRegistry;
pub use sample::{DatasetDescriptor, Sample, Split};
pub use sampler::{sample_batch, Batch, EpochSampler, SamplerState};
pub use schema::{AttributeAnnotation, AttributeEntry, AttributeKind, AttributeSchema};
pub use synthetic::{generate_synthetic, SyntheticConfig};
