//! Signature extraction, cosine distance and gallery ranking.

mod distance;
mod extract;
mod store;

pub use distance::{cosine_distance, rank, rank_sample, RankedResult};
pub(crate) use extract::forward_all;
pub use extract::extract;
pub use store::{SignatureStore, STORE_MAGIC, STORE_VERSION};
