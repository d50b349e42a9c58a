use ndarray::Array3;
use serde::{Deserialize, Serialize};

use super::schema::AttributeAnnotation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub dataset_id: u32,
    pub name: String,
    pub num_identities: usize,
    pub has_attributes: bool,
    pub camera_count: usize,
}

/// One image. `global_identity` is only meaningful once the sample has
/// been registered; before that it mirrors `local_identity`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub sample_id: u64,
    /// H×W×C, values in [0, 1].
    pub image: Array3<f64>,
    pub local_identity: usize,
    pub global_identity: usize,
    pub dataset_id: u32,
    pub camera_id: u32,
    pub split: Split,
    pub attributes: Option<AttributeAnnotation>,
}
