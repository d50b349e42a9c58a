//! Embedding network with identity and attribute heads.

pub mod backbone;
pub mod config;
pub(crate) mod layers;
pub mod network;
pub mod param;
pub mod weights;

pub use backbone::{Backbone, BackboneCache, Pooling, TinyCnn};
pub use config::{BackboneKind, ModelConfig};
pub use network::{ForwardCache, ForwardOutput, Gradients, Model};
pub use param::{Param, ParamFilter, ParamGroup, ParamRole};
pub use weights::{LoadOptions, WeightFile};
