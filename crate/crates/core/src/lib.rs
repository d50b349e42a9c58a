//! Multi-task person re-identification: identity classification, center
//! loss and pedestrian attribute prediction over a shared embedding.

pub mod codec;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluator;
pub mod losses;
pub mod matcher;
pub mod model;
pub mod optim;
pub mod pipeline;
pub mod plot;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
