//! Evaluation protocol: identity splits, cross-camera trials, CMC and
//! attribute average precision.

mod attributes;
mod cmc;
pub mod reference;
mod report;
mod split;
mod spread;
mod trial;

pub use attributes::{attribute_average_precision, average_precision, AttributeAp, AttributeApReport, ClassAp};
pub use cmc::{cmc, match_ranks, CmcCurve};
pub use report::{evaluate, evaluate_attributes, evaluate_reid, DatasetEval, EvalOptions, EvalReport};
pub use split::{apply_split, make_split, SplitProtocol, SplitSpec};
pub use spread::{signature_spread, Spread};
pub use trial::{make_trial, make_trials, multi_camera, ProbeGalleryTrial};
