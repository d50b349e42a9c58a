//! Two-stage training: identity and center losses first, then a low
//! learning-rate continuation that may add the attribute losses.

mod checkpoint;
mod hyper;
mod log;
mod run;

pub use checkpoint::{checkpoint_stage, resume, resume_into};
pub use hyper::{Hyperparameters, Stage, ALPHA_GRID};
pub use log::{LogRecord, TrainingLog, CSV_HEADER};
pub use run::{run_stage, StageOutcome, Trainer};
