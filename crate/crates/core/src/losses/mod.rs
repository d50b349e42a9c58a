//! Training objective: weighted identity cross-entropy, center loss,
//! reweighted attribute losses and their masked combination, each with an
//! analytic gradient.

pub mod attribute;
pub mod center;
pub mod gradcheck;
pub mod identity;
pub mod total;
pub mod weights;

pub use attribute::{attribute_loss_sample, AttributeSampleLoss};
pub use center::{center_loss, update_centers, CenterLoss, Centers};
pub use gradcheck::{finite_difference_check, numerical_gradient, GradCheckReport};
pub use identity::{identity_loss, IdentityLoss};
pub use total::{total_loss, LossBreakdown, LossGrads, OutputsView, Targets};
pub use weights::LossWeights;
