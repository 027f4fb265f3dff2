//! Gibbs sampling of the nearest-neighbor spatial regression model.

pub mod carryover;
pub mod chains;
pub mod design;
pub mod predict;
pub mod updates;

pub use carryover::{carryover_rho, ExactInterceptGibbs};
pub use chains::{run_chains, FitResult, Model, ModelSpec, ModelState, ParamMode, SamplerConfig, SpatialData, SweepContext};
pub use design::{Covariate, CovariateKind, RegressionDesign};
pub use predict::{predict, Prediction};
