//! Kernel SVM classification with the rescaled Huberized pinball loss.
//!
//! The loss `eta (1 - exp(-L_hp(u) / lambda))` is bounded, so a single far
//! outlier can contribute at most `eta` to the objective. Training splits it
//! into a convex and a concave part and runs the concave-convex procedure,
//! with either a Newton-type primal solver or clipped dual coordinate descent
//! for the convex subproblems. Hinge, pinball and Huberized pinball SVMs are
//! available as baselines.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod format;
pub mod kernel;
pub mod loss;
pub mod model;
pub mod solver;

pub use error::{Error, Result};
pub use kernel::KernelSpec;
pub use loss::{LossKind, LossParams};
pub use model::{fit, FitConfig, TrainedModel};
pub use solver::{InnerMethod, SolverConfig};
