//! Shrinkage estimation for the two-level Normal model
//!
//! ```text
//! y_i | θ_i ~ N(θ_i, V_i),   θ_i ~ N(x_i'β, A),   i = 1..k
//! ```
//!
//! with ADM (Beta-approximated posterior of the shrinkage factors), exact
//! Bayes, MLE and REML fitters, random-effect intervals, and a seeded
//! Monte-Carlo harness for frequency coverage.

pub mod curves;
pub mod density;
pub mod evaluate;
pub mod fitters;
pub mod inference;
pub mod io;
pub mod model;
pub mod specfun;

pub use fitters::{fit, FitError};
pub use inference::random_effects;
pub use model::{FitMethod, ModelError, PriorSpec, RandomEffectPosterior, ShrinkagePosterior, TwoLevelData};
