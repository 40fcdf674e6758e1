//! Long-term extreme response quantiles from a stochastic simulator.
//!
//! A Gaussian-process surrogate over the parameters of the short-term response
//! distribution is combined with importance sampling of the environment and
//! the unscented transform to estimate the `p`-quantile of the `N`-period
//! maximum and its epistemic variance. A sequential design loop picks each new
//! simulation to minimize the expected posterior variance of that quantile.

pub mod doe;
pub mod env;
pub mod estimator;
pub mod error;
pub mod exec;
pub mod fixtures;
pub mod gp;
pub mod linalg;
pub mod oracle;
pub mod response;
pub mod root;
pub mod ut;

pub use error::{Error, Result};
pub use exec::Exec;
