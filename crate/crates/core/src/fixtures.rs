//! Synthetic problems with known response parameters.
//!
//! Reference values computed from these (oracle quantiles, acquisition
//! argmins) are produced by the [`crate::oracle`] module, never written in
//! by hand.

use serde::{Deserialize, Serialize};

use crate::env::{Bounds, EnvDensity, EnvModel, Hierarchical, Marginal};
use crate::error::{Error, Result};
use crate::estimator::ExtremeSpec;
use crate::oracle::{EnvSampling, SyntheticProblem};
use crate::response::Family;

/// Known map `x ↦ θ(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrueTheta {
    /// Weibull with `α = 1.5 + 0.3 u₁`, `β = 2 + 0.5 u₁² + 0.3 u₂` on
    /// unit-cube coordinates `u`.
    FixtureA,
    /// Exponential scale `1 + 1.5 exp(-((u - 0.7) / 0.12)²)`.
    Bump1d,
    Constant { theta: Vec<f64> },
}

impl TrueTheta {
    pub fn eval(&self, bounds: &Bounds, x: &[f64]) -> Vec<f64> {
        match self {
            TrueTheta::FixtureA => {
                let u = bounds.standardize(x);
                vec![1.5 + 0.3 * u[0], 2.0 + 0.5 * u[0] * u[0] + 0.3 * u[1]]
            }
            TrueTheta::Bump1d => {
                let u = bounds.standardize(x)[0];
                vec![1.0 + 1.5 * (-((u - 0.7) / 0.12).powi(2)).exp()]
            }
            TrueTheta::Constant { theta } => theta.clone(),
        }
    }
}

/// Two-dimensional metocean-style environment (wave height, period) with a
/// Weibull response whose parameters grow with both variables.
pub fn fixture_a() -> SyntheticProblem {
    let density = EnvDensity::Hierarchical(Hierarchical {
        first: Marginal::Weibull {
            shape: 2.0,
            scale: 2.5,
            location: 0.0,
        },
        log_mean: [1.1, 0.6, 0.5],
        log_sd: [0.07, 0.15, 0.3],
    });
    let bounds = Bounds {
        lo: vec![0.0, 1.5],
        hi: vec![9.0, 28.0],
    };
    let env = EnvModel {
        density,
        bounds,
        threshold: 1e-6,
        labels: vec!["hs_m".into(), "tp_s".into()],
    };
    SyntheticProblem {
        env,
        truth: TrueTheta::FixtureA,
        family: Family::Weibull,
        spec: ExtremeSpec::from_periods(1000, 0.5).expect("valid spec"),
        sampling: EnvSampling::Direct,
    }
}

/// One-dimensional uniform environment with an exponential response whose
/// scale peaks at `x = 0.7`.
pub fn fixture_1d() -> SyntheticProblem {
    SyntheticProblem {
        env: EnvModel {
            density: EnvDensity::Uniform,
            bounds: Bounds::unit(1),
            threshold: 1e-3,
            labels: vec!["x".into()],
        },
        truth: TrueTheta::Bump1d,
        family: Family::Exponential,
        spec: ExtremeSpec::from_periods(100, 0.5).expect("valid spec"),
        sampling: EnvSampling::Direct,
    }
}

/// Environment concentrated at one point with an `Exponential(1)` response.
pub fn degenerate_exponential(n_periods: u64, p: f64) -> Result<SyntheticProblem> {
    Ok(SyntheticProblem {
        env: EnvModel::new(
            EnvDensity::PointMass { at: vec![0.0] },
            Bounds::new(vec![-1.0], vec![1.0])?,
            1e-12,
        )?,
        truth: TrueTheta::Constant { theta: vec![1.0] },
        family: Family::Exponential,
        spec: ExtremeSpec::from_periods(n_periods, p)?,
        sampling: EnvSampling::Direct,
    })
}

/// Looks up a builtin problem by name.
pub fn by_name(name: &str) -> Result<SyntheticProblem> {
    match name {
        "fixture-a" => Ok(fixture_a()),
        "fixture-1d" => Ok(fixture_1d()),
        "degenerate" => degenerate_exponential(1000, 0.5),
        other => Err(Error::Input(format!(
            "unknown fixture '{other}' (expected fixture-a, fixture-1d or degenerate)"
        ))),
    }
}
