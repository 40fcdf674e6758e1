//! Parametric short-term response families and their maximum-likelihood fits.

mod dataset;
mod mle;

pub use dataset::{Dataset, Observation};
pub use mle::{log_likelihood, mle_fit, observed_information, MleFit};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parametric family of the short-term maximum `Y | x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// `(shape α, scale β)`; `G(y) = 1 - exp(-(y/β)^α)` for `y ≥ 0`.
    Weibull,
    /// `(location μ, scale β)`; `G(y) = exp(-exp(-(y-μ)/β))`.
    Gumbel,
    /// `(scale β)`; `G(y) = 1 - exp(-y/β)` for `y ≥ 0`.
    Exponential,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Weibull => "weibull",
            Family::Gumbel => "gumbel",
            Family::Exponential => "exponential",
        }
    }

    pub fn n_params(self) -> usize {
        match self {
            Family::Exponential => 1,
            Family::Weibull | Family::Gumbel => 2,
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Family::Weibull => &["shape", "scale"],
            Family::Gumbel => &["location", "scale"],
            Family::Exponential => &["scale"],
        }
    }

    /// Whether parameter `i` must be strictly positive.
    pub fn is_positive(self, i: usize) -> bool {
        !matches!((self, i), (Family::Gumbel, 0))
    }

    pub fn check(self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n_params() {
            return Err(Error::Input(format!(
                "{} takes {} parameters, got {}",
                self.name(),
                self.n_params(),
                theta.len()
            )));
        }
        for (i, &v) in theta.iter().enumerate() {
            if !v.is_finite() || (self.is_positive(i) && v <= 0.0) {
                return Err(Error::Domain {
                    family: self.name(),
                    param: self.param_names()[i],
                    value: v,
                });
            }
        }
        Ok(())
    }

    /// Raises positive parameters below `floor` to `floor`; returns how many moved.
    pub fn clamp(self, theta: &mut [f64], floor: f64) -> usize {
        let mut moved = 0;
        for (i, v) in theta.iter_mut().enumerate() {
            if self.is_positive(i) && *v < floor {
                *v = floor;
                moved += 1;
            }
        }
        moved
    }

    pub fn cdf(self, theta: &[f64], y: f64) -> Result<f64> {
        self.check(theta)?;
        Ok(self.cdf_unchecked(theta, y))
    }

    pub fn survival(self, theta: &[f64], y: f64) -> Result<f64> {
        self.check(theta)?;
        Ok(self.sf_unchecked(theta, y))
    }

    pub fn quantile(self, theta: &[f64], p: f64) -> Result<f64> {
        self.check(theta)?;
        check_prob(p)?;
        Ok(self.quantile_unchecked(theta, p))
    }

    /// Inverse survival function: the `y` with `survival(y) = eps`.
    pub fn inverse_survival(self, theta: &[f64], eps: f64) -> Result<f64> {
        self.check(theta)?;
        check_prob(eps)?;
        Ok(self.isf_unchecked(theta, eps))
    }

    pub fn log_density(self, theta: &[f64], y: f64) -> Result<f64> {
        self.check(theta)?;
        Ok(self.log_density_unchecked(theta, y))
    }

    pub(crate) fn cdf_unchecked(self, theta: &[f64], y: f64) -> f64 {
        match self {
            Family::Weibull => {
                if y <= 0.0 {
                    0.0
                } else {
                    -(-(y / theta[1]).powf(theta[0])).exp_m1()
                }
            }
            Family::Exponential => {
                if y <= 0.0 {
                    0.0
                } else {
                    -(-y / theta[0]).exp_m1()
                }
            }
            Family::Gumbel => (-(-(y - theta[0]) / theta[1]).exp()).exp(),
        }
    }

    pub(crate) fn sf_unchecked(self, theta: &[f64], y: f64) -> f64 {
        match self {
            Family::Weibull => {
                if y <= 0.0 {
                    1.0
                } else {
                    (-(y / theta[1]).powf(theta[0])).exp()
                }
            }
            Family::Exponential => {
                if y <= 0.0 {
                    1.0
                } else {
                    (-y / theta[0]).exp()
                }
            }
            Family::Gumbel => -(-(-(y - theta[0]) / theta[1]).exp()).exp_m1(),
        }
    }

    pub(crate) fn quantile_unchecked(self, theta: &[f64], p: f64) -> f64 {
        match self {
            Family::Weibull => theta[1] * (-(-p).ln_1p()).powf(1.0 / theta[0]),
            Family::Exponential => -theta[0] * (-p).ln_1p(),
            Family::Gumbel => theta[0] - theta[1] * (-p.ln()).ln(),
        }
    }

    pub(crate) fn isf_unchecked(self, theta: &[f64], eps: f64) -> f64 {
        match self {
            Family::Weibull => theta[1] * (-eps.ln()).powf(1.0 / theta[0]),
            Family::Exponential => -theta[0] * eps.ln(),
            Family::Gumbel => theta[0] - theta[1] * (-(-eps).ln_1p()).ln(),
        }
    }

    pub(crate) fn log_density_unchecked(self, theta: &[f64], y: f64) -> f64 {
        match self {
            Family::Weibull => {
                if y <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let (a, b) = (theta[0], theta[1]);
                let r = y / b;
                a.ln() - b.ln() + (a - 1.0) * r.ln() - r.powf(a)
            }
            Family::Exponential => {
                if y < 0.0 {
                    return f64::NEG_INFINITY;
                }
                -theta[0].ln() - y / theta[0]
            }
            Family::Gumbel => {
                let z = (y - theta[0]) / theta[1];
                -theta[1].ln() - z - (-z).exp()
            }
        }
    }

    /// Draws one variate by inversion.
    pub fn sample<R: Rng + ?Sized>(self, theta: &[f64], rng: &mut R) -> f64 {
        // open interval (0, 1)
        let u: f64 = loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                break u;
            }
        };
        self.isf_unchecked(theta, u)
    }
}

fn check_prob(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Input(format!("probability must lie in (0, 1), got {p}")))
    }
}

/// Response-distribution parameters `θ` tagged with their family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub family: Family,
    pub values: Vec<f64>,
}

impl ParamVector {
    /// Builds a parameter vector, rejecting values outside the family domain.
    pub fn new(family: Family, values: Vec<f64>) -> Result<Self> {
        family.check(&values)?;
        Ok(Self { family, values })
    }

    /// Builds a parameter vector without a domain check (raw GP draws).
    pub fn raw(family: Family, values: Vec<f64>) -> Self {
        Self { family, values }
    }

    pub fn is_in_domain(&self) -> bool {
        self.family.check(&self.values).is_ok()
    }

    pub fn cdf(&self, y: f64) -> Result<f64> {
        self.family.cdf(&self.values, y)
    }

    pub fn survival(&self, y: f64) -> Result<f64> {
        self.family.survival(&self.values, y)
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        self.family.quantile(&self.values, p)
    }

    pub fn log_density(&self, y: f64) -> Result<f64> {
        self.family.log_density(&self.values, y)
    }
}
