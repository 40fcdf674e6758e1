//! Long-term extreme CDF under a frozen surrogate realization, its inversion
//! for the quantile of interest, and the unscented estimate of the quantile's
//! epistemic mean and variance.
//!
//! All arithmetic near the upper tail is done on survival functions: with
//! `N` in the hundreds of thousands, `p^{1/N}` sits within `1e-6` of one and
//! CDF-space arithmetic would lose most significant digits.

use serde::{Deserialize, Serialize};

use crate::env::ImportanceSample;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::gp::{GPosterior, PosteriorField};
use crate::response::{Family, ParamVector};
use crate::root::{brent, newton_decreasing};
use crate::ut::SigmaPointSet;

/// Lower bound applied to positive parameters of surrogate draws.
pub const CLAMP_FLOOR: f64 = 1e-6;
const HOURS_PER_YEAR: f64 = 365.25 * 24.0;
const MAX_PERIODS: f64 = 9_007_199_254_740_992.0; // 2^53

/// Return period and quantile level of the quantity of interest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremeSpec {
    /// Absent when the period count was given directly.
    pub n_years: Option<f64>,
    pub t_s_hours: Option<f64>,
    pub p: f64,
    pub n_periods: u64,
}

impl ExtremeSpec {
    pub fn new(n_years: f64, t_s_hours: f64, p: f64) -> Result<Self> {
        check_level(p)?;
        Ok(Self {
            n_years: Some(n_years),
            t_s_hours: Some(t_s_hours),
            p,
            n_periods: compute_n_periods(n_years, t_s_hours)?,
        })
    }

    /// Builds a spec directly from a period count.
    pub fn from_periods(n_periods: u64, p: f64) -> Result<Self> {
        check_level(p)?;
        if n_periods == 0 {
            return Err(Error::Input("need at least one period".into()));
        }
        Ok(Self {
            n_years: None,
            t_s_hours: None,
            p,
            n_periods,
        })
    }

    /// Exceedance level `ε* = 1 - p^{1/N}` each short-term period must match.
    pub fn exceedance(&self) -> f64 {
        exceedance_level(self.p, self.n_periods)
    }
}

fn check_level(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Input(format!("quantile level p must lie in (0, 1), got {p}")))
    }
}

/// `⌈N_y · 365.25 · 24 / T_s⌉`.
pub fn compute_n_periods(n_years: f64, t_s_hours: f64) -> Result<u64> {
    if !(n_years > 0.0 && t_s_hours > 0.0 && n_years.is_finite() && t_s_hours.is_finite()) {
        return Err(Error::Input(format!(
            "n_years and t_s_hours must be positive, got {n_years} and {t_s_hours}"
        )));
    }
    let raw = n_years * HOURS_PER_YEAR / t_s_hours;
    // absorb representation error in exact ratios such as 8766 / 3
    let near = raw.round();
    let n = if (raw - near).abs() <= 1e-9 * near.max(1.0) {
        near
    } else {
        raw.ceil()
    };
    if n > MAX_PERIODS {
        return Err(Error::Range(format!("{n} periods exceed 2^53")));
    }
    Ok((n as u64).max(1))
}

/// `1 - p^{1/N}` computed as `-expm1(ln p / N)`.
pub fn exceedance_level(p: f64, n: u64) -> f64 {
    -(p.ln() / n as f64).exp_m1()
}

/// Flat `M × d_θ` parameter block with the weights of one mixture.
struct Mixture<'a> {
    family: Family,
    params: &'a [f64],
    weights: &'a [f64],
    /// `ln β_m` for Weibull mixtures.
    log_scale: Vec<f64>,
}

impl<'a> Mixture<'a> {
    fn new(family: Family, params: &'a [f64], weights: &'a [f64]) -> Self {
        let log_scale = match family {
            Family::Weibull => params.chunks_exact(2).map(|t| t[1].ln()).collect(),
            _ => Vec::new(),
        };
        Self {
            family,
            params,
            weights,
            log_scale,
        }
    }

    fn d(&self) -> usize {
        self.family.n_params()
    }

    /// `Σ_m w_m SF(y | θ_m)` in index order.
    fn survival(&self, y: f64) -> f64 {
        self.survival_and_density(y).0
    }

    /// Mixture survival function and density at `y`, summed in index order.
    fn survival_and_density(&self, y: f64) -> (f64, f64) {
        let d = self.d();
        let (mut s, mut f) = (0.0, 0.0);
        match self.family {
            Family::Weibull => {
                if y <= 0.0 {
                    return (1.0, 0.0);
                }
                let ly = y.ln();
                for ((t, lb), w) in self.params.chunks_exact(d).zip(&self.log_scale).zip(self.weights) {
                    let a = t[0];
                    let pw = (a * (ly - lb)).exp();
                    let sm = w * (-pw).exp();
                    s += sm;
                    f += sm * a * pw;
                }
                f /= y;
            }
            Family::Exponential => {
                if y < 0.0 {
                    return (1.0, 0.0);
                }
                for (t, w) in self.params.iter().zip(self.weights) {
                    let sm = w * (-y / t).exp();
                    s += sm;
                    f += sm / t;
                }
            }
            Family::Gumbel => {
                for (t, w) in self.params.chunks_exact(d).zip(self.weights) {
                    let e = (-(y - t[0]) / t[1]).exp();
                    s += w * -(-e).exp_m1();
                    f += w * e * (-e).exp() / t[1];
                }
            }
        }
        (s, f)
    }

    /// `(ln S(y) - target, d/dy)`.
    fn log_survival_residual(&self, y: f64, target: f64) -> (f64, f64) {
        let (s, f) = self.survival_and_density(y);
        let s = s.max(f64::MIN_POSITIVE);
        (s.ln() - target, -f / s)
    }

    /// Plain Newton from a nearby starting point. `None` unless the residual
    /// shrinks steadily to the tolerance within a few steps.
    fn newton_from(&self, start: f64, target: f64) -> Option<f64> {
        let positive = self.family != Family::Gumbel;
        let mut y = start;
        let mut prev = f64::INFINITY;
        for _ in 0..8 {
            let (v, dv) = self.log_survival_residual(y, target);
            if !v.is_finite() || v.abs() > 0.5 * prev {
                return None;
            }
            if v.abs() <= 1e-13 {
                return Some(y);
            }
            if !(dv < 0.0) {
                return None;
            }
            let next = y - v / dv;
            // quadratic convergence: the residual after this step is far below tolerance
            if v.abs() <= 1e-8 && next.is_finite() {
                return Some(next);
            }
            if !next.is_finite() || (positive && next <= 0.0) {
                return None;
            }
            if (next - y).abs() <= 4.0 * f64::EPSILON * y.abs() {
                return Some(next);
            }
            prev = v.abs();
            y = next;
        }
        None
    }

    fn extreme_cdf(&self, y: f64, n: u64) -> f64 {
        let s = self.survival(y).min(1.0);
        (n as f64 * (-s).ln_1p()).exp()
    }

    /// Solves `ln S(y) = ln ε*` by safeguarded Newton inside the bracket
    /// spanned by the component quantiles, falling back to Brent.
    fn invert(&self, p: f64, n: u64, hint: Option<f64>) -> Result<f64> {
        let eps = exceedance_level(p, n);
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Inversion(format!(
                "exceedance level {eps:e} for p = {p}, N = {n} is not in (0, 1)"
            )));
        }
        let target = eps.ln();
        if let Some(z) = hint.and_then(|h| self.newton_from(h, target)) {
            return Ok(z);
        }
        let d = self.d();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for t in self.params.chunks_exact(d) {
            let q = self.family.isf_unchecked(t, eps);
            if !q.is_finite() {
                return Err(Error::Inversion(format!(
                    "component quantile is not finite for parameters {t:?}"
                )));
            }
            lo = lo.min(q);
            hi = hi.max(q);
        }
        if lo == hi {
            return Ok(lo);
        }
        let phi = |y: f64| self.log_survival_residual(y, target);
        let start = hint.unwrap_or(0.5 * (lo + hi));
        let z = match newton_decreasing(phi, lo, hi, start, 1e-13, 100) {
            Ok(z) => z,
            Err(_) => brent(|y| phi(y).0, lo, hi, 1e-13, 300)?,
        };
        let resid = (self.extreme_cdf(z, n) - p).abs();
        if resid > 1e-9 {
            log::debug!("inversion residual {resid:e} at z = {z} (bracket [{lo}, {hi}])");
        }
        Ok(z)
    }
}

fn flatten(thetas: &[ParamVector], weights: &[f64]) -> Result<(Family, Vec<f64>)> {
    let family = thetas
        .first()
        .ok_or_else(|| Error::Input("empty mixture".into()))?
        .family;
    if thetas.len() != weights.len() {
        return Err(Error::Input(format!(
            "{} parameter vectors for {} weights",
            thetas.len(),
            weights.len()
        )));
    }
    let mut flat = Vec::with_capacity(thetas.len() * family.n_params());
    for t in thetas {
        if t.family != family {
            return Err(Error::Input("mixture mixes families".into()));
        }
        family.check(&t.values)?;
        flat.extend_from_slice(&t.values);
    }
    Ok((family, flat))
}

/// `(Σ_m w_m G(y | θ_m))^N`, evaluated as `exp(N · log1p(-Σ_m w_m SF(y | θ_m)))`.
pub fn mixture_extreme_cdf(y: f64, thetas: &[ParamVector], weights: &[f64], n: u64) -> Result<f64> {
    let (family, params) = flatten(thetas, weights)?;
    Ok(Mixture::new(family, &params, weights).extreme_cdf(y, n))
}

/// Solves `(Σ_m w_m G(y | θ_m))^N = p` for `y`.
pub fn invert_extreme_quantile(p: f64, thetas: &[ParamVector], weights: &[f64], n: u64) -> Result<f64> {
    check_level(p)?;
    let (family, params) = flatten(thetas, weights)?;
    Mixture::new(family, &params, weights).invert(p, n, None)
}

/// Quantile samples at the sigma points and their unscented mean and variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QoIEstimate {
    pub z_per_sigma: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    /// Share of drawn parameter components raised to the domain floor.
    pub clamp_fraction: f64,
}

/// Unscented estimate of the quantity of interest from a posterior field over
/// the importance points. Sigma point `u_q` is shared by every point, which
/// makes the realization fully correlated across the environment.
pub fn estimate_from_field(
    family: Family,
    field: &PosteriorField,
    weights: &[f64],
    sp: &SigmaPointSet,
    spec: &ExtremeSpec,
    exec: Exec,
) -> Result<QoIEstimate> {
    let est = estimate_from_field_hinted(family, field, weights, sp, spec, None, exec)?;
    if est.clamp_fraction > 0.01 {
        log::warn!(
            "{:.2}% of surrogate parameter draws were clamped to the {} domain",
            100.0 * est.clamp_fraction,
            family.name()
        );
    }
    Ok(est)
}

/// As [`estimate_from_field`] without the clamping warning, starting each
/// inversion at `hints[q]`.
pub(crate) fn estimate_from_field_hinted(
    family: Family,
    field: &PosteriorField,
    weights: &[f64],
    sp: &SigmaPointSet,
    spec: &ExtremeSpec,
    hints: Option<&[f64]>,
    exec: Exec,
) -> Result<QoIEstimate> {
    let d = family.n_params();
    if field.n_components() != d || sp.dim() != d {
        return Err(Error::Input(format!(
            "{} needs {d} components; field has {}, sigma points have {}",
            family.name(),
            field.n_components(),
            sp.dim()
        )));
    }
    let m = field.len();
    if weights.len() != m {
        return Err(Error::Input(format!("{m} field points for {} weights", weights.len())));
    }
    let per_q = exec.try_map(sp.len(), |q| {
        let u = &sp.points[q];
        let mut params = vec![0.0; m * d];
        let mut clamped = 0usize;
        for (j, &uj) in u.iter().enumerate() {
            let positive = family.is_positive(j);
            for (i, (mu, sd)) in field.means[j].iter().zip(&field.sds[j]).enumerate() {
                let mut v = mu + sd * uj;
                if positive && v < CLAMP_FLOOR {
                    v = CLAMP_FLOOR;
                    clamped += 1;
                }
                params[i * d + j] = v;
            }
        }
        if let Some(bad) = params.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain {
                family: family.name(),
                param: "surrogate draw",
                value: *bad,
            });
        }
        let hint = hints.and_then(|h| h.get(q).copied());
        let z = Mixture::new(family, &params, weights).invert(spec.p, spec.n_periods, hint)?;
        Ok((z, clamped))
    })?;

    let z_per_sigma: Vec<f64> = per_q.iter().map(|r| r.0).collect();
    let clamped: usize = per_q.iter().map(|r| r.1).sum();
    let (mean, variance) = crate::ut::ut_scalar(&z_per_sigma, &sp.weights);
    let clamp_fraction = clamped as f64 / (m * d * sp.len()) as f64;
    Ok(QoIEstimate {
        z_per_sigma,
        mean,
        variance: variance.max(0.0),
        clamp_fraction,
    })
}

/// `Ĥ_k` and `μ̂_ẑ` for the current surrogate.
pub fn compute_h_k(
    gp: &GPosterior,
    is: &ImportanceSample,
    sp: &SigmaPointSet,
    spec: &ExtremeSpec,
    exec: Exec,
) -> Result<QoIEstimate> {
    let field = gp.field(&is.points, exec);
    estimate_from_field(gp.family(), &field, &is.weights, sp, spec, exec)
}
