//! Maximum-likelihood fits with observed-information covariance.
//!
//! Two-parameter families are reduced to a one-dimensional profile equation
//! solved by safeguarded Newton; the covariance is the inverse of the
//! analytic negative Hessian of the log-likelihood at the optimum.

use super::{Family, ParamVector};
use crate::error::{Error, Result};

const MAX_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct MleFit {
    pub theta: ParamVector,
    /// Row-major `d_θ × d_θ` covariance.
    pub sigma: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
}

impl MleFit {
    pub fn sigma_diag(&self) -> Vec<f64> {
        let d = self.theta.values.len();
        (0..d).map(|i| self.sigma[i * d + i]).collect()
    }
}

pub fn log_likelihood(family: Family, theta: &[f64], samples: &[f64]) -> f64 {
    samples
        .iter()
        .map(|&y| family.log_density_unchecked(theta, y))
        .sum()
}

/// Gradient of the log-likelihood.
pub fn score(family: Family, theta: &[f64], samples: &[f64]) -> Vec<f64> {
    let n = samples.len() as f64;
    match family {
        Family::Exponential => {
            let b = theta[0];
            let s: f64 = samples.iter().sum();
            vec![-n / b + s / (b * b)]
        }
        Family::Weibull => {
            let (a, b) = (theta[0], theta[1]);
            let (mut sl, mut stl, mut st) = (0.0, 0.0, 0.0);
            for &y in samples {
                let l = (y / b).ln();
                let t = (a * l).exp();
                sl += l;
                stl += t * l;
                st += t;
            }
            vec![n / a + sl - stl, -n * a / b + a / b * st]
        }
        Family::Gumbel => {
            let (mu, b) = (theta[0], theta[1]);
            let (mut s1, mut s2) = (0.0, 0.0);
            for &y in samples {
                let z = (y - mu) / b;
                let e = 1.0 - (-z).exp();
                s1 += e;
                s2 += z * e;
            }
            vec![s1 / b, -n / b + s2 / b]
        }
    }
}

/// Negative Hessian of the log-likelihood, row-major.
pub fn observed_information(family: Family, theta: &[f64], samples: &[f64]) -> Vec<f64> {
    let n = samples.len() as f64;
    match family {
        Family::Exponential => {
            let b = theta[0];
            let s: f64 = samples.iter().sum();
            vec![-(n / (b * b) - 2.0 * s / (b * b * b))]
        }
        Family::Weibull => {
            let (a, b) = (theta[0], theta[1]);
            let (mut st, mut stl, mut stll) = (0.0, 0.0, 0.0);
            for &y in samples {
                let l = (y / b).ln();
                let t = (a * l).exp();
                st += t;
                stl += t * l;
                stll += t * l * l;
            }
            let haa = -n / (a * a) - stll;
            let hbb = n * a / (b * b) - a * (a + 1.0) / (b * b) * st;
            let hab = -n / b + st / b + a / b * stl;
            vec![-haa, -hab, -hab, -hbb]
        }
        Family::Gumbel => {
            let (mu, b) = (theta[0], theta[1]);
            let (mut se, mut s1, mut sze, mut sz1, mut szze) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for &y in samples {
                let z = (y - mu) / b;
                let e = (-z).exp();
                se += e;
                s1 += 1.0 - e;
                sze += z * e;
                sz1 += z * (1.0 - e);
                szze += z * z * e;
            }
            let b2 = b * b;
            let hmm = -se / b2;
            let hmb = -s1 / b2 - sze / b2;
            let hbb = n / b2 - 2.0 * sz1 / b2 - szze / b2;
            vec![-hmm, -hmb, -hmb, -hbb]
        }
    }
}

/// Fits `family` to `samples` by maximum likelihood.
pub fn mle_fit(family: Family, samples: &[f64]) -> Result<MleFit> {
    let d = family.n_params();
    if samples.len() < d + 1 {
        return Err(Error::Fit(format!(
            "{} fit needs at least {} samples, got {}",
            family.name(),
            d + 1,
            samples.len()
        )));
    }
    if samples.iter().any(|y| !y.is_finite()) {
        return Err(Error::Fit("non-finite sample".into()));
    }
    let first = samples[0];
    if samples.iter().all(|&y| y == first) {
        return Err(Error::Fit(format!(
            "degenerate samples: all {} values equal {first}",
            samples.len()
        )));
    }
    let (theta, iterations) = match family {
        Family::Exponential => {
            if samples.iter().any(|&y| y < 0.0) {
                return Err(Error::Fit("exponential samples must be non-negative".into()));
            }
            (vec![mean(samples)], 0)
        }
        Family::Weibull => {
            if samples.iter().any(|&y| y <= 0.0) {
                return Err(Error::Fit("weibull samples must be positive".into()));
            }
            fit_weibull(samples)?
        }
        Family::Gumbel => fit_gumbel(samples)?,
    };
    let theta = ParamVector::new(family, theta)
        .map_err(|e| Error::Fit(format!("optimum left the parameter domain: {e}")))?;

    let n = samples.len() as f64;
    let grad = score(family, &theta.values, samples);
    let rel: f64 = grad
        .iter()
        .zip(&theta.values)
        .map(|(g, t)| (g * t.abs().max(1.0) / n).powi(2))
        .sum::<f64>()
        .sqrt();
    if !(rel <= 1e-8) {
        return Err(Error::Fit(format!(
            "{} fit did not converge: relative gradient norm {rel:e} after {iterations} iterations",
            family.name()
        )));
    }

    let info = observed_information(family, &theta.values, samples);
    let sigma = invert_spd(&info, d).ok_or_else(|| {
        Error::Fit(format!(
            "observed information is not positive definite at {:?}: {info:?}",
            theta.values
        ))
    })?;
    Ok(MleFit {
        log_likelihood: log_likelihood(family, &theta.values, samples),
        theta,
        sigma,
        iterations,
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn invert_spd(a: &[f64], d: usize) -> Option<Vec<f64>> {
    match d {
        1 => (a[0] > 0.0).then(|| vec![1.0 / a[0]]),
        2 => {
            let det = a[0] * a[3] - a[1] * a[2];
            if !(a[0] > 0.0 && det > 0.0) {
                return None;
            }
            Some(vec![a[3] / det, -a[1] / det, -a[2] / det, a[0] / det])
        }
        _ => None,
    }
}

/// Finds the root of a decreasing function with a safeguarded Newton iteration.
/// `f` returns `(value, derivative)`.
fn newton_decreasing<F: Fn(f64) -> (f64, f64)>(
    f: F,
    x0: f64,
    lower: f64,
) -> Result<(f64, usize)> {
    // bracket: f(lo) > 0 > f(hi)
    let mut lo = x0;
    let mut hi = x0;
    let mut it = 0;
    while f(lo).0 <= 0.0 {
        lo = (lo / 2.0).max(lower);
        it += 1;
        if it > MAX_ITER || lo <= lower && f(lo).0 <= 0.0 {
            return Err(Error::Fit("could not bracket the profile root from below".into()));
        }
    }
    while f(hi).0 >= 0.0 {
        hi *= 2.0;
        it += 1;
        if it > MAX_ITER || !hi.is_finite() {
            return Err(Error::Fit("could not bracket the profile root from above".into()));
        }
    }
    let mut x = x0.clamp(lo, hi);
    for k in 0..MAX_ITER {
        let (v, dv) = f(x);
        if v == 0.0 {
            return Ok((x, it + k));
        }
        if v > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let mut next = x - v / dv;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.abs() || hi - lo <= 4.0 * f64::EPSILON * hi.abs() {
            return Ok((next, it + k + 1));
        }
        x = next;
    }
    Err(Error::Fit(format!(
        "profile Newton did not converge in {MAX_ITER} iterations (bracket [{lo}, {hi}])"
    )))
}

fn fit_weibull(samples: &[f64]) -> Result<(Vec<f64>, usize)> {
    let n = samples.len() as f64;
    // Work on y / max(y) so that y^α cannot overflow.
    let scale = samples.iter().cloned().fold(0.0, f64::max);
    let ln_y: Vec<f64> = samples.iter().map(|y| (y / scale).ln()).collect();
    let mean_ln = ln_y.iter().sum::<f64>() / n;
    let var_ln = ln_y.iter().map(|l| (l - mean_ln).powi(2)).sum::<f64>() / (n - 1.0);
    let a0 = std::f64::consts::PI / (6.0 * var_ln).sqrt();

    // Profile score in α: 1/α + mean(ln y) - Σ y^α ln y / Σ y^α.
    let profile = |a: f64| {
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for &l in &ln_y {
            let t = (a * l).exp();
            s0 += t;
            s1 += t * l;
            s2 += t * l * l;
        }
        let v = 1.0 / a + mean_ln - s1 / s0;
        let dv = -1.0 / (a * a) - (s2 * s0 - s1 * s1) / (s0 * s0);
        (v, dv)
    };
    let (a, iters) = newton_decreasing(profile, a0, 1e-8)?;
    let s0: f64 = ln_y.iter().map(|l| (a * l).exp()).sum();
    let b = scale * (s0 / n).powf(1.0 / a);
    Ok((vec![a, b], iters))
}

fn fit_gumbel(samples: &[f64]) -> Result<(Vec<f64>, usize)> {
    let n = samples.len() as f64;
    let m = mean(samples);
    let y_min = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let sd = (samples.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let b0 = sd * 6f64.sqrt() / std::f64::consts::PI;

    // Profile equation m - β - wmean(β) = 0 with weights exp(-(y - y_min)/β);
    // decreasing in β.
    let profile = |b: f64| {
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for &y in samples {
            let w = (-(y - y_min) / b).exp();
            s0 += w;
            s1 += w * y;
            s2 += w * y * y;
        }
        let wm = s1 / s0;
        let wvar = (s2 / s0 - wm * wm).max(0.0);
        (m - b - wm, -1.0 - wvar / (b * b))
    };
    let (b, iters) = newton_decreasing(profile, b0, 1e-12 * sd)?;
    let s0: f64 = samples.iter().map(|y| (-(y - y_min) / b).exp()).sum();
    let mu = y_min - b * (s0 / n).ln();
    Ok((vec![mu, b], iters))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn draws(family: Family, theta: &[f64], n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| family.sample(theta, &mut rng)).collect()
    }

    #[test]
    fn exponential_closed_form() {
        let ys = [0.5, 1.5, 2.0, 4.0];
        let fit = mle_fit(Family::Exponential, &ys).unwrap();
        let m = 2.0;
        assert!((fit.theta.values[0] - m).abs() < 1e-15);
        assert!((fit.sigma[0] - m * m / 4.0).abs() < 1e-12);
    }

    #[test]
    fn weibull_recovers_parameters() {
        let ys = draws(Family::Weibull, &[2.0, 3.0], 100_000, 42);
        let fit = mle_fit(Family::Weibull, &ys).unwrap();
        assert!((fit.theta.values[0] / 2.0 - 1.0).abs() < 0.02);
        assert!((fit.theta.values[1] / 3.0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn gumbel_recovers_parameters() {
        let ys = draws(Family::Gumbel, &[1.0, 0.5], 50_000, 7);
        let fit = mle_fit(Family::Gumbel, &ys).unwrap();
        assert!((fit.theta.values[0] - 1.0).abs() < 0.02);
        assert!((fit.theta.values[1] / 0.5 - 1.0).abs() < 0.02);
    }

    #[test]
    fn weibull_scale_equivariance() {
        let ys = draws(Family::Weibull, &[1.4, 2.0], 500, 3);
        let base = mle_fit(Family::Weibull, &ys).unwrap();
        for s in [0.01, 3.7, 1e4] {
            let scaled: Vec<f64> = ys.iter().map(|y| y * s).collect();
            let fit = mle_fit(Family::Weibull, &scaled).unwrap();
            assert!((fit.theta.values[0] / base.theta.values[0] - 1.0).abs() < 1e-6);
            assert!((fit.theta.values[1] / (s * base.theta.values[1]) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn information_matches_finite_difference_hessian() {
        for (fam, theta) in [
            (Family::Weibull, vec![1.8, 2.5]),
            (Family::Gumbel, vec![0.3, 1.2]),
            (Family::Exponential, vec![1.7]),
        ] {
            let ys = draws(fam, &theta, 400, 19);
            let fit = mle_fit(fam, &ys).unwrap();
            let t = &fit.theta.values;
            let d = t.len();
            let info = observed_information(fam, t, &ys);
            let ll = |p: &[f64]| log_likelihood(fam, p, &ys);
            for i in 0..d {
                for j in 0..d {
                    let hi = 1e-4 * (1.0 + t[i].abs());
                    let hj = 1e-4 * (1.0 + t[j].abs());
                    let at = |di: f64, dj: f64| {
                        let mut p = t.clone();
                        p[i] += di;
                        p[j] += dj;
                        ll(&p)
                    };
                    let fd = (at(hi, hj) - at(hi, -hj) - at(-hi, hj) + at(-hi, -hj)) / (4.0 * hi * hj);
                    let exact = -info[i * d + j];
                    assert!(
                        ((fd - exact) / exact.abs().max(1e-8)).abs() < 1e-4,
                        "{fam:?} ({i},{j}) fd={fd} exact={exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn sigma_is_symmetric_positive_definite() {
        let ys = draws(Family::Weibull, &[2.0, 3.0], 200, 5);
        let fit = mle_fit(Family::Weibull, &ys).unwrap();
        let s = &fit.sigma;
        assert_eq!(s[1], s[2]);
        assert!(s[0] > 0.0 && s[0] * s[3] - s[1] * s[2] > 0.0);
    }

    #[test]
    fn degenerate_and_short_samples_fail() {
        assert!(matches!(mle_fit(Family::Weibull, &[2.0; 10]), Err(Error::Fit(_))));
        assert!(matches!(mle_fit(Family::Weibull, &[1.0, 2.0]), Err(Error::Fit(_))));
        assert!(matches!(mle_fit(Family::Weibull, &[1.0, -2.0, 3.0]), Err(Error::Fit(_))));
    }

    #[test]
    fn weibull_sigma_matches_bootstrap_covariance() {
        let reps = 200;
        let n = 1000;
        let fit0 = mle_fit(Family::Weibull, &draws(Family::Weibull, &[2.0, 3.0], n, 1000)).unwrap();
        let fits: Vec<Vec<f64>> = (0..reps)
            .map(|r| {
                mle_fit(Family::Weibull, &draws(Family::Weibull, &[2.0, 3.0], n, 2000 + r as u64))
                    .unwrap()
                    .theta
                    .values
            })
            .collect();
        let m0 = fits.iter().map(|f| f[0]).sum::<f64>() / reps as f64;
        let m1 = fits.iter().map(|f| f[1]).sum::<f64>() / reps as f64;
        let c = |i: usize, j: usize, mi: f64, mj: f64| {
            fits.iter().map(|f| (f[i] - mi) * (f[j] - mj)).sum::<f64>() / (reps as f64 - 1.0)
        };
        let emp = [c(0, 0, m0, m0), c(0, 1, m0, m1), c(1, 1, m1, m1)];
        let model = [fit0.sigma[0], fit0.sigma[1], fit0.sigma[3]];
        for (e, s) in emp.iter().zip(&model) {
            assert!(((e - s) / s).abs() < 0.25, "empirical {emp:?} vs fisher {model:?}");
        }
    }
}
