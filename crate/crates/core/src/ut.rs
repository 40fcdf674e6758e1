//! Symmetric sigma points for a standard normal and unscented moments.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weighted points `{(v_q, u_q)}` matching the first two moments of `N(0, I_d)`.
///
/// Ordering: `u_0 = 0`, then `+√(d+κ) e_i` and `-√(d+κ) e_i` for `i = 1..d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaPointSet {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub kappa: f64,
}

/// `max(3 - d, 0)`: fourth-moment matching for `d ≤ 3`, non-negative weights always.
pub fn default_kappa(d: usize) -> f64 {
    (3.0 - d as f64).max(0.0)
}

pub fn sigma_points(d: usize, kappa: f64) -> Result<SigmaPointSet> {
    if d == 0 {
        return Err(Error::Parameter("sigma points need d >= 1".into()));
    }
    let lambda = d as f64 + kappa;
    if !(lambda > 0.0) || !kappa.is_finite() {
        return Err(Error::Parameter(format!("d + kappa must be positive, got {lambda}")));
    }
    let spread = lambda.sqrt();
    let off = 1.0 / (2.0 * lambda);
    let mut points = vec![vec![0.0; d]];
    let mut weights = vec![kappa / lambda];
    for i in 0..d {
        for sign in [1.0, -1.0] {
            let mut u = vec![0.0; d];
            u[i] = sign * spread;
            points.push(u);
            weights.push(off);
        }
    }
    Ok(SigmaPointSet {
        points,
        weights,
        kappa,
    })
}

impl SigmaPointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }
}

/// Unscented mean `Σ v f` and covariance `Σ v (f - m)(f - m)ᵀ` (row-major).
pub fn ut_moments(values: &[Vec<f64>], weights: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if values.len() != weights.len() || values.is_empty() {
        return Err(Error::Input(format!(
            "{} values for {} weights",
            values.len(),
            weights.len()
        )));
    }
    let k = values[0].len();
    if values.iter().any(|v| v.len() != k) {
        return Err(Error::Input("sigma-point images differ in dimension".into()));
    }
    let mut mean = vec![0.0; k];
    for (f, w) in values.iter().zip(weights) {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += w * v;
        }
    }
    let mut cov = vec![0.0; k * k];
    for (f, w) in values.iter().zip(weights) {
        for i in 0..k {
            let di = f[i] - mean[i];
            for j in 0..k {
                cov[i * k + j] += w * di * (f[j] - mean[j]);
            }
        }
    }
    Ok((mean, cov))
}

/// Scalar form of [`ut_moments`].
pub fn ut_scalar(values: &[f64], weights: &[f64]) -> (f64, f64) {
    let mean: f64 = values.iter().zip(weights).map(|(f, w)| w * f).sum();
    let var: f64 = values
        .iter()
        .zip(weights)
        .map(|(f, w)| w * (f - mean) * (f - mean))
        .sum();
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_dimensional_kappa_two() {
        let sp = sigma_points(1, 2.0).unwrap();
        let s3 = 3f64.sqrt();
        assert_eq!(sp.points, vec![vec![0.0], vec![s3], vec![-s3]]);
        assert!((sp.weights[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((sp.weights[1] - 1.0 / 6.0).abs() < 1e-15);
        assert!((sp.weights[2] - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn two_dimensional_kappa_one() {
        let sp = sigma_points(2, 1.0).unwrap();
        assert_eq!(sp.len(), 5);
        for w in &sp.weights[1..] {
            assert!((w - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_nonpositive_spread() {
        assert!(sigma_points(2, -2.0).is_err());
        assert!(sigma_points(0, 1.0).is_err());
    }

    #[test]
    fn squared_normal_moments() {
        let sp = sigma_points(1, 2.0).unwrap();
        let f: Vec<f64> = sp.points.iter().map(|u| u[0] * u[0]).collect();
        let (m, v) = ut_scalar(&f, &sp.weights);
        assert!((m - 1.0).abs() < 1e-12);
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_map_has_zero_variance() {
        let sp = sigma_points(3, default_kappa(3)).unwrap();
        let f = vec![vec![4.2]; sp.len()];
        let (_, c) = ut_moments(&f, &sp.weights).unwrap();
        assert_eq!(c[0], 0.0);
    }

    proptest! {
        #[test]
        fn moments_match_standard_normal(d in 1usize..6, kappa in 0.0f64..4.0) {
            let sp = sigma_points(d, kappa).unwrap();
            prop_assert_eq!(sp.len(), 2 * d + 1);
            prop_assert!((sp.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let (m, c) = ut_moments(&sp.points, &sp.weights).unwrap();
            for i in 0..d {
                prop_assert!(m[i].abs() < 1e-12);
                for j in 0..d {
                    let e = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((c[i * d + j] - e).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn affine_maps_are_exact(
            d in 1usize..4,
            a in prop::collection::vec(-10.0f64..10.0, 3),
            b in prop::collection::vec(-3.0f64..3.0, 9),
        ) {
            let sp = sigma_points(d, default_kappa(d)).unwrap();
            let k = 3;
            let img: Vec<Vec<f64>> = sp
                .points
                .iter()
                .map(|u| (0..k).map(|i| a[i] + (0..d).map(|j| b[i * 3 + j] * u[j]).sum::<f64>()).collect())
                .collect();
            let (m, c) = ut_moments(&img, &sp.weights).unwrap();
            for i in 0..k {
                prop_assert!((m[i] - a[i]).abs() < 1e-12);
                for j in 0..k {
                    let bbt: f64 = (0..d).map(|l| b[i * 3 + l] * b[j * 3 + l]).sum();
                    prop_assert!((c[i * k + j] - bbt).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn permutation_invariant(seed in 0u64..1000) {
            let sp = sigma_points(2, 1.0).unwrap();
            let f: Vec<f64> = sp.points.iter().map(|u| (u[0] + 2.0 * u[1]).sin() + seed as f64).collect();
            let (m1, v1) = ut_scalar(&f, &sp.weights);
            let order = [3usize, 0, 4, 2, 1];
            let f2: Vec<f64> = order.iter().map(|&i| f[i]).collect();
            let w2: Vec<f64> = order.iter().map(|&i| sp.weights[i]).collect();
            let (m2, v2) = ut_scalar(&f2, &w2);
            prop_assert!((m1 - m2).abs() < 1e-12 * (1.0 + m1.abs()));
            prop_assert!((v1 - v2).abs() < 1e-12 * (1.0 + v1.abs()));
        }
    }
}
