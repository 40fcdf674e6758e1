use serde::{Deserialize, Serialize};

/// Stationary correlation function on standardized inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    #[default]
    Matern52,
    SquaredExponential,
}

impl KernelKind {
    /// Correlation between `a` and `b` with per-axis lengthscales (unit variance).
    #[inline]
    pub fn corr(self, a: &[f64], b: &[f64], lengthscales: &[f64]) -> f64 {
        let r2: f64 = a
            .iter()
            .zip(b)
            .zip(lengthscales)
            .map(|((x, y), l)| {
                let d = (x - y) / l;
                d * d
            })
            .sum();
        match self {
            KernelKind::SquaredExponential => (-0.5 * r2).exp(),
            KernelKind::Matern52 => {
                let r = (5.0 * r2).sqrt();
                (1.0 + r + r * r / 3.0) * (-r).exp()
            }
        }
    }
}
