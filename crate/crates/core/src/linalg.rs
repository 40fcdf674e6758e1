//! Small dense Cholesky factorization with row appends.
//!
//! Kernel matrices here are at most a few hundred rows, so a row-major
//! `Vec<f64>` is enough.

/// Lower-triangular factor `L` with `L Lᵀ = A`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factors the symmetric matrix `a` (row-major, `n × n`). Returns `None`
    /// if a pivot is not strictly positive.
    pub fn factor(a: &[f64], n: usize) -> Option<Self> {
        assert_eq!(a.len(), n * n);
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Some(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.l[i * self.n + j]
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s: f64 = row.iter().zip(&x[..i]).map(|(a, b)| a * b).sum();
            x[i] = (x[i] - s) / self.l[i * n + i];
        }
        x
    }

    /// Solves `Lᵀ x = b`.
    pub fn solve_upper(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * x[k];
            }
            x[i] = s / self.l[i * n + i];
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum::<f64>()
    }

    /// Extends the factor of `A` to the factor of `[[A, c], [cᵀ, d]]`.
    ///
    /// `cross` is `c` and `diag` is `d`. Costs one triangular solve.
    /// Returns `None` if the Schur complement is not strictly positive.
    pub fn append(&self, cross: &[f64], diag: f64) -> Option<Self> {
        assert_eq!(cross.len(), self.n);
        let w = self.solve_lower(cross);
        let schur = diag - w.iter().map(|v| v * v).sum::<f64>();
        if !(schur > 0.0) || !schur.is_finite() {
            return None;
        }
        let n = self.n + 1;
        let mut l = vec![0.0; n * n];
        for i in 0..self.n {
            l[i * n..i * n + i + 1].copy_from_slice(&self.l[i * self.n..i * self.n + i + 1]);
        }
        l[self.n * n..self.n * n + self.n].copy_from_slice(&w);
        l[self.n * n + self.n] = schur.sqrt();
        Some(Self { n, l })
    }
}
