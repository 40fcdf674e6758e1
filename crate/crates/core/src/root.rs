//! Bracketed scalar root finding.

use crate::error::{Error, Result};

/// Brent's method on `[a, b]` where `f(a)` and `f(b)` have opposite signs
/// (or one is zero). Stops when `|f| <= ftol` or the bracket shrinks below
/// a few ulps of the iterate.
pub fn brent<F: FnMut(f64) -> f64>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    ftol: f64,
    max_iter: usize,
) -> Result<f64> {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() || fa.is_nan() || fb.is_nan() {
        return Err(Error::Inversion(format!(
            "root not bracketed: f({a}) = {fa}, f({b}) = {fb}"
        )));
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + f64::MIN_POSITIVE;
        let m = 0.5 * (c - b);
        if fb.abs() <= ftol || m.abs() <= tol {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
        if fb.is_nan() {
            return Err(Error::Inversion(format!("objective is NaN at {b}")));
        }
    }
    Err(Error::Inversion(format!(
        "no convergence after {max_iter} iterations (last iterate {b}, residual {fb:e})"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_cube_root() {
        let r = brent(|x| x * x * x - 2.0, 0.0, 2.0, 0.0, 200).unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-15);
    }

    #[test]
    fn few_evaluations_on_smooth_function() {
        let mut n = 0;
        let r = brent(
            |x| {
                n += 1;
                x.exp() - 3.0
            },
            0.0,
            5.0,
            1e-14,
            200,
        )
        .unwrap();
        assert!((r - 3f64.ln()).abs() < 1e-13);
        assert!(n < 20, "{n} evaluations");
    }

    #[test]
    fn unbracketed_is_error() {
        assert!(brent(|x| x * x + 1.0, -1.0, 1.0, 0.0, 50).is_err());
    }
}

/// Safeguarded Newton iteration for a decreasing `f` on `[lo, hi]` with
/// `f(lo) >= 0 >= f(hi)`. `fdf` returns `(f, f')`. Steps that leave the
/// bracket or fail to halve the residual fall back to bisection.
pub fn newton_decreasing<F: FnMut(f64) -> (f64, f64)>(
    mut fdf: F,
    mut lo: f64,
    mut hi: f64,
    start: f64,
    ftol: f64,
    max_iter: usize,
) -> Result<f64> {
    let mut x = if start > lo && start < hi { start } else { 0.5 * (lo + hi) };
    let mut prev_abs = f64::INFINITY;
    for _ in 0..max_iter {
        let (v, dv) = fdf(x);
        if v.is_nan() {
            return Err(Error::Inversion(format!("objective is NaN at {x}")));
        }
        if v.abs() <= ftol {
            return Ok(x);
        }
        if v > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) {
            return Ok(x);
        }
        let newton = x - v / dv;
        let next = if dv < 0.0 && newton > lo && newton < hi && v.abs() <= 0.5 * prev_abs {
            newton
        } else {
            0.5 * (lo + hi)
        };
        prev_abs = v.abs();
        if next == x {
            return Ok(x);
        }
        x = next;
    }
    Err(Error::Inversion(format!(
        "safeguarded Newton did not converge in {max_iter} iterations (bracket [{lo}, {hi}])"
    )))
}
