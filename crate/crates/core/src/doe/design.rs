//! Space-filling designs and candidate sets.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{Bounds, EnvModel, EnvPoint};
use crate::error::{Error, Result};

const MAXIMIN_RESTARTS: usize = 20;

/// One Latin hypercube of `n` points in `[0, 1]^d`.
fn lhs_unit<R: Rng + ?Sized>(d: usize, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; d]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..d {
        perm.shuffle(rng);
        for (p, &cell) in pts.iter_mut().zip(&perm) {
            p[k] = (cell as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    pts
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn min_dist2(pts: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..pts.len() {
        for j in 0..i {
            best = best.min(dist2(&pts[i], &pts[j]));
        }
    }
    best
}

/// Best of several Latin hypercubes by minimum pairwise distance, then
/// improved by coordinate swaps that keep the Latin property.
fn maximin_lhs_unit<R: Rng + ?Sized>(d: usize, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut best = lhs_unit(d, n, rng);
    let mut best_score = min_dist2(&best);
    for _ in 1..MAXIMIN_RESTARTS {
        let cand = lhs_unit(d, n, rng);
        let score = min_dist2(&cand);
        if score > best_score {
            best = cand;
            best_score = score;
        }
    }
    if (2..=64).contains(&n) {
        for _ in 0..20 * n {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            let k = rng.random_range(0..d);
            if i == j {
                continue;
            }
            let (a, b) = (best[i][k], best[j][k]);
            best[i][k] = b;
            best[j][k] = a;
            let score = min_dist2(&best);
            if score > best_score {
                best_score = score;
            } else {
                best[i][k] = a;
                best[j][k] = b;
            }
        }
    }
    best
}

/// Maximin Latin hypercube of `n` points over `bounds`.
pub fn latin_hypercube(bounds: &Bounds, n: usize, seed: u64) -> Result<Vec<EnvPoint>> {
    bounds.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(maximin_lhs_unit(bounds.dim(), n, &mut rng)
        .into_iter()
        .map(|u| EnvPoint(bounds.from_unit(&u)))
        .collect())
}

fn fill_support<F>(env: &EnvModel, n: usize, seed: u64, mut batch: F) -> Result<Vec<EnvPoint>>
where
    F: FnMut(&mut ChaCha8Rng, bool) -> Vec<Vec<f64>>,
{
    env.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut proposals = 0usize;
    while out.len() < n {
        if proposals >= 100 * n {
            return Err(Error::Design(format!(
                "placed {} of {n} points with density above {:e} after {proposals} proposals",
                out.len(),
                env.threshold
            )));
        }
        let pts = batch(&mut rng, proposals == 0);
        proposals += pts.len();
        for u in pts {
            let x = EnvPoint(env.bounds.from_unit(&u));
            if env.density_unchecked(x.coords()) > env.threshold {
                out.push(x);
                if out.len() == n {
                    break;
                }
            }
        }
    }
    Ok(out)
}

/// Initial space-filling design of `k0` points inside the practical support.
///
/// Points of a maximin Latin hypercube over the model box that fall outside
/// the support are replaced from further hypercube batches.
pub fn initial_design(env: &EnvModel, k0: usize, seed: u64) -> Result<Vec<EnvPoint>> {
    if k0 < 2 {
        return Err(Error::Input(format!("initial design needs k0 >= 2, got {k0}")));
    }
    let d = env.dim();
    fill_support(env, k0, seed, |rng, first| {
        if first {
            maximin_lhs_unit(d, k0, rng)
        } else {
            lhs_unit(d, k0, rng)
        }
    })
}

/// `n` candidate points from plain Latin hypercube batches inside the
/// practical support.
pub fn candidate_set(env: &EnvModel, n: usize, seed: u64) -> Result<Vec<EnvPoint>> {
    if n == 0 {
        return Err(Error::Input("candidate set must be nonempty".into()));
    }
    let d = env.dim();
    fill_support(env, n, seed, |rng, _| lhs_unit(d, n, rng))
}
