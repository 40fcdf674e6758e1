//! Brute-force Monte Carlo ground truth on synthetic problems.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvModel, ImportanceSample};
use crate::error::{Error, Result};
use crate::estimator::ExtremeSpec;
use crate::exec::Exec;
use crate::fixtures::TrueTheta;
use crate::response::Family;

const Z_95: f64 = 1.959_963_984_540_054;
const CHUNKS: usize = 256;

/// How the oracle draws environment points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvSampling {
    /// Sample the density directly.
    #[default]
    Direct,
    /// Rejection sampling from uniform proposals on the model box.
    Rejection,
}

/// Environment, known response parameters and quantity of interest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticProblem {
    pub env: EnvModel,
    pub truth: TrueTheta,
    pub family: Family,
    pub spec: ExtremeSpec,
    #[serde(default)]
    pub sampling: EnvSampling,
}

impl SyntheticProblem {
    pub fn theta_at(&self, x: &[f64]) -> Vec<f64> {
        self.truth.eval(&self.env.bounds, x)
    }

    /// One draw of the short-term maximum at `x`.
    pub fn simulate_one<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> f64 {
        self.family.sample(&self.theta_at(x), rng)
    }

    /// `n` short-term maxima at `x`, reproducible from `seed`.
    pub fn simulate(&self, x: &[f64], n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = self.theta_at(x);
        (0..n).map(|_| self.family.sample(&theta, &mut rng)).collect()
    }

    fn env_sampler(&self) -> Result<EnvSampler<'_>> {
        match self.sampling {
            EnvSampling::Direct => Ok(EnvSampler::Direct(&self.env)),
            EnvSampling::Rejection => RejectionSampler::new(&self.env).map(EnvSampler::Rejection),
        }
    }
}

enum EnvSampler<'a> {
    Direct(&'a EnvModel),
    Rejection(RejectionSampler<'a>),
}

impl EnvSampler<'_> {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            EnvSampler::Direct(m) => m.sample(rng),
            EnvSampler::Rejection(r) => r.sample(rng),
        }
    }
}

/// Uniform proposals on `V` accepted with probability `f(x) / envelope`.
pub struct RejectionSampler<'a> {
    env: &'a EnvModel,
    envelope: f64,
}

impl<'a> RejectionSampler<'a> {
    pub fn new(env: &'a EnvModel) -> Result<Self> {
        let per_dim = match env.dim() {
            1 => 4096,
            2 => 256,
            3 => 48,
            _ => 12,
        };
        let (vals, cell) = env.grid_values(per_dim);
        let peak = vals.iter().cloned().fold(0.0, f64::max);
        let mass: f64 = vals.iter().sum::<f64>() * cell;
        if !(peak.is_finite() && peak > 0.0) {
            return Err(Error::Sampler("density has no finite positive peak on the grid".into()));
        }
        let envelope = 1.5 * peak;
        let acceptance = mass / (envelope * env.bounds.volume());
        if acceptance < 1e-4 {
            return Err(Error::Sampler(format!(
                "rejection acceptance rate {acceptance:e} is below 1e-4"
            )));
        }
        Ok(Self { env, envelope })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.env.dim();
        loop {
            let u: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            let x = self.env.bounds.from_unit(&u);
            let f = self.env.density_unchecked(&x);
            if rng.random::<f64>() * self.envelope < f {
                return x;
            }
        }
    }
}

/// Empirical quantile of the `N`-period maximum with a 95% order-statistic interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleQuantile {
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub replications: usize,
    pub seed: u64,
    pub n_periods: u64,
    pub p: f64,
}

impl OracleQuantile {
    pub fn contains(&self, z: f64) -> bool {
        z >= self.ci_low && z <= self.ci_high
    }
}

/// Crude Monte Carlo estimate of a probability with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityEstimate {
    pub value: f64,
    pub std_error: f64,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Order-statistic ranks (1-based) of a distribution-free 95% interval for the
/// `p`-quantile of `r` draws.
pub fn quantile_ci_ranks(r: usize, p: f64) -> (usize, usize) {
    let rf = r as f64;
    let half = Z_95 * (rf * p * (1.0 - p)).sqrt();
    let lo = (rf * p - half).floor().max(1.0) as usize;
    let hi = ((rf * p + half).ceil() + 1.0).min(rf) as usize;
    (lo, hi)
}

/// Simulates `replications` independent `N`-period maxima and reports their
/// empirical `p`-quantile.
pub fn mc_extreme_quantile(
    problem: &SyntheticProblem,
    replications: usize,
    seed: u64,
    exec: Exec,
) -> Result<OracleQuantile> {
    if replications < 100 {
        return Err(Error::Input(format!("need at least 100 replications, got {replications}")));
    }
    let sampler = problem.env_sampler()?;
    let n = problem.spec.n_periods;
    let mut maxima = exec.map(replications, |rep| {
        let mut rng = stream_rng(seed, rep as u64);
        let mut best = f64::NEG_INFINITY;
        for _ in 0..n {
            let x = sampler.sample(&mut rng);
            best = best.max(problem.simulate_one(&x, &mut rng));
        }
        best
    });
    maxima.sort_by(f64::total_cmp);
    let p = problem.spec.p;
    let rank = ((replications as f64 * p).ceil() as usize).clamp(1, replications);
    let (lo, hi) = quantile_ci_ranks(replications, p);
    Ok(OracleQuantile {
        value: maxima[rank - 1],
        ci_low: maxima[lo - 1],
        ci_high: maxima[hi - 1],
        replications,
        seed,
        n_periods: n,
        p,
    })
}

/// Crude Monte Carlo estimate of the marginal short-term CDF `G(y)`.
pub fn mc_marginal_cdf(
    problem: &SyntheticProblem,
    y: f64,
    n_draws: usize,
    seed: u64,
    exec: Exec,
) -> Result<ProbabilityEstimate> {
    if n_draws < 1000 {
        return Err(Error::Input(format!("need at least 1000 draws, got {n_draws}")));
    }
    let sampler = problem.env_sampler()?;
    let per_chunk = n_draws.div_ceil(CHUNKS);
    let counts = exec.map(CHUNKS, |c| {
        let mut rng = stream_rng(seed, c as u64);
        let todo = per_chunk.min(n_draws.saturating_sub(c * per_chunk));
        let mut hits = 0usize;
        for _ in 0..todo {
            let x = sampler.sample(&mut rng);
            if problem.simulate_one(&x, &mut rng) <= y {
                hits += 1;
            }
        }
        hits
    });
    let value = counts.iter().sum::<usize>() as f64 / n_draws as f64;
    Ok(ProbabilityEstimate {
        value,
        std_error: (value * (1.0 - value) / n_draws as f64).sqrt(),
    })
}

/// Importance-sampled `G(y) ≈ Σ w_m G(y | θ(x_m))` under the known parameters,
/// with the delta-method standard error of a self-normalized estimator.
pub fn is_marginal_cdf(problem: &SyntheticProblem, is: &ImportanceSample, y: f64) -> ProbabilityEstimate {
    let g: Vec<f64> = is
        .points
        .iter()
        .map(|x| problem.family.cdf_unchecked(&problem.theta_at(x.coords()), y))
        .collect();
    let value: f64 = g.iter().zip(&is.weights).map(|(g, w)| g * w).sum();
    let var: f64 = g
        .iter()
        .zip(&is.weights)
        .map(|(g, w)| (w * (g - value)).powi(2))
        .sum();
    ProbabilityEstimate {
        value,
        std_error: var.sqrt(),
    }
}
