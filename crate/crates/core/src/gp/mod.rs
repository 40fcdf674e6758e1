//! Independent heteroscedastic Gaussian-process regression of each response
//! parameter over standardized environment coordinates.
//!
//! Every component `j` of `θ(x)` gets its own scalar GP with a constant prior
//! mean, an anisotropic stationary kernel, and per-observation noise taken
//! from the diagonal of the observation covariance. Hypothetical observations
//! extend the existing Cholesky factor by one row instead of refactoring.

mod kernel;
mod optim;

pub use kernel::KernelKind;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Bounds, EnvPoint};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::Cholesky;
use crate::response::{Dataset, Family, ParamVector};

const MAX_JITTER: f64 = 1e-6;
/// In unit-cube coordinates; longer scales are indistinguishable from a
/// constant on the design box and only degrade conditioning.
const MAX_LENGTHSCALE: f64 = 5.0;
const LOG_2PI: f64 = 1.837_877_066_409_345_5;

/// Fitting options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpOptions {
    pub kernel: KernelKind,
    /// Diagonal jitter relative to the signal variance.
    pub jitter: f64,
    pub n_starts: usize,
    pub max_evals: usize,
}

impl Default for GpOptions {
    fn default() -> Self {
        Self {
            kernel: KernelKind::Matern52,
            jitter: 1e-10,
            n_starts: 4,
            max_evals: 400,
        }
    }
}

/// Hyperparameters of one scalar GP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentHyper {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub mean: f64,
}

/// Kernel choice plus fitted hyperparameters for every component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GPConfig {
    pub kernel: KernelKind,
    pub jitter: f64,
    pub components: Vec<ComponentHyper>,
}

#[derive(Debug, Clone)]
struct ScalarGp {
    hyper: ComponentHyper,
    targets: Vec<f64>,
    noise: Vec<f64>,
    chol: Cholesky,
    alpha: Vec<f64>,
    jitter_abs: f64,
}

/// Posterior mean, diagonal covariance and its Cholesky factor at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorAtPoint {
    pub mu: Vec<f64>,
    /// Row-major `d_θ × d_θ`.
    pub cov: Vec<f64>,
    /// Lower-triangular `L` with `L Lᵀ = cov`, row-major.
    pub chol: Vec<f64>,
}

/// Posterior mean and standard deviation of every component at a fixed point set.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorField {
    /// `means[j][m]`.
    pub means: Vec<Vec<f64>>,
    /// `sds[j][m]`.
    pub sds: Vec<Vec<f64>>,
}

impl PosteriorField {
    pub fn len(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_components(&self) -> usize {
        self.means.len()
    }

    /// A field with known parameters and no epistemic uncertainty.
    pub fn exact(thetas: &[Vec<f64>]) -> Self {
        let d = thetas.first().map_or(0, Vec::len);
        let means = (0..d).map(|j| thetas.iter().map(|t| t[j]).collect()).collect();
        let sds = (0..d).map(|_| vec![0.0; thetas.len()]).collect();
        Self { means, sds }
    }
}

#[derive(Debug, Clone)]
pub struct GPosterior {
    config: GPConfig,
    bounds: Bounds,
    family: Family,
    inputs: Vec<Vec<f64>>,
    comps: Vec<ScalarGp>,
}

struct Prepared {
    inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
    noise: Vec<Vec<f64>>,
}

fn prepare(data: &Dataset, bounds: &Bounds) -> Result<(Family, Prepared)> {
    let family = data
        .family()
        .ok_or_else(|| Error::Input("cannot condition a GP on an empty dataset".into()))?;
    if data.dim() != Some(bounds.dim()) {
        return Err(Error::Input(format!(
            "dataset dimension {:?} does not match bounds dimension {}",
            data.dim(),
            bounds.dim()
        )));
    }
    let d = family.n_params();
    let inputs = data
        .records()
        .iter()
        .map(|r| bounds.standardize(r.x.coords()))
        .collect();
    let targets = (0..d)
        .map(|j| data.records().iter().map(|r| r.theta_obs.values[j]).collect())
        .collect();
    let noise = (0..d)
        .map(|j| data.records().iter().map(|r| r.sigma[j * d + j]).collect())
        .collect();
    Ok((family, Prepared { inputs, targets, noise }))
}

fn weighted_mean(targets: &[f64], noise: &[f64]) -> (f64, f64) {
    let n = targets.len() as f64;
    let plain = targets.iter().sum::<f64>() / n;
    let var_y = if targets.len() > 1 {
        targets.iter().map(|t| (t - plain).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let floor = (1e-6 * var_y).max(1e-12 * (1.0 + plain * plain));
    let (mut sw, mut swy) = (0.0, 0.0);
    for (t, s) in targets.iter().zip(noise) {
        let w = 1.0 / (s + floor);
        sw += w;
        swy += w * t;
    }
    (swy / sw, var_y)
}

fn kernel_matrix(
    kernel: KernelKind,
    inputs: &[Vec<f64>],
    hyper: &ComponentHyper,
    noise: &[f64],
    jitter_abs: f64,
) -> Vec<f64> {
    let n = inputs.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..i {
            let v = hyper.signal_variance * kernel.corr(&inputs[i], &inputs[j], &hyper.lengthscales);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
        k[i * n + i] = hyper.signal_variance + noise[i] + jitter_abs;
    }
    k
}

/// Factors the kernel matrix, escalating jitter by decades up to `MAX_JITTER`.
fn factor_with_jitter(
    kernel: KernelKind,
    inputs: &[Vec<f64>],
    hyper: &ComponentHyper,
    noise: &[f64],
    jitter: f64,
) -> Result<(Cholesky, f64)> {
    let mut rel = jitter;
    loop {
        let jitter_abs = rel * hyper.signal_variance;
        let k = kernel_matrix(kernel, inputs, hyper, noise, jitter_abs);
        if let Some(c) = Cholesky::factor(&k, inputs.len()) {
            return Ok((c, jitter_abs));
        }
        if rel >= MAX_JITTER {
            return Err(Error::Conditioning { jitter: rel });
        }
        rel = (rel * 10.0).clamp(1e-14, MAX_JITTER);
    }
}

fn build_component(
    kernel: KernelKind,
    jitter: f64,
    inputs: &[Vec<f64>],
    hyper: ComponentHyper,
    targets: Vec<f64>,
    noise: Vec<f64>,
) -> Result<ScalarGp> {
    let (chol, jitter_abs) = factor_with_jitter(kernel, inputs, &hyper, &noise, jitter)?;
    let resid: Vec<f64> = targets.iter().map(|t| t - hyper.mean).collect();
    let alpha = chol.solve(&resid);
    Ok(ScalarGp {
        hyper,
        targets,
        noise,
        chol,
        alpha,
        jitter_abs,
    })
}

fn neg_log_marginal(
    kernel: KernelKind,
    jitter: f64,
    inputs: &[Vec<f64>],
    hyper: &ComponentHyper,
    targets: &[f64],
    noise: &[f64],
) -> f64 {
    let Ok((chol, _)) = factor_with_jitter(kernel, inputs, hyper, noise, jitter) else {
        return f64::INFINITY;
    };
    let resid: Vec<f64> = targets.iter().map(|t| t - hyper.mean).collect();
    let w = chol.solve_lower(&resid);
    0.5 * w.iter().map(|v| v * v).sum::<f64>()
        + 0.5 * chol.log_det()
        + 0.5 * inputs.len() as f64 * LOG_2PI
}

/// Maximizes the log marginal likelihood over log-lengthscales and log signal
/// variance from a fixed, seed-determined set of starts.
fn optimize_component(
    opts: &GpOptions,
    inputs: &[Vec<f64>],
    targets: &[f64],
    noise: &[f64],
    seed: u64,
) -> ComponentHyper {
    let dx = inputs[0].len();
    let (mean, var_y) = weighted_mean(targets, noise);
    let mean_noise = noise.iter().sum::<f64>() / noise.len() as f64;
    let scale = var_y
        .max(mean_noise)
        .max((0.1 * mean).powi(2))
        .max(1e-12);
    let default = ComponentHyper {
        lengthscales: vec![0.3; dx],
        signal_variance: scale,
        mean,
    };
    if inputs.len() < 2 {
        return default;
    }

    let mut lo = vec![0.02f64.ln(); dx];
    let mut hi = vec![MAX_LENGTHSCALE.ln(); dx];
    lo.push((1e-8 * scale).ln());
    hi.push((1e3 * scale).ln());
    let unpack = |p: &[f64]| ComponentHyper {
        lengthscales: p[..dx].iter().map(|v| v.exp()).collect(),
        signal_variance: p[dx].exp(),
        mean,
    };
    let objective = |p: &[f64]| {
        neg_log_marginal(opts.kernel, opts.jitter, inputs, &unpack(p), targets, noise)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = vec![{
        let mut p: Vec<f64> = default.lengthscales.iter().map(|l| l.ln()).collect();
        p.push(scale.ln());
        p
    }];
    for _ in 1..opts.n_starts.max(1) {
        starts.push(
            lo.iter()
                .zip(&hi)
                .map(|(l, h)| l + (h - l) * rng.random::<f64>())
                .collect(),
        );
    }
    let mut best: Option<optim::Minimum> = None;
    for s in &starts {
        let m = optim::nelder_mead(objective, s, &lo, &hi, opts.max_evals);
        if best.as_ref().is_none_or(|b| m.f < b.f) {
            best = Some(m);
        }
    }
    match best {
        Some(b) if b.f.is_finite() => unpack(&b.x),
        _ => default,
    }
}

impl GPosterior {
    /// Fits hyperparameters per component by maximum marginal likelihood, then
    /// conditions on `data`.
    ///
    /// With a single record the optimization is skipped and deterministic
    /// default hyperparameters are used.
    pub fn fit(data: &Dataset, bounds: &Bounds, opts: &GpOptions, seed: u64) -> Result<Self> {
        Self::fit_with(data, bounds, opts, seed, Exec::default())
    }

    pub fn fit_with(
        data: &Dataset,
        bounds: &Bounds,
        opts: &GpOptions,
        seed: u64,
        exec: Exec,
    ) -> Result<Self> {
        let (family, prep) = prepare(data, bounds)?;
        let d = family.n_params();
        let hypers = exec.map(d, |j| {
            optimize_component(
                opts,
                &prep.inputs,
                &prep.targets[j],
                &prep.noise[j],
                seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(j as u64 + 1)),
            )
        });
        let config = GPConfig {
            kernel: opts.kernel,
            jitter: opts.jitter,
            components: hypers,
        };
        Self::assemble(config, bounds.clone(), family, prep)
    }

    /// Conditions on `data` with frozen hyperparameters.
    pub fn from_config(data: &Dataset, bounds: &Bounds, config: &GPConfig) -> Result<Self> {
        let (family, prep) = prepare(data, bounds)?;
        if config.components.len() != family.n_params()
            || config
                .components
                .iter()
                .any(|c| c.lengthscales.len() != bounds.dim())
        {
            return Err(Error::Input(
                "GP configuration does not match the dataset's family or dimension".into(),
            ));
        }
        Self::assemble(config.clone(), bounds.clone(), family, prep)
    }

    fn assemble(config: GPConfig, bounds: Bounds, family: Family, prep: Prepared) -> Result<Self> {
        let Prepared { inputs, targets, noise } = prep;
        let comps = config
            .components
            .iter()
            .cloned()
            .zip(targets.into_iter().zip(noise))
            .map(|(h, (t, s))| build_component(config.kernel, config.jitter, &inputs, h, t, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            bounds,
            family,
            inputs,
            comps,
        })
    }

    pub fn config(&self) -> &GPConfig {
        &self.config
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn n_components(&self) -> usize {
        self.comps.len()
    }

    pub fn n_observations(&self) -> usize {
        self.inputs.len()
    }

    /// Log marginal likelihood of component `j` under the current hyperparameters.
    pub fn log_marginal_likelihood(&self, j: usize) -> f64 {
        let c = &self.comps[j];
        let resid: Vec<f64> = c.targets.iter().map(|t| t - c.hyper.mean).collect();
        let w = c.chol.solve_lower(&resid);
        -0.5 * w.iter().map(|v| v * v).sum::<f64>()
            - 0.5 * c.chol.log_det()
            - 0.5 * self.inputs.len() as f64 * LOG_2PI
    }

    fn cross(&self, c: &ScalarGp, z: &[f64]) -> Vec<f64> {
        self.inputs
            .iter()
            .map(|xi| {
                c.hyper.signal_variance * self.config.kernel.corr(xi, z, &c.hyper.lengthscales)
            })
            .collect()
    }

    /// Mean, variance and projection `L⁻¹ k(X, z)` of component `c` at standardized `z`.
    fn predict_std(&self, c: &ScalarGp, z: &[f64]) -> (f64, f64, Vec<f64>) {
        let k = self.cross(c, z);
        let mean = c.hyper.mean + k.iter().zip(&c.alpha).map(|(a, b)| a * b).sum::<f64>();
        let v = c.chol.solve_lower(&k);
        let var = (c.hyper.signal_variance - v.iter().map(|x| x * x).sum::<f64>()).max(0.0);
        (mean, var, v)
    }

    pub fn posterior_at(&self, x: &EnvPoint) -> PosteriorAtPoint {
        if !self.bounds.contains(x.coords()) {
            log::warn!("GP queried outside its bounds at {:?}", x.coords());
        }
        let z = self.bounds.standardize(x.coords());
        let d = self.comps.len();
        let mut mu = vec![0.0; d];
        let mut cov = vec![0.0; d * d];
        let mut chol = vec![0.0; d * d];
        for (j, c) in self.comps.iter().enumerate() {
            let (m, v, _) = self.predict_std(c, &z);
            mu[j] = m;
            cov[j * d + j] = v;
            chol[j * d + j] = v.sqrt();
        }
        PosteriorAtPoint { mu, cov, chol }
    }

    /// Finite-dimensional realization `μ(x) + L(x) u`. Reusing one `u` across
    /// different `x` gives the fully correlated realization.
    pub fn realize(&self, x: &EnvPoint, u: &[f64]) -> Result<ParamVector> {
        let d = self.comps.len();
        if u.len() != d {
            return Err(Error::Input(format!("u has {} entries, need {d}", u.len())));
        }
        let p = self.posterior_at(x);
        let values = (0..d)
            .map(|i| p.mu[i] + (0..=i).map(|k| p.chol[i * d + k] * u[k]).sum::<f64>())
            .collect();
        Ok(ParamVector::raw(self.family, values))
    }

    /// Posterior after adding the observation `(x, theta, noise)` with the
    /// hyperparameters held fixed. Only the diagonal of `noise` is used.
    pub fn condition_on(&self, x: &EnvPoint, theta: &[f64], noise: &[f64]) -> Result<Self> {
        let d = self.comps.len();
        if theta.len() != d || noise.len() != d * d {
            return Err(Error::Input("fantasy observation has the wrong dimension".into()));
        }
        if (0..d).any(|j| !(noise[j * d + j] >= 0.0)) {
            return Err(Error::Input("fantasy noise must be positive semidefinite".into()));
        }
        let z = self.bounds.standardize(x.coords());
        let mut inputs = self.inputs.clone();
        inputs.push(z.clone());
        let mut comps = Vec::with_capacity(d);
        for (j, c) in self.comps.iter().enumerate() {
            let s = noise[j * d + j];
            let k = self.cross(c, &z);
            let diag = c.hyper.signal_variance + s + c.jitter_abs;
            let mut targets = c.targets.clone();
            targets.push(theta[j]);
            let mut nv = c.noise.clone();
            nv.push(s);
            let comp = match c.chol.append(&k, diag) {
                Some(chol) => {
                    let resid: Vec<f64> = targets.iter().map(|t| t - c.hyper.mean).collect();
                    let alpha = chol.solve(&resid);
                    ScalarGp {
                        hyper: c.hyper.clone(),
                        targets,
                        noise: nv,
                        chol,
                        alpha,
                        jitter_abs: c.jitter_abs,
                    }
                }
                None => build_component(
                    self.config.kernel,
                    self.config.jitter,
                    &inputs,
                    c.hyper.clone(),
                    targets,
                    nv,
                )?,
            };
            comps.push(comp);
        }
        Ok(Self {
            config: self.config.clone(),
            bounds: self.bounds.clone(),
            family: self.family,
            inputs,
            comps,
        })
    }

    /// Posterior means and standard deviations at `points`.
    pub fn field(&self, points: &[EnvPoint], exec: Exec) -> PosteriorField {
        let per_point = exec.map(points.len(), |m| {
            let z = self.bounds.standardize(points[m].coords());
            self.comps
                .iter()
                .map(|c| {
                    let (mean, var, _) = self.predict_std(c, &z);
                    (mean, var.sqrt())
                })
                .collect::<Vec<_>>()
        });
        let d = self.comps.len();
        PosteriorField {
            means: (0..d).map(|j| per_point.iter().map(|p| p[j].0).collect()).collect(),
            sds: (0..d).map(|j| per_point.iter().map(|p| p[j].1).collect()).collect(),
        }
    }

    /// Caches what one-point fantasy updates need at a fixed point set.
    pub fn fantasy_cache(&self, points: &[EnvPoint], exec: Exec) -> FantasyCache {
        let n = self.inputs.len();
        let per_point = exec.map(points.len(), |m| {
            let z = self.bounds.standardize(points[m].coords());
            let comps = self.comps.iter().map(|c| self.predict_std(c, &z)).collect::<Vec<_>>();
            (z, comps)
        });
        let d = self.comps.len();
        let mut comps = Vec::with_capacity(d);
        for j in 0..d {
            let mut proj = Vec::with_capacity(points.len() * n);
            let mut means = Vec::with_capacity(points.len());
            let mut vars = Vec::with_capacity(points.len());
            for (_, c) in &per_point {
                means.push(c[j].0);
                vars.push(c[j].1);
                proj.extend_from_slice(&c[j].2);
            }
            comps.push(CachedComponent { means, vars, proj });
        }
        FantasyCache {
            points: per_point.into_iter().map(|(z, _)| z).collect(),
            n_train: n,
            comps,
        }
    }

    /// Everything a one-point fantasy update at `x` with noise diagonal `noise`
    /// does to the cached field.
    pub fn fantasy_plan(&self, cache: &FantasyCache, x: &EnvPoint, noise: &[f64]) -> FantasyPlan {
        assert_eq!(cache.n_train, self.inputs.len(), "stale fantasy cache");
        let z = self.bounds.standardize(x.coords());
        let mut mu_x = Vec::with_capacity(self.comps.len());
        let mut sd_x = Vec::with_capacity(self.comps.len());
        let mut gains = Vec::with_capacity(self.comps.len());
        let mut sds = Vec::with_capacity(self.comps.len());
        let n = cache.n_train;
        for (j, c) in self.comps.iter().enumerate() {
            let (m, v, vx) = self.predict_std(c, &z);
            let denom = v + noise[j] + c.jitter_abs;
            let cc = &cache.comps[j];
            let mut g = Vec::with_capacity(cache.points.len());
            let mut s = Vec::with_capacity(cache.points.len());
            for (i, zm) in cache.points.iter().enumerate() {
                let kmx = c.hyper.signal_variance
                    * self.config.kernel.corr(zm, &z, &c.hyper.lengthscales);
                let pm = &cc.proj[i * n..(i + 1) * n];
                let cov = kmx - pm.iter().zip(&vx).map(|(a, b)| a * b).sum::<f64>();
                let (gain, var) = if denom > 0.0 {
                    (cov / denom, (cc.vars[i] - cov * cov / denom).max(0.0))
                } else {
                    (0.0, cc.vars[i])
                };
                g.push(gain);
                s.push(var.sqrt());
            }
            mu_x.push(m);
            sd_x.push(v.sqrt());
            gains.push(g);
            sds.push(s);
        }
        FantasyPlan {
            mu_x,
            sd_x,
            gains,
            sds,
        }
    }
}

#[derive(Debug, Clone)]
struct CachedComponent {
    means: Vec<f64>,
    vars: Vec<f64>,
    /// Row `m` holds `L⁻¹ k(X, x_m)`.
    proj: Vec<f64>,
}

/// Posterior quantities at a fixed point set that stay valid for every
/// one-point fantasy update of the same posterior.
#[derive(Debug, Clone)]
pub struct FantasyCache {
    points: Vec<Vec<f64>>,
    n_train: usize,
    comps: Vec<CachedComponent>,
}

impl FantasyCache {
    pub fn field(&self) -> PosteriorField {
        PosteriorField {
            means: self.comps.iter().map(|c| c.means.clone()).collect(),
            sds: self
                .comps
                .iter()
                .map(|c| c.vars.iter().map(|v| v.sqrt()).collect())
                .collect(),
        }
    }
}

/// Effect of one hypothetical observation at `x` on a cached field.
///
/// Observing `θ` at `x` moves the mean at cached point `m` by
/// `gains[j][m] * (θ_j - mu_x[j])` and sets its standard deviation to `sds[j][m]`
/// regardless of the observed value.
#[derive(Debug, Clone)]
pub struct FantasyPlan {
    pub mu_x: Vec<f64>,
    pub sd_x: Vec<f64>,
    pub gains: Vec<Vec<f64>>,
    pub sds: Vec<Vec<f64>>,
}

impl FantasyPlan {
    /// Updated field after observing `theta` at the plan's point.
    pub fn apply(&self, cache: &FantasyCache, theta: &[f64]) -> PosteriorField {
        let means = cache
            .comps
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let shift = theta[j] - self.mu_x[j];
                c.means
                    .iter()
                    .zip(&self.gains[j])
                    .map(|(m, g)| m + g * shift)
                    .collect()
            })
            .collect();
        PosteriorField {
            means,
            sds: self.sds.clone(),
        }
    }
}

#[cfg(test)]
mod tests;
