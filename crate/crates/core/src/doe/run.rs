//! The sequential experiment loop.

use std::io::{BufRead, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::acquisition::Acquirer;
use super::design::{candidate_set, initial_design};
use crate::env::{EnvModel, EnvPoint, ImportanceSample};
use crate::error::{Error, Result};
use crate::estimator::{compute_h_k, ExtremeSpec, QoIEstimate};
use crate::exec::Exec;
use crate::gp::{GPConfig, GPosterior, GpOptions};
use crate::oracle::SyntheticProblem;
use crate::response::{mle_fit, Dataset, Family, Observation};
use crate::ut::{default_kappa, sigma_points, SigmaPointSet};

/// Failed simulations tolerated before a run is aborted.
pub const MAX_FAILURES: usize = 3;

const TAG_DESIGN: u64 = 1;
const TAG_SIM: u64 = 2;
const TAG_FIT: u64 = 3;
const TAG_IS: u64 = 4;
const TAG_CAND: u64 = 5;

/// Source of short-term maxima at an environment point.
pub trait Simulator: Sync {
    fn simulate(&self, x: &EnvPoint, n_samples: usize, seed: u64) -> Result<Vec<f64>>;
}

impl Simulator for SyntheticProblem {
    fn simulate(&self, x: &EnvPoint, n_samples: usize, seed: u64) -> Result<Vec<f64>> {
        Ok(SyntheticProblem::simulate(self, x.coords(), n_samples, seed))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream seed for `(seed, tag, index)`.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ tag) ^ index)
}

/// Size of the importance sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSize {
    /// Uniform proposals `M_tot` drawn on the model box.
    Proposals(usize),
    /// Draw proposals until `M` points are retained.
    Retained(usize),
}

/// Everything that determines a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoeConfig {
    pub family: Family,
    pub spec: ExtremeSpec,
    pub env: EnvModel,
    pub importance: SampleSize,
    /// Sigma-point spread; `None` uses [`default_kappa`].
    pub kappa: Option<f64>,
    pub k0: usize,
    pub budget: usize,
    pub candidates: usize,
    /// Extra candidates taken from the importance points with the largest
    /// weighted posterior variance.
    pub augment: usize,
    pub n_samples: usize,
    pub refit_interval: usize,
    pub seed: u64,
    pub gp: GpOptions,
}

impl DoeConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        let bad = |m: String| Err(Error::Input(m));
        if self.k0 < 2 {
            return bad(format!("k0 must be at least 2, got {}", self.k0));
        }
        if self.budget < self.k0 {
            return bad(format!("budget {} is below k0 = {}", self.budget, self.k0));
        }
        if self.candidates == 0 {
            return bad("candidates must be positive".into());
        }
        if self.n_samples <= self.family.n_params() {
            return bad(format!(
                "n_samples must exceed {} for the {} family",
                self.family.n_params(),
                self.family.name()
            ));
        }
        if self.refit_interval == 0 {
            return bad("refit_interval must be positive".into());
        }
        if matches!(self.importance, SampleSize::Proposals(0) | SampleSize::Retained(0)) {
            return bad("importance sample size must be positive".into());
        }
        self.sigma_points()?;
        Ok(())
    }

    pub fn sigma_points(&self) -> Result<SigmaPointSet> {
        let d = self.family.n_params();
        sigma_points(d, self.kappa.unwrap_or_else(|| default_kappa(d)))
    }

    pub fn importance_sample(&self, exec: Exec) -> Result<ImportanceSample> {
        let seed = derive_seed(self.seed, TAG_IS, 0);
        match self.importance {
            SampleSize::Proposals(n) => self.env.draw_importance_samples_with(n, seed, exec),
            SampleSize::Retained(m) => self.env.draw_importance_samples_retained(m, seed, exec),
        }
    }

    /// The initial design a run with this configuration starts from.
    pub fn initial_design(&self) -> Result<Vec<EnvPoint>> {
        initial_design(&self.env, self.k0, derive_seed(self.seed, TAG_DESIGN, 0))
    }

    /// GP with hyperparameters fitted for a dataset of the current size.
    pub fn fit_gp(&self, data: &Dataset, exec: Exec) -> Result<GPosterior> {
        let seed = derive_seed(self.seed, TAG_FIT, data.len() as u64);
        let fitted = GPosterior::fit_with(data, &self.env.bounds, &self.gp, seed, exec)?;
        GPosterior::from_config(data, &self.env.bounds, fitted.config())
    }
}

/// Fits the surrogate to `data` and estimates the quantity of interest exactly
/// as a run does for its final record.
pub fn estimate_dataset(data: &Dataset, cfg: &DoeConfig, exec: Exec) -> Result<(GPosterior, QoIEstimate)> {
    if data.family().is_some_and(|f| f != cfg.family) {
        return Err(Error::Input(format!(
            "dataset family does not match configured {}",
            cfg.family.name()
        )));
    }
    let gp = cfg.fit_gp(data, exec)?;
    let est = compute_h_k(&gp, &cfg.importance_sample(exec)?, &cfg.sigma_points()?, &cfg.spec, exec)?;
    Ok((gp, est))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    /// Point chosen at this iteration; absent for the initial design row.
    pub x: Option<EnvPoint>,
    pub s_k: Option<f64>,
    pub h_k: f64,
    pub z_mean: f64,
    pub clamp_fraction: f64,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DoeTrace {
    pub rows: Vec<TraceRow>,
}

impl DoeTrace {
    pub fn write_csv<W: Write>(&self, dim: usize, mut out: W) -> Result<()> {
        let mut header = vec!["k".to_string()];
        header.extend((1..=dim).map(|i| format!("x_{i}")));
        header.extend(["s_k", "H_k", "z_mean", "clamp_fraction", "elapsed_ms"].map(String::from));
        writeln!(out, "{}", header.join(","))?;
        for r in &self.rows {
            let mut cols = vec![r.k.to_string()];
            match &r.x {
                Some(x) => cols.extend(x.coords().iter().map(|v| v.to_string())),
                None => cols.extend(std::iter::repeat_n(String::new(), dim)),
            }
            cols.push(r.s_k.map(|v| v.to_string()).unwrap_or_default());
            cols.push(r.h_k.to_string());
            cols.push(r.z_mean.to_string());
            cols.push(r.clamp_fraction.to_string());
            cols.push(format!("{:.3}", r.elapsed_ms));
            writeln!(out, "{}", cols.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("trace CSV is empty".into()))??;
        let ncol = header.split(',').count();
        if ncol < 7 {
            return Err(Error::Parse(format!("trace header has {ncol} columns")));
        }
        let dim = ncol - 6;
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let lineno = i + 2;
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != ncol {
                return Err(Error::Parse(format!("trace line {lineno}: expected {ncol} columns")));
            }
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("trace line {lineno}: {e}")))
            };
            let opt = |s: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    num(s).map(Some)
                }
            };
            let xs = cols[1..=dim].iter().map(|s| opt(s)).collect::<Result<Vec<_>>>()?;
            let x = if xs.iter().all(Option::is_none) {
                None
            } else {
                Some(EnvPoint(
                    xs.into_iter()
                        .map(|v| v.ok_or_else(|| Error::Parse(format!("trace line {lineno}: partial x"))))
                        .collect::<Result<_>>()?,
                ))
            };
            rows.push(TraceRow {
                k: cols[0]
                    .parse()
                    .map_err(|e| Error::Parse(format!("trace line {lineno}: {e}")))?,
                x,
                s_k: opt(cols[dim + 1])?,
                h_k: num(cols[dim + 2])?,
                z_mean: num(cols[dim + 3])?,
                clamp_fraction: num(cols[dim + 4])?,
                elapsed_ms: num(cols[dim + 5])?,
            });
        }
        Ok(Self { rows })
    }
}

/// Resumable state, checkpointed after every iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub dataset: Dataset,
    pub gp_config: GPConfig,
    pub trace: DoeTrace,
    pub estimate: QoIEstimate,
    /// Records present after the initial design.
    pub initial_k: usize,
    pub failures: usize,
    pub excluded: Vec<EnvPoint>,
    /// Simulator calls made so far; indexes the simulation seed stream.
    pub sim_calls: u64,
}

impl RunState {
    pub fn k(&self) -> usize {
        self.dataset.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub dataset: Dataset,
    pub trace: DoeTrace,
    pub estimate: QoIEstimate,
    pub gp_config: GPConfig,
}

fn observe<S: Simulator + ?Sized>(sim: &S, cfg: &DoeConfig, x: &EnvPoint, seed: u64) -> Result<Observation> {
    let samples = sim.simulate(x, cfg.n_samples, seed)?;
    if samples.len() != cfg.n_samples {
        return Err(Error::Simulator(format!(
            "expected {} samples, got {}",
            cfg.n_samples,
            samples.len()
        )));
    }
    let fit = mle_fit(cfg.family, &samples)?;
    Ok(Observation {
        x: x.clone(),
        theta_obs: fit.theta,
        sigma: fit.sigma,
        n_samples: cfg.n_samples,
        seed,
    })
}

fn record_failure(state: &mut RunState, x: &EnvPoint, err: &Error) -> Result<()> {
    log::warn!("simulation at {:?} failed, skipping: {err}", x.coords());
    state.failures += 1;
    state.excluded.push(x.clone());
    if state.failures > MAX_FAILURES {
        return Err(Error::Aborted(format!(
            "{} simulations failed; last error: {err}",
            state.failures
        )));
    }
    Ok(())
}

fn initial_state<S: Simulator + ?Sized>(
    sim: &S,
    cfg: &DoeConfig,
    is: &ImportanceSample,
    sp: &SigmaPointSet,
    exec: Exec,
) -> Result<RunState> {
    let t0 = Instant::now();
    let design = cfg.initial_design()?;
    let mut state = RunState {
        dataset: Dataset::new(),
        gp_config: GPConfig {
            kernel: cfg.gp.kernel,
            jitter: cfg.gp.jitter,
            components: Vec::new(),
        },
        trace: DoeTrace::default(),
        estimate: QoIEstimate {
            z_per_sigma: Vec::new(),
            mean: f64::NAN,
            variance: f64::NAN,
            clamp_fraction: 0.0,
        },
        initial_k: 0,
        failures: 0,
        excluded: Vec::new(),
        sim_calls: 0,
    };
    let seeds: Vec<u64> = (0..design.len() as u64)
        .map(|i| derive_seed(cfg.seed, TAG_SIM, i))
        .collect();
    state.sim_calls = design.len() as u64;
    let results = exec.map(design.len(), |i| observe(sim, cfg, &design[i], seeds[i]));
    for (x, r) in design.iter().zip(results) {
        match r {
            Ok(obs) => state.dataset.push(obs)?,
            Err(e) => record_failure(&mut state, x, &e)?,
        }
    }
    if state.dataset.is_empty() {
        return Err(Error::Aborted("no initial design point could be simulated".into()));
    }
    let gp = cfg.fit_gp(&state.dataset, exec)?;
    let est = compute_h_k(&gp, is, sp, &cfg.spec, exec)?;
    state.initial_k = state.dataset.len();
    state.gp_config = gp.config().clone();
    state.trace.rows.push(TraceRow {
        k: state.dataset.len(),
        x: None,
        s_k: None,
        h_k: est.variance,
        z_mean: est.mean,
        clamp_fraction: est.clamp_fraction,
        elapsed_ms: t0.elapsed().as_secs_f64() * 1e3,
    });
    state.estimate = est;
    Ok(state)
}

/// Runs the design loop to `cfg.budget` records, starting from `resume` when
/// given. `checkpoint` sees the state after the initial design and after every
/// iteration.
pub fn run_loop<S, F>(
    sim: &S,
    cfg: &DoeConfig,
    resume: Option<RunState>,
    exec: Exec,
    mut checkpoint: F,
) -> Result<RunOutput>
where
    S: Simulator + ?Sized,
    F: FnMut(&RunState) -> Result<()>,
{
    cfg.validate()?;
    let is = cfg.importance_sample(exec)?;
    let sp = cfg.sigma_points()?;
    let mut state = match resume {
        Some(s) => {
            if s.dataset.family().is_some_and(|f| f != cfg.family) {
                return Err(Error::Input("checkpoint family does not match the configuration".into()));
            }
            s
        }
        None => {
            let s = initial_state(sim, cfg, &is, &sp, exec)?;
            checkpoint(&s)?;
            s
        }
    };

    while state.k() < cfg.budget {
        let t0 = Instant::now();
        let k = state.k();
        let gp = GPosterior::from_config(&state.dataset, &cfg.env.bounds, &state.gp_config)?;
        let chosen = {
            let acq = Acquirer::new(&gp, &state.dataset, &is, &sp, &cfg.spec, exec)?;
            let mut cands = candidate_set(&cfg.env, cfg.candidates, derive_seed(cfg.seed, TAG_CAND, k as u64))?;
            cands.extend(acq.high_variance_points(cfg.augment));
            cands.retain(|c| !state.excluded.contains(c));
            if cands.is_empty() {
                return Err(Error::Design("every candidate has been excluded".into()));
            }
            acq.select_next(&cands, exec)?.1
        };
        let seed = derive_seed(cfg.seed, TAG_SIM, state.sim_calls);
        state.sim_calls += 1;
        match observe(sim, cfg, &chosen.x, seed) {
            Ok(obs) => state.dataset.push(obs)?,
            Err(e) => {
                record_failure(&mut state, &chosen.x, &e)?;
                checkpoint(&state)?;
                continue;
            }
        }

        let k = state.k();
        let gp = if (k - state.initial_k) % cfg.refit_interval == 0 || k == cfg.budget {
            cfg.fit_gp(&state.dataset, exec)?
        } else {
            GPosterior::from_config(&state.dataset, &cfg.env.bounds, &state.gp_config)?
        };
        let est = compute_h_k(&gp, &is, &sp, &cfg.spec, exec)?;
        state.gp_config = gp.config().clone();
        state.trace.rows.push(TraceRow {
            k,
            x: Some(chosen.x),
            s_k: Some(chosen.s_k),
            h_k: est.variance,
            z_mean: est.mean,
            clamp_fraction: est.clamp_fraction,
            elapsed_ms: t0.elapsed().as_secs_f64() * 1e3,
        });
        log::info!("k = {k}: H = {:.6e}, z = {:.6}", est.variance, est.mean);
        state.estimate = est;
        checkpoint(&state)?;
    }

    Ok(RunOutput {
        dataset: state.dataset,
        trace: state.trace,
        estimate: state.estimate,
        gp_config: state.gp_config,
    })
}
