//! Run configuration: a single flat JSON document.

use std::path::Path;
use std::time::Duration;

use serde::Deserialize;
use surrex_core::doe::{DoeConfig, SampleSize};
use surrex_core::env::{Bounds, EnvDensity, EnvModel};
use surrex_core::estimator::ExtremeSpec;
use surrex_core::fixtures;
use surrex_core::gp::{GpOptions, KernelKind};
use surrex_core::response::Family;
use surrex_core::{Error, Result};

const DEFAULT_TIMEOUT_S: f64 = 600.0;

/// Where the environment model comes from.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum EnvironmentSpec {
    /// Name of a built-in fixture.
    Fixture(String),
    Density(EnvDensity),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SimulatorSpec {
    /// Name of a built-in fixture simulated in process.
    Builtin(String),
    External {
        command: Vec<String>,
        #[serde(default)]
        timeout_s: Option<f64>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub family: Family,
    pub p: f64,
    pub n_years: Option<f64>,
    pub t_s_hours: Option<f64>,
    pub n_periods: Option<u64>,
    #[serde(rename = "M")]
    pub m: Option<usize>,
    pub m_total: Option<usize>,
    pub c: Option<f64>,
    pub bounds: Option<Bounds>,
    pub environment: EnvironmentSpec,
    pub kappa: Option<f64>,
    #[serde(default = "default_k0")]
    pub k0: usize,
    pub budget: usize,
    #[serde(default = "default_candidates")]
    pub candidates: usize,
    #[serde(default = "default_augment")]
    pub augment: usize,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default = "default_refit")]
    pub refit_interval: usize,
    #[serde(default)]
    pub seed: u64,
    pub simulator: SimulatorSpec,
    #[serde(default)]
    pub kernel: KernelKind,
    pub jitter: Option<f64>,
}

fn default_k0() -> usize {
    10
}
fn default_candidates() -> usize {
    200
}
fn default_augment() -> usize {
    20
}
fn default_n_samples() -> usize {
    200
}
fn default_refit() -> usize {
    5
}

/// Line (1-based) of the first occurrence of `"key":` in `text`, or 1.
fn key_line(text: &str, key: &str) -> usize {
    let pat = format!("\"{key}\"");
    let mut search = 0;
    while let Some(pos) = text[search..].find(&pat) {
        let at = search + pos;
        let rest = text[at + pat.len()..].trim_start();
        if rest.starts_with(':') {
            return text[..at].matches('\n').count() + 1;
        }
        search = at + pat.len();
    }
    1
}

/// Resolved simulator choice.
#[derive(Debug, Clone)]
pub enum SimulatorChoice {
    Builtin(String),
    External { command: Vec<String>, timeout: Duration },
}

/// A validated configuration ready to drive the engine.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub doe: DoeConfig,
    pub simulator: SimulatorChoice,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config {
            line: e.line().max(1),
            message: e.to_string(),
        })
    }

    /// Checks every field and assembles the engine configuration. Errors
    /// carry the line of the offending key in `text`.
    pub fn resolve(&self, text: &str) -> Result<(DoeConfig, SimulatorChoice)> {
        let fail = |key: &str, message: String| Error::Config {
            line: key_line(text, key),
            message,
        };
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(fail("p", format!("p = {} must lie in (0, 1)", self.p)));
        }
        let spec = match (self.n_periods, self.n_years, self.t_s_hours) {
            (Some(n), None, None) => {
                ExtremeSpec::from_periods(n, self.p).map_err(|e| fail("n_periods", e.to_string()))?
            }
            (None, Some(y), Some(t)) => {
                if !(y > 0.0 && y.is_finite()) {
                    return Err(fail("n_years", format!("n_years = {y} must be positive")));
                }
                if !(t > 0.0 && t.is_finite()) {
                    return Err(fail("t_s_hours", format!("t_s_hours = {t} must be positive")));
                }
                ExtremeSpec::new(y, t, self.p).map_err(|e| fail("n_years", e.to_string()))?
            }
            (Some(_), _, _) => {
                return Err(fail("n_periods", "give either n_periods or n_years with t_s_hours".into()))
            }
            _ => {
                return Err(fail(
                    "p",
                    "the return period needs n_years and t_s_hours (or n_periods)".into(),
                ))
            }
        };
        let importance = match (self.m, self.m_total) {
            (Some(m), None) if m > 0 => SampleSize::Retained(m),
            (None, Some(n)) if n > 0 => SampleSize::Proposals(n),
            (Some(_), Some(_)) => return Err(fail("M", "give either M or m_total, not both".into())),
            (Some(_), None) => return Err(fail("M", "M must be positive".into())),
            (None, Some(_)) => return Err(fail("m_total", "m_total must be positive".into())),
            (None, None) => return Err(fail("family", "importance sample size needs M or m_total".into())),
        };

        let mut env = match &self.environment {
            EnvironmentSpec::Fixture(name) => {
                fixtures::by_name(name).map_err(|e| fail("environment", e.to_string()))?.env
            }
            EnvironmentSpec::Density(density) => {
                let bounds = self
                    .bounds
                    .clone()
                    .ok_or_else(|| fail("environment", "an inline density needs bounds".into()))?;
                let c = self
                    .c
                    .ok_or_else(|| fail("environment", "an inline density needs c".into()))?;
                EnvModel {
                    density: density.clone(),
                    bounds,
                    threshold: c,
                    labels: Vec::new(),
                }
            }
        };
        if let Some(b) = &self.bounds {
            b.validate().map_err(|e| fail("bounds", e.to_string()))?;
            env.bounds = b.clone();
        }
        if let Some(c) = self.c {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(fail("c", format!("c = {c} must be a finite non-negative density")));
            }
            env.threshold = c;
        }
        env.validate().map_err(|e| fail("environment", e.to_string()))?;

        if let Some(k) = self.kappa {
            let d = self.family.n_params() as f64;
            if !(k.is_finite() && d + k > 0.0) {
                return Err(fail("kappa", format!("kappa = {k} needs d + kappa > 0")));
            }
        }
        if self.k0 < 2 {
            return Err(fail("k0", format!("k0 = {} must be at least 2", self.k0)));
        }
        if self.budget < self.k0 {
            return Err(fail("budget", format!("budget = {} is below k0 = {}", self.budget, self.k0)));
        }
        if self.candidates == 0 {
            return Err(fail("candidates", "candidates must be positive".into()));
        }
        if self.n_samples <= self.family.n_params() {
            return Err(fail(
                "n_samples",
                format!("n_samples = {} is too few for a {} fit", self.n_samples, self.family.name()),
            ));
        }
        if self.refit_interval == 0 {
            return Err(fail("refit_interval", "refit_interval must be positive".into()));
        }
        let mut gp = GpOptions {
            kernel: self.kernel,
            ..GpOptions::default()
        };
        if let Some(j) = self.jitter {
            if !(j > 0.0 && j <= 1e-6) {
                return Err(fail("jitter", format!("jitter = {j} must lie in (0, 1e-6]")));
            }
            gp.jitter = j;
        }

        let simulator = match &self.simulator {
            SimulatorSpec::Builtin(name) => {
                fixtures::by_name(name).map_err(|e| fail("simulator", e.to_string()))?;
                SimulatorChoice::Builtin(name.clone())
            }
            SimulatorSpec::External { command, timeout_s } => {
                if command.is_empty() {
                    return Err(fail("command", "simulator command is empty".into()));
                }
                let t = timeout_s.unwrap_or(DEFAULT_TIMEOUT_S);
                if !(t > 0.0 && t.is_finite()) {
                    return Err(fail("timeout_s", format!("timeout_s = {t} must be positive")));
                }
                SimulatorChoice::External {
                    command: command.clone(),
                    timeout: Duration::from_secs_f64(t),
                }
            }
        };

        let doe = DoeConfig {
            family: self.family,
            spec,
            env,
            importance,
            kappa: self.kappa,
            k0: self.k0,
            budget: self.budget,
            candidates: self.candidates,
            augment: self.augment,
            n_samples: self.n_samples,
            refit_interval: self.refit_interval,
            seed: self.seed,
            gp,
        };
        doe.validate().map_err(|e| fail("family", e.to_string()))?;
        Ok((doe, simulator))
    }
}

pub fn load(path: &Path) -> Result<Loaded> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config { line: 0, message: format!("{}: {e}", path.display()) })?;
    let (doe, simulator) = RunConfig::parse(&text)?.resolve(&text)?;
    Ok(Loaded { doe, simulator })
}
