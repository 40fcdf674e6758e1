use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Family, ParamVector};
use crate::env::EnvPoint;
use crate::error::{Error, Result};

/// One experiment: the environment it ran at, the fitted parameters, and
/// their sampling covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: EnvPoint,
    pub theta_obs: ParamVector,
    /// Row-major `d_θ × d_θ` covariance.
    pub sigma: Vec<f64>,
    pub n_samples: usize,
    pub seed: u64,
}

impl Observation {
    pub fn family(&self) -> Family {
        self.theta_obs.family
    }

    pub fn sigma_diag(&self) -> Vec<f64> {
        let d = self.theta_obs.values.len();
        (0..d).map(|i| self.sigma[i * d + i]).collect()
    }

    fn validate(&self) -> Result<()> {
        let d = self.theta_obs.values.len();
        if d != self.family().n_params() || self.sigma.len() != d * d {
            return Err(Error::Input(format!(
                "observation at {:?} has inconsistent parameter dimensions",
                self.x.coords()
            )));
        }
        for i in 0..d {
            if !(self.sigma[i * d + i] >= 0.0) {
                return Err(Error::Input("observation covariance has a negative variance".into()));
            }
            for j in 0..i {
                if self.sigma[i * d + j] != self.sigma[j * d + i] {
                    return Err(Error::Input("observation covariance is not symmetric".into()));
                }
            }
        }
        if self.x.coords().iter().any(|v| !v.is_finite())
            || self.theta_obs.values.iter().any(|v| !v.is_finite())
        {
            return Err(Error::Input("observation contains non-finite values".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    x: Vec<f64>,
    theta_obs: Vec<f64>,
    sigma_diag: Vec<f64>,
    n_samples: usize,
    seed: u64,
    family: Family,
}

/// Ordered experiment log `D_k`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<Observation>", into = "Vec<Observation>")]
pub struct Dataset {
    records: Vec<Observation>,
}

impl TryFrom<Vec<Observation>> for Dataset {
    type Error = Error;

    fn try_from(records: Vec<Observation>) -> Result<Self> {
        Self::from_records(records)
    }
}

impl From<Dataset> for Vec<Observation> {
    fn from(d: Dataset) -> Self {
        d.records
    }
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: Vec<Observation>) -> Result<Self> {
        let mut d = Self::new();
        for r in records {
            d.push(r)?;
        }
        Ok(d)
    }

    pub fn push(&mut self, obs: Observation) -> Result<()> {
        obs.validate()?;
        if let Some(first) = self.records.first() {
            if first.family() != obs.family() || first.x.dim() != obs.x.dim() {
                return Err(Error::Input(format!(
                    "record {} does not match the dataset's family/dimension ({} in {} dims)",
                    self.records.len(),
                    first.family().name(),
                    first.x.dim()
                )));
            }
        }
        self.records.push(obs);
        Ok(())
    }

    pub fn records(&self) -> &[Observation] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn family(&self) -> Option<Family> {
        self.records.first().map(|r| r.family())
    }

    pub fn dim(&self) -> Option<usize> {
        self.records.first().map(|r| r.x.dim())
    }

    /// Writes one JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            let rec = Record {
                x: r.x.coords().to_vec(),
                theta_obs: r.theta_obs.values.clone(),
                sigma_diag: r.sigma_diag(),
                n_samples: r.n_samples,
                seed: r.seed,
                family: r.family(),
            };
            serde_json::to_writer(&mut out, &rec).map_err(|e| Error::Parse(e.to_string()))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads the JSONL written by [`Dataset::write_jsonl`]; blank lines are skipped.
    /// The covariance is restored as a diagonal matrix.
    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut d = Self::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line)
                .map_err(|e| Error::Parse(format!("dataset line {}: {e}", i + 1)))?;
            let k = rec.theta_obs.len();
            if rec.sigma_diag.len() != k {
                return Err(Error::Parse(format!(
                    "dataset line {}: sigma_diag has {} entries for {k} parameters",
                    i + 1,
                    rec.sigma_diag.len()
                )));
            }
            let mut sigma = vec![0.0; k * k];
            for (j, v) in rec.sigma_diag.iter().enumerate() {
                sigma[j * k + j] = *v;
            }
            d.push(Observation {
                x: EnvPoint(rec.x),
                theta_obs: ParamVector::raw(rec.family, rec.theta_obs),
                sigma,
                n_samples: rec.n_samples,
                seed: rec.seed,
            })
            .map_err(|e| Error::Parse(format!("dataset line {}: {e}", i + 1)))?;
        }
        Ok(d)
    }
}
