//! Artifact files: estimate JSON, candidate CSV, checkpoint JSON.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use surrex_core::doe::{DoeConfig, DoeTrace, RunState};
use surrex_core::env::EnvPoint;
use surrex_core::estimator::QoIEstimate;
use surrex_core::response::Dataset;
use surrex_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateJson {
    pub z_mean: f64,
    #[serde(rename = "H_k")]
    pub h_k: f64,
    pub z_per_sigma: Vec<f64>,
    pub clamp_fraction: f64,
}

impl From<&QoIEstimate> for EstimateJson {
    fn from(e: &QoIEstimate) -> Self {
        Self {
            z_mean: e.mean,
            h_k: e.variance,
            z_per_sigma: e.z_per_sigma.clone(),
            clamp_fraction: e.clamp_fraction,
        }
    }
}

/// Writes through a temporary file so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn to_json_pretty<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Parse(e.to_string()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: DoeConfig,
    pub state: RunState,
}

pub fn write_checkpoint(path: &Path, config: &DoeConfig, state: &RunState) -> Result<()> {
    let cp = Checkpoint {
        config: config.clone(),
        state: state.clone(),
    };
    write_atomic(path, to_json_pretty(&cp)?.as_bytes())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    Dataset::read_jsonl(BufReader::new(File::open(path)?))
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut buf = Vec::new();
    data.write_jsonl(&mut buf)?;
    write_atomic(path, &buf)
}

pub fn write_trace(path: &Path, trace: &DoeTrace, dim: usize) -> Result<()> {
    let mut buf = Vec::new();
    trace.write_csv(dim, &mut buf)?;
    write_atomic(path, &buf)
}

pub fn write_points<W: Write>(points: &[EnvPoint], dim: usize, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    let header: Vec<String> = (1..=dim).map(|i| format!("x_{i}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for p in points {
        let row: Vec<String> = p.coords().iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a candidate CSV with a header row and `dim` numeric columns.
pub fn read_points<R: BufRead>(input: R, dim: usize) -> Result<Vec<EnvPoint>> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("candidate file is empty".into()))??;
    let ncol = header.split(',').count();
    if ncol != dim {
        return Err(Error::Parse(format!(
            "candidate header has {ncol} columns, the environment has {dim}"
        )));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let coords = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse(format!("candidate line {}: {e}", i + 2)))?;
        if coords.len() != dim || coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse(format!(
                "candidate line {}: expected {dim} finite values",
                i + 2
            )));
        }
        out.push(EnvPoint(coords));
    }
    Ok(out)
}
