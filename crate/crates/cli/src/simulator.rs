//! Simulators behind the engine's `Simulator` trait, including the external
//! subprocess protocol.

use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use surrex_core::doe::Simulator;
use surrex_core::env::EnvPoint;
use surrex_core::fixtures;
use surrex_core::oracle::SyntheticProblem;
use surrex_core::{Error, Result};

use crate::config::SimulatorChoice;

#[derive(Debug, Serialize, Deserialize)]
pub struct Request {
    pub x: Vec<f64>,
    pub n_samples: usize,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Response {
    pub samples: Vec<f64>,
}

/// Runs `command` once for the request `(x, n_samples, seed)`: one JSON line
/// in on stdin, one JSON line out on stdout.
pub fn external_simulate(
    command: &[String],
    x: &[f64],
    n_samples: usize,
    seed: u64,
    timeout: Duration,
) -> Result<Vec<f64>> {
    let (prog, args) = command
        .split_first()
        .ok_or_else(|| Error::Simulator("empty simulator command".into()))?;
    let mut child = Command::new(prog)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| Error::Simulator(format!("cannot launch {prog}: {e}")))?;
    let start = Instant::now();

    let request = serde_json::to_string(&Request {
        x: x.to_vec(),
        n_samples,
        seed,
    })
    .map_err(|e| Error::Simulator(e.to_string()))?;
    {
        let mut stdin = child.stdin.take().expect("stdin is piped");
        // a simulator that exits without reading is judged by its output below
        let _ = writeln!(stdin, "{request}");
    }

    let stdout = child.stdout.take().expect("stdout is piped");
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let mut line = String::new();
        let r = BufReader::new(stdout).read_line(&mut line).map(|_| line);
        let _ = tx.send(r);
    });
    let line = match rx.recv_timeout(timeout) {
        Ok(Ok(line)) => line,
        Ok(Err(e)) => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(Error::Simulator(format!("reading simulator output: {e}")));
        }
        Err(_) => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(Error::Simulator(format!(
                "simulator timed out after {:.1} s",
                timeout.as_secs_f64()
            )));
        }
    };

    let status = loop {
        if let Some(s) = child.try_wait()? {
            break s;
        }
        if start.elapsed() > timeout {
            let _ = child.kill();
            let _ = child.wait();
            return Err(Error::Simulator("simulator did not exit before the timeout".into()));
        }
        std::thread::sleep(Duration::from_millis(2));
    };
    if !status.success() {
        return Err(Error::Simulator(format!("simulator exited with {status}")));
    }

    let resp: Response = serde_json::from_str(line.trim())
        .map_err(|e| Error::Simulator(format!("malformed simulator response: {e}")))?;
    if resp.samples.len() != n_samples {
        return Err(Error::Simulator(format!(
            "simulator returned {} samples, expected {n_samples}",
            resp.samples.len()
        )));
    }
    if resp.samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Simulator("simulator returned a non-finite sample".into()));
    }
    Ok(resp.samples)
}

pub struct External {
    pub command: Vec<String>,
    pub timeout: Duration,
}

impl Simulator for External {
    fn simulate(&self, x: &EnvPoint, n_samples: usize, seed: u64) -> Result<Vec<f64>> {
        external_simulate(&self.command, x.coords(), n_samples, seed, self.timeout)
    }
}

pub fn build(choice: &SimulatorChoice) -> Result<Box<dyn Simulator>> {
    Ok(match choice {
        SimulatorChoice::Builtin(name) => Box::new(fixtures::by_name(name)?),
        SimulatorChoice::External { command, timeout } => Box::new(External {
            command: command.clone(),
            timeout: *timeout,
        }),
    })
}

/// Serves one request line for a built-in fixture: the subprocess side of
/// the protocol.
pub fn serve_one<R: BufRead, W: Write>(problem: &SyntheticProblem, input: R, mut out: W) -> Result<()> {
    let mut line = String::new();
    let mut input = input;
    input.read_line(&mut line)?;
    let req: Request =
        serde_json::from_str(line.trim()).map_err(|e| Error::Parse(format!("simulator request: {e}")))?;
    let samples = problem.simulate(&req.x, req.n_samples, req.seed);
    let text = serde_json::to_string(&Response { samples }).map_err(|e| Error::Parse(e.to_string()))?;
    writeln!(out, "{text}")?;
    Ok(())
}
