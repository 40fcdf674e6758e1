//! `surrex`: drive the sequential design loop, one-shot estimates and the
//! Monte Carlo oracle from the command line.

mod config;
mod io;
mod simulator;

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use surrex_core::doe::{estimate_dataset, run_loop, Acquirer};
use surrex_core::estimator::ExtremeSpec;
use surrex_core::{fixtures, oracle, Error, Exec, Result};

#[derive(Parser)]
#[command(name = "surrex", version, about = "Long-term extreme response by GP surrogate and sequential design")]
struct Cli {
    /// Worker threads for data-parallel sections.
    #[arg(long, env = "SURREX_THREADS", global = true)]
    threads: Option<usize>,
    /// Evaluate everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the design loop and write dataset, trace, estimate and checkpoint.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = "SURREX_OUT_DIR")]
        out: PathBuf,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Fit the surrogate to a dataset and print the estimate as JSON.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Brute-force Monte Carlo reference for a built-in fixture.
    Oracle {
        #[arg(long)]
        fixture: String,
        #[arg(long, default_value_t = 20_000)]
        replications: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Override the number of short-term periods.
        #[arg(long)]
        n_periods: Option<u64>,
        #[arg(long)]
        p: Option<f64>,
        /// Estimate the short-term marginal CDF at this level instead.
        #[arg(long)]
        cdf_at: Option<f64>,
        #[arg(long, default_value_t = 1_000_000)]
        draws: usize,
    },
    /// Write the initial design as a candidate CSV.
    InitDesign {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score candidate points against the surrogate fitted to a dataset.
    Acquire {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve one simulator request for a built-in fixture on stdin/stdout.
    #[command(hide = true)]
    Simulate {
        #[arg(long)]
        fixture: String,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Parse(_) | Error::Input(_) => 2,
        Error::Aborted(_) => 3,
        _ => 1,
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn read_dataset(path: &Path) -> Result<surrex_core::response::Dataset> {
    let data = io::read_dataset(path).map_err(|e| match e {
        Error::Io(io) => Error::Parse(format!("{}: {io}", path.display())),
        other => other,
    })?;
    if data.is_empty() {
        return Err(Error::Input(format!("{} holds no records", path.display())));
    }
    Ok(data)
}

fn cmd_run(config: &Path, out: &Path, resume: bool, exec: Exec) -> Result<()> {
    let loaded = config::load(config)?;
    let doe = &loaded.doe;
    fs::create_dir_all(out)?;
    let cp_path = out.join("checkpoint.json");
    let state = if resume {
        let cp = io::read_checkpoint(&cp_path)?;
        if &cp.config != doe {
            return Err(Error::Config {
                line: 0,
                message: format!("{} was written by a different configuration", cp_path.display()),
            });
        }
        log::info!("resuming at k = {}", cp.state.k());
        Some(cp.state)
    } else {
        None
    };
    let sim = simulator::build(&loaded.simulator)?;
    let result = run_loop(sim.as_ref(), doe, state, exec, |s| io::write_checkpoint(&cp_path, doe, s))?;
    io::write_dataset(&out.join("dataset.jsonl"), &result.dataset)?;
    io::write_trace(&out.join("trace.csv"), &result.trace, doe.env.dim())?;
    let est = io::to_json_pretty(&io::EstimateJson::from(&result.estimate))?;
    io::write_atomic(&out.join("estimate.json"), format!("{est}\n").as_bytes())?;
    println!("{est}");
    Ok(())
}

fn cmd_estimate(config: &Path, dataset: &Path, exec: Exec) -> Result<()> {
    let loaded = config::load(config)?;
    let data = read_dataset(dataset)?;
    let (_, est) = estimate_dataset(&data, &loaded.doe, exec)?;
    println!("{}", io::to_json_pretty(&io::EstimateJson::from(&est))?);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_oracle(
    fixture: &str,
    replications: usize,
    seed: u64,
    n_periods: Option<u64>,
    p: Option<f64>,
    cdf_at: Option<f64>,
    draws: usize,
    exec: Exec,
) -> Result<()> {
    let mut problem = fixtures::by_name(fixture)?;
    if n_periods.is_some() || p.is_some() {
        problem.spec = ExtremeSpec::from_periods(
            n_periods.unwrap_or(problem.spec.n_periods),
            p.unwrap_or(problem.spec.p),
        )?;
    }
    let text = match cdf_at {
        Some(y) => {
            let est = oracle::mc_marginal_cdf(&problem, y, draws, seed, exec)?;
            serde_json::json!({ "y": y, "value": est.value, "std_error": est.std_error, "n_draws": draws })
                .to_string()
        }
        None => io::to_json_pretty(&oracle::mc_extreme_quantile(&problem, replications, seed, exec)?)?,
    };
    println!("{text}");
    Ok(())
}

fn cmd_init_design(config: &Path, out: Option<&Path>) -> Result<()> {
    let loaded = config::load(config)?;
    let design = loaded.doe.initial_design()?;
    io::write_points(&design, loaded.doe.env.dim(), output(out)?)
}

fn cmd_acquire(config: &Path, dataset: &Path, candidates: &Path, out: Option<&Path>, exec: Exec) -> Result<()> {
    let loaded = config::load(config)?;
    let doe = &loaded.doe;
    let data = read_dataset(dataset)?;
    let dim = doe.env.dim();
    let cands = io::read_points(
        std::io::BufReader::new(
            File::open(candidates).map_err(|e| Error::Parse(format!("{}: {e}", candidates.display())))?,
        ),
        dim,
    )?;
    if cands.is_empty() {
        return Err(Error::Input("candidate file has no points".into()));
    }
    let gp = doe.fit_gp(&data, exec)?;
    let is = doe.importance_sample(exec)?;
    let sp = doe.sigma_points()?;
    let acq = Acquirer::new(&gp, &data, &is, &sp, &doe.spec, exec)?;
    let scores = acq.score_all(&cands, exec)?;
    let best = scores
        .iter()
        .enumerate()
        .fold(0, |b, (i, s)| if s.s_k < scores[b].s_k { i } else { b });
    let mut w = output(out)?;
    let mut header: Vec<String> = (1..=dim).map(|i| format!("x_{i}")).collect();
    header.extend(["s_k".into(), "selected".into()]);
    writeln!(w, "{}", header.join(","))?;
    for (i, s) in scores.iter().enumerate() {
        let mut row: Vec<String> = s.x.coords().iter().map(|v| v.to_string()).collect();
        row.push(s.s_k.to_string());
        row.push(u8::from(i == best).to_string());
        writeln!(w, "{}", row.join(","))?;
    }
    log::info!("H_k = {:e}, best s_k = {:e}", acq.current().variance, scores[best].s_k);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        // read by the thread pool on first use
        std::env::set_var("RAYON_NUM_THREADS", n.max(1).to_string());
    }
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    let result = match &cli.command {
        Cmd::Run { config, out, resume } => cmd_run(config, out, *resume, exec),
        Cmd::Estimate { config, dataset } => cmd_estimate(config, dataset, exec),
        Cmd::Oracle {
            fixture,
            replications,
            seed,
            n_periods,
            p,
            cdf_at,
            draws,
        } => cmd_oracle(fixture, *replications, *seed, *n_periods, *p, *cdf_at, *draws, exec),
        Cmd::InitDesign { config, out } => cmd_init_design(config, out.as_deref()),
        Cmd::Acquire {
            config,
            dataset,
            candidates,
            out,
        } => cmd_acquire(config, dataset, candidates, out.as_deref(), exec),
        Cmd::Simulate { fixture } => fixtures::by_name(fixture).and_then(|p| {
            simulator::serve_one(&p, std::io::stdin().lock(), std::io::stdout().lock())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
