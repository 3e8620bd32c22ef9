//! `stirlab` experiment runner.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use crate::config::Config;
use crate::output::{inputs_hash, Artifacts, Format};

#[derive(Parser, Debug)]
#[command(name = "stirlab", version, about = "Multispecies stirring process experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "STIRLAB_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Simulate the particle system; writes event logs and final densities.
    Simulate,
    /// Solve the hydrodynamic equations.
    Hydro,
    /// Evaluate the rate functional on a driven hydrodynamic trajectory.
    Rate,
    /// Radon–Nikodym weights, their mean and the pathwise identity.
    Girsanov,
    /// One- and two-block gaps by exact enumeration.
    Blocks,
    /// Hit probabilities of the time-integrated replacement statistic across N.
    Sweep,
    /// Numerical checks with a pass/fail verdict.
    Verify {
        #[command(subcommand)]
        check: Check,
    },
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Check {
    Einstein,
    Martingale,
    HydroLimit,
    Equivalence,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Hydro => "hydro",
            Command::Rate => "rate",
            Command::Girsanov => "girsanov",
            Command::Blocks => "blocks",
            Command::Sweep => "sweep",
            Command::Verify { check: Check::Einstein } => "verify einstein",
            Command::Verify { check: Check::Martingale } => "verify martingale",
            Command::Verify { check: Check::HydroLimit } => "verify hydro-limit",
            Command::Verify { check: Check::Equivalence } => "verify equivalence",
        }
    }
}

/// Failure classes reported in the JSON error record.
enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
    Verification(Value),
}

fn execute(cli: &Cli) -> Result<Value, Failure> {
    let start = Instant::now();
    let (cfg, bytes) = match &cli.config {
        Some(p) => Config::load(p).map_err(Failure::Config)?,
        None => (Config::parse("").map_err(Failure::Config)?, Vec::new()),
    };
    let name = cli.command.name();
    let hash = inputs_hash(name, &bytes, cli.seed);
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(t) = cli.threads {
            b = b.num_threads(t);
        }
        b.build().context("cannot start the worker pool").map_err(Failure::Run)?
    };
    let mut art = Artifacts::create(&cli.out, cli.format).map_err(Failure::Run)?;
    let outcome = pool.install(|| -> Result<(Value, bool)> {
        let seed = cli.seed;
        Ok(match cli.command {
            Command::Simulate => (commands::simulate(&cfg, seed, &mut art)?, true),
            Command::Hydro => (commands::hydro(&cfg, seed, &mut art)?, true),
            Command::Rate => (commands::rate(&cfg, seed, &mut art)?, true),
            Command::Girsanov => (commands::girsanov(&cfg, seed, &mut art)?, true),
            Command::Blocks => (commands::blocks(&cfg, seed, &mut art)?, true),
            Command::Sweep => (commands::sweep(&cfg, seed, &mut art)?, true),
            Command::Verify { check } => {
                let v = match check {
                    Check::Einstein => commands::verify_einstein(&cfg, &mut art)?,
                    Check::Martingale => commands::verify_martingale(&cfg, seed, &mut art)?,
                    Check::HydroLimit => commands::verify_hydro_limit(&cfg, seed, &mut art)?,
                    Check::Equivalence => commands::verify_equivalence(&cfg, &mut art)?,
                };
                let mut s = v.summary;
                s["pass"] = json!(v.pass);
                (s, v.pass)
            }
        })
    });
    let (summary, pass) = outcome.map_err(Failure::Run)?;
    art.finish(name, &hash, cli.seed, start.elapsed().as_secs_f64(), summary.clone()).map_err(Failure::Run)?;
    if pass {
        Ok(summary)
    } else {
        Err(Failure::Verification(summary))
    }
}

fn error_record(cli: &Cli, kind: &str, message: String, detail: Value) -> Value {
    json!({
        "error": {
            "kind": kind,
            "command": cli.command.name(),
            "message": message,
            "detail": detail,
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (record, code) = match execute(&cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string(&summary).unwrap_or_default());
            return ExitCode::SUCCESS;
        }
        Err(Failure::Config(e)) => (error_record(&cli, "config", format!("{e:#}"), Value::Null), 2),
        Err(Failure::Run(e)) => {
            let kind = if e.downcast_ref::<stirlab::Error>().is_some() { "numeric" } else { "runtime" };
            (error_record(&cli, kind, format!("{e:#}"), Value::Null), 1)
        }
        Err(Failure::Verification(s)) => (error_record(&cli, "verification", "check failed".into(), s), 3),
    };
    let text = serde_json::to_string(&record).unwrap_or_default();
    eprintln!("{text}");
    if std::fs::create_dir_all(&cli.out).is_ok() {
        let _ = std::fs::write(cli.out.join("error.json"), format!("{text}\n"));
    }
    ExitCode::from(code)
}
