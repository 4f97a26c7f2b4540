//! `hamlearn`: measure, learn and certify local Hamiltonians from Gibbs-state tables.

mod config;
mod plot;
mod tasks;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use config::{Generator, Overrides, Task};
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Cap(String),
    #[error("{0}")]
    Solver(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Cap(_) => 4,
            CliError::Other(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Solver(_) => "solver",
            CliError::Cap(_) => "cap",
            CliError::Other(_) => "other",
        }
    }
}

#[derive(Parser)]
#[command(name = "hamlearn", version, about = "Certified Hamiltonian learning from Gibbs-state expectation tables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Noise seed (also the random-model seed and the only sweep seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Perturbation level.
    #[arg(long)]
    level: Option<usize>,
    /// Solver tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides { seed: self.seed, level: self.level, tol: self.tol, out: self.out.clone() }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated model to JSON.
    GenModel {
        /// Generator spec, e.g. '{"kind":"ising_chain","n":3,"coupling":0.5,"field":0.3}'.
        #[arg(long)]
        generator: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate the expectation tables and assemble the system.
    Measure(Common),
    /// Algorithm A along the configured directions, per-coefficient intervals and Algorithm B.
    Learn(Common),
    /// Test the tables for consistency with a Gibbs state of the ansatz.
    Certify(Common),
    /// Check the modular-theory identities numerically.
    Verify(Common),
    /// Run the configured noise/level/seed grid.
    Sweep(Common),
    /// Run every task listed in the config.
    Report(Common),
}

fn run_with(common: &Common, tasks: Option<Vec<Task>>) -> Result<i32, CliError> {
    let mut res = config::load(&common.config, &common.overrides())?;
    if let Some(t) = tasks {
        let mut cfg = res.config.clone();
        cfg.tasks = t;
        res = config::resolve(cfg, res.base.clone(), &common.overrides())?;
    }
    tasks::run(&res)
}

fn gen_model(spec: &str, out: &PathBuf) -> Result<i32, CliError> {
    let generator: Generator = serde_json::from_str(spec).map_err(|e| CliError::Config(format!("generator: {e}")))?;
    let model = generator.build().map_err(|e| CliError::Config(e.to_string()))?;
    let text = model.to_json_string().map_err(|e| CliError::Other(e.to_string()))?;
    std::fs::write(out, text + "\n").map_err(|e| CliError::Other(format!("{}: {e}", out.display())))?;
    Ok(0)
}

fn init_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("HAMLEARN_THREADS") {
        let n: usize = v.parse().map_err(|_| CliError::Config(format!("HAMLEARN_THREADS={v:?} is not a thread count")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Other(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match &cli.command {
        Command::GenModel { generator, out } => gen_model(generator, out),
        Command::Measure(c) => run_with(c, Some(vec![Task::Measure])),
        Command::Learn(c) => run_with(c, Some(vec![Task::LearnA, Task::Intervals, Task::LearnB])),
        Command::Certify(c) => run_with(c, Some(vec![Task::Certify])),
        Command::Verify(c) => run_with(c, Some(vec![Task::VerifyModular])),
        Command::Sweep(c) => run_with(c, Some(vec![Task::Sweep])),
        Command::Report(c) => run_with(c, None),
    });
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string(), "exit_code": e.code() }));
            ExitCode::from(e.code() as u8)
        }
    }
}
