//! `curvgame`: solve the game's dynamic programming principle on a grid,
//! simulate the game, run numerical verifications and write level sets and
//! convergence tables.
//!
//! Every command reads an optional JSON config (`--config`); flags override
//! config values, which override defaults. Exit codes: 0 success, 1 usage or
//! configuration error, 2 non-convergence, 3 failed verification.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
mod output;

pub use config::{RunConfig, SimMode, StrategySpec};

/// Failure of a command, mapped to a stable exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("value iteration did not converge: {0}")]
    NonConvergence(String),
    #[error("verification failed: {}", .0.join("; "))]
    Verification(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::NonConvergence(_) => 2,
            CliError::Verification(_) => 3,
        }
    }
}

impl From<curvature_game::Error> for CliError {
    fn from(e: curvature_game::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "curvgame", version, about = "Curvature game solver and simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master random seed.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "CURVGAME_THREADS", value_name = "INT")]
    pub threads: Option<usize>,
    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Value iteration for the DPP; writes `field.dat` and `solve_manifest.json`.
    Solve,
    /// Monte Carlo games; writes `estimate.json` or `diagnostic.json`, and `traces.jsonl`.
    Simulate,
    /// Numerical checks; writes `verify.json`.
    Verify,
    /// Superlevel sets of field files; writes `levelset.csv` and `levelset_points.csv`.
    Levelset,
    /// Convergence to the ball oracle; writes `convergence.csv` and `convergence_manifest.json`.
    Converge,
}

/// Flags that override config file values.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    /// Comma-separated list.
    #[arg(long, global = true, allow_hyphen_values = true, value_parser = config::parse_list)]
    pub eps_list: Option<::std::vec::Vec<f64>>,
    #[arg(long, global = true)]
    pub k: Option<f64>,
    #[arg(long, global = true)]
    pub axis_count: Option<usize>,
    #[arg(long, global = true)]
    pub quad_order: Option<usize>,
    #[arg(long, global = true)]
    pub tol_iter: Option<f64>,
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    #[arg(long, global = true)]
    pub grid_h: Option<f64>,
    #[arg(long, global = true)]
    pub n_episodes: Option<u64>,
    /// Starting point as a comma-separated list; repeatable.
    #[arg(long = "point", global = true, allow_hyphen_values = true, value_parser = config::parse_list)]
    pub points: Vec<::std::vec::Vec<f64>>,
    /// Reference point of the mirror, aligned and radial strategies.
    #[arg(long, global = true, allow_hyphen_values = true, value_parser = config::parse_list)]
    pub z: Option<::std::vec::Vec<f64>>,
    #[arg(long, global = true)]
    pub paul: Option<StrategySpec>,
    #[arg(long, global = true)]
    pub carol: Option<StrategySpec>,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<SimMode>,
    /// Episodes per point written to `traces.jsonl`.
    #[arg(long, global = true)]
    pub traces: Option<u64>,
    /// Field artifact; repeatable for `levelset`.
    #[arg(long = "field", global = true)]
    pub fields: Vec<PathBuf>,
    #[arg(long, global = true, allow_hyphen_values = true, value_parser = config::parse_list)]
    pub t_list: Option<::std::vec::Vec<f64>>,
    /// Solve the convergence study's eps values in parallel.
    #[arg(long, global = true)]
    pub parallel: bool,
}

impl Overrides {
    fn to_config(&self, seed: Option<u64>) -> RunConfig {
        let (field, fields) = match self.fields.len() {
            0 => (None, None),
            1 => (Some(self.fields[0].clone()), None),
            _ => (None, Some(self.fields.clone())),
        };
        RunConfig {
            eps: self.eps,
            eps_list: self.eps_list.clone(),
            k: self.k,
            axis_count: self.axis_count,
            quad_order: self.quad_order,
            tol_iter: self.tol_iter,
            max_iter: self.max_iter,
            grid_h: self.grid_h,
            seed,
            n_episodes: self.n_episodes,
            points: (!self.points.is_empty()).then(|| self.points.clone()),
            z: self.z.clone(),
            paul: self.paul.clone(),
            carol: self.carol.clone(),
            mode: self.mode,
            traces: self.traces,
            field,
            fields,
            t_list: self.t_list.clone(),
            parallel: self.parallel.then_some(true),
            ..Default::default()
        }
    }
}

/// Effective configuration: defaults, then the config file, then flags.
pub fn effective_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let base = match &cli.config {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::default(),
    };
    Ok(base.overlay(cli.overrides.to_config(cli.seed)))
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = effective_config(cli)?;
    let work = || match cli.command {
        Command::Solve => commands::solve(&cfg, &cli.out),
        Command::Simulate => commands::simulate(&cfg, &cli.out),
        Command::Verify => commands::verify(&cfg, &cli.out),
        Command::Levelset => commands::levelset(&cfg, &cli.out),
        Command::Converge => commands::converge(&cfg, &cli.out),
    };
    match cli.threads {
        Some(0) => Err(CliError::Usage("--threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(work),
        None => work(),
    }
}

/// Parses `args`, runs, reports errors on stderr and returns the exit code.
pub fn main_with_args<I, S>(args: I) -> ExitCode
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("curvgame: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
