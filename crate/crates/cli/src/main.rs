//! `kfp`: simulation and verification runner.
//!
//! Exit codes: 0 success, 1 a check failed (reports are still written),
//! 2 usage or config error, 3 numerical failure.

mod commands;
mod config;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use config::{ExperimentConfig, Overrides};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Drift,
    Poincare,
    Dirichlet,
    Regularization,
    Duhamel,
    Composition,
    L1growth,
    Identities,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Drift => "drift",
            Suite::Poincare => "poincare",
            Suite::Dirichlet => "dirichlet",
            Suite::Regularization => "regularization",
            Suite::Duhamel => "duhamel",
            Suite::Composition => "composition",
            Suite::L1growth => "l1growth",
            Suite::Identities => "identities",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "kfp", version, about = "Kinetic Fokker-Planck semigroups with weak confinement")]
struct Cli {
    #[command(flatten)]
    flags: Flags,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Flags {
    /// Flat JSON config; missing keys take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Confinement exponent in (0, 1).
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// Nodes in x; the decay grid under decay-study.
    #[arg(long, global = true)]
    nx: Option<usize>,
    /// Nodes in v; the decay grid under decay-study.
    #[arg(long, global = true)]
    nv: Option<usize>,
    /// Time step; the decay step under decay-study.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Final time; the decay horizon under decay-study.
    #[arg(long = "t-end", global = true)]
    t_end: Option<f64>,
    /// Absorption strength.
    #[arg(long = "K", global = true)]
    big_k: Option<f64>,
    /// Absorption radius.
    #[arg(long = "R", global = true)]
    r: Option<f64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<String>,
    /// Seed for sampled studies.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evolve the initial data under the full semigroup and write simulate.csv.
    Simulate,
    /// Run one verification suite; exit 1 if any check fails.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
    },
    /// Fit stretched-exponential decay across gammas; exit 1 if the orderings fail.
    DecayStudy,
    /// Print the resolved config as JSON.
    PrintConfig,
}

fn resolve(flags: &Flags, decay: bool) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(flags.config.as_deref())?;
    let o = Overrides {
        gamma: flags.gamma,
        nx: flags.nx,
        nv: flags.nv,
        dt: flags.dt,
        t_end: flags.t_end,
        big_k: flags.big_k,
        r: flags.r,
        out: flags.out.clone(),
        seed: flags.seed,
    };
    cfg.apply(&o, decay);
    cfg.validate()?;
    Ok(cfg)
}

/// Writes to stdout, tolerating a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let decay = matches!(cli.command, Command::DecayStudy);
    let cfg = resolve(&cli.flags, decay)?;
    match &cli.command {
        Command::PrintConfig => {
            emit(&format!("{}\n", cfg.to_json()));
            Ok(true)
        }
        Command::Simulate => {
            let path = commands::simulate(&cfg)?;
            emit(&format!("wrote {}\n", commands::display(&path)));
            Ok(true)
        }
        Command::Verify { suite } => {
            let (report, path) = commands::verify(&cfg, *suite)?;
            emit(&report.to_text());
            emit(&format!("wrote {}\n", commands::display(&path)));
            Ok(report.pass)
        }
        Command::DecayStudy => {
            let out = commands::decay(&cfg)?;
            emit(&out.table);
            emit(&format!("wrote {}\n", commands::display(&out.summary)));
            Ok(out.ordered)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("kfp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
