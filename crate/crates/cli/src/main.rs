//! `lpht`: locally private hypothesis testing from the command line.
//!
//! Exit codes: 0 accept (or success), 3 reject, 2 error.

mod commands;
mod inputs;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const DEFAULT_SEED: u64 = 20_190_101;

pub const EXIT_ACCEPT: u8 = 0;
pub const EXIT_ERROR: u8 = 2;
pub const EXIT_REJECT: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "lpht", version, about = "Locally private identity and independence testing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mechanism {
    Symmetric,
    Nonsymmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CohortFormat {
    Binary,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Privatize samples drawn from a distribution file.
    Mechanize(MechanizeArgs),
    /// Test whether signals come from the hypothesis distribution.
    TestIdentity(TestArgs),
    /// Test whether signals come from a product distribution.
    TestIndependence(TestArgs),
    /// Maximum-likelihood estimate of the type distribution.
    Mle(MleArgs),
    /// Run one of the Monte-Carlo experiments (1-4).
    Experiment(Box<ExperimentArgs>),
}

#[derive(Args, Debug)]
pub struct MechanizeArgs {
    /// Distribution JSON: {"weights": [...]} or a bare array.
    #[arg(long)]
    pub dist: PathBuf,
    #[arg(long)]
    pub n: u64,
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long, value_enum)]
    pub mechanism: Mechanism,
    #[arg(long)]
    pub out: PathBuf,
    /// Cohort encoding (non-symmetric only).
    #[arg(long, value_enum, default_value = "binary")]
    pub format: CohortFormat,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct TestArgs {
    /// Hypothesis JSON: {"p": [...], "alpha": a, "epsilon": e, "feature_sizes": [...]}.
    #[arg(long)]
    pub hypothesis: PathBuf,
    /// Signal file, histogram CSV, cohort (binary or CSV) or theta JSON.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub mechanism: Mechanism,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Monte-Carlo draws used to calibrate the symmetric testers.
    #[arg(long, default_value_t = 2000)]
    pub calibration_trials: usize,
    /// Null rejection target of the symmetric identity tester.
    #[arg(long, default_value_t = 1.0 / 9.0)]
    pub confidence: f64,
    /// Also write the JSON outcome here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MleArgs {
    /// Signal file or histogram CSV (symmetric), cohort file (non-symmetric).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub mechanism: Mechanism,
    /// Required when the input does not carry it.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Domain size for a non-symmetric CSV cohort.
    #[arg(long)]
    pub domain: Option<usize>,
    /// Invert the channel instead of running the solver (symmetric only).
    #[arg(long)]
    pub closed_form: bool,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// Experiment number.
    #[arg(value_parser = clap::value_parser!(u64).range(1..=4))]
    pub id: u64,
    /// JSON config overriding the defaults; flags override the file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Trials per parameter point.
    #[arg(long = "t")]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Domain size T.
    #[arg(long)]
    pub domain: Option<usize>,
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub sweep_domain: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub sweep_n: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    pub sweep_alpha: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub sweep_epsilon: Option<Vec<f64>>,
    /// Product domain for experiment 4, e.g. 3,3.
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<usize>>,
    /// Trials per rejection-rate probe (experiment 3).
    #[arg(long)]
    pub probe_trials: Option<usize>,
    /// Replace the experiment 3 evaluator: `linear:<scale>` or `zero`.
    #[arg(long)]
    pub stub: Option<String>,
    /// Experiment 3 band as `low,high,target`.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub band: Option<Vec<f64>>,
    /// Simulate per user or through sufficient statistics.
    #[arg(long)]
    pub mode: Option<String>,
    /// Worker threads (0 = all cores); results do not depend on it.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Mechanize(a) => commands::mechanize::run(&a),
        Command::TestIdentity(a) => commands::test::run(&a, commands::test::Kind::Identity),
        Command::TestIndependence(a) => commands::test::run(&a, commands::test::Kind::Independence),
        Command::Mle(a) => commands::mle::run(&a),
        Command::Experiment(a) => commands::experiment::run(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            if let Some(lpht_core::Error::SolverDiverged { iterate, .. }) = err.downcast_ref::<lpht_core::Error>() {
                eprintln!("last iterate: {iterate:?}");
            }
            ExitCode::from(EXIT_ERROR)
        }
    }
}
