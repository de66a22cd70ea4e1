//! `solvevo`: instance generation, evolution, evaluation, retrieval and oracles.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Failure classes with stable exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Provider(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Provider(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Provider(m) => m,
        }
    }
}

pub type CmdResult = Result<(), Failure>;

#[derive(Parser, Debug)]
#[command(name = "solvevo", version, about = "Evolve, archive and retrieve metaheuristic solver configurations")]
pub struct Cli {
    /// Worker threads for parallel runs (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate seeded instances and a manifest.
    Gen(GenArgs),
    /// Run the evolution loop and write a solver library plus event log.
    Evolve(EvolveArgs),
    /// Evaluate a library or a fixed config on an instance set; writes CSV.
    Eval(EvalArgs),
    /// Show the group assignment and retrieved config for one instance.
    Retrieve(RetrieveArgs),
    /// Print the exact reference value of a small instance.
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceMode {
    /// Exact oracle where the instance is within oracle limits.
    Auto,
    /// Held-Karp for TSP regardless of the usual limit (memory grows as n·2ⁿ).
    HeldKarp,
    None,
}

#[derive(Args, Debug, serde::Serialize)]
pub struct GenArgs {
    #[arg(long)]
    pub task: String,
    /// Sizes (nodes, customers or items); comma separated for several scales.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    /// Instances per size.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// TSP layout: uniform, clustered, jittered_grid, ring or elongated_rectangle (default: drawn per instance).
    #[arg(long)]
    pub pattern: Option<String>,
    /// MKP constraint count.
    #[arg(long, default_value_t = 5)]
    pub dims: usize,
    /// BPP bin capacity.
    #[arg(long, default_value_t = 100)]
    pub capacity: u32,
    #[arg(long, value_enum, default_value_t = ReferenceMode::Auto)]
    pub reference: ReferenceMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderKind {
    Stub,
    Llm,
}

#[derive(Args, Debug)]
pub struct EvolveArgs {
    /// Run config JSON; full-scale defaults (G=10, m=3, k=K=5, 100 iterations) when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory of training instances.
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, value_enum)]
    pub provider: Option<ProviderKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClockArg {
    Wall,
    Work,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Solver library; each instance gets its retrieved config.
    #[arg(long, conflicts_with_all = ["config", "seed_solver"])]
    pub library: Option<PathBuf>,
    /// Fixed SolverConfig JSON.
    #[arg(long, conflicts_with = "seed_solver")]
    pub config: Option<PathBuf>,
    /// Use the task's seed solver.
    #[arg(long)]
    pub seed_solver: bool,
    #[arg(long)]
    pub instances: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-instance CSV; the summary goes next to it as `<stem>.summary.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ClockArg::Wall)]
    pub clock: ClockArg,
}

#[derive(Args, Debug)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub library: PathBuf,
    #[arg(long)]
    pub instance: PathBuf,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[arg(long)]
    pub instance: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Evolve(a) => commands::evolve(a),
        Command::Eval(a) => commands::eval(a),
        Command::Retrieve(a) => commands::retrieve(a),
        Command::Oracle(a) => commands::oracle(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
