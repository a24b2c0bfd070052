//! `parweight`: batch front end for the parweight toolkit.

// `!(x > 0)` rejects NaN as well; that is the intent everywhere.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "parweight", version, about = "Classify and construct one-sided parabolic weights on grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Input grid function (CSV).
    #[arg(long, global = true, value_name = "CSV")]
    pub grid: Option<PathBuf>,
    /// Built-in input: const, exp-t, exp-neg-t or log-smooth.
    #[arg(long, global = true, value_name = "NAME")]
    pub synthetic: Option<String>,
    #[arg(long, global = true, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, global = true, default_value_t = 2.0)]
    pub q: f64,
    #[arg(long, global = true, default_value_t = 0.0)]
    pub gamma: f64,
    /// Number of dyadic rectangle scales, starting at the cell width.
    #[arg(long, global = true, default_value_t = 5)]
    pub scales: usize,
    /// Centre lattice stride as a fraction of the rectangle size.
    #[arg(long, global = true, default_value_t = 0.5)]
    pub stride: f64,
    #[arg(long, global = true, default_value_t = 1e-10)]
    pub tol: f64,
    /// Seed for synthetic inputs and random probes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Report path; companion CSV grids are written next to it.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Use direct box sums instead of prefix tables.
    #[arg(long, global = true)]
    pub oracle: bool,
    /// Worker threads; PARWEIGHT_THREADS takes precedence.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Spatial cells of a synthetic grid.
    #[arg(long, global = true, default_value_t = 16)]
    pub cells: usize,
    /// Time cells of a synthetic grid.
    #[arg(long, global = true, default_value_t = 1024)]
    pub time_cells: usize,
    /// Spatial extent of a synthetic grid.
    #[arg(long, global = true, default_value_t = 1.0)]
    pub x_extent: f64,
    /// Time extent of a synthetic grid.
    #[arg(long, global = true, default_value_t = 2.0)]
    pub t_extent: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Weight constants, reverse Hoelder scan and refinement verdicts.
    Classify,
    /// Lagged maximal function of the input.
    Maximal {
        #[arg(long, value_enum, default_value_t = DirectionArg::Forward)]
        direction: DirectionArg,
    },
    /// Factorise the input weight as u v^(1-q).
    Factorize,
    /// Build weights from measures or sample supersolutions.
    Construct(ConstructArgs),
    /// PBMO seminorm and decay fit.
    Bmo {
        /// Treat the input as a weight w and analyse -log w.
        #[arg(long)]
        from_weight: bool,
        #[arg(long, value_enum, default_value_t = DirectionArg::Forward)]
        direction: DirectionArg,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    Forward,
    Backward,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ConstructKind {
    CrWeight,
    Supersolution,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SupersolutionKind {
    IncreasingTime,
    HeatKernel,
}

#[derive(Args, Debug, Clone)]
pub struct ConstructArgs {
    #[arg(long, value_enum)]
    pub kind: ConstructKind,
    /// Measure description (JSON) for cr-weight.
    #[arg(long, value_name = "JSON")]
    pub measure: Option<PathBuf>,
    /// Exponent of the maximal function, in [0, 1).
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
    #[arg(long, value_enum, default_value_t = SupersolutionKind::IncreasingTime)]
    pub family: SupersolutionKind,
    /// Growth rate of increasing-time.
    #[arg(long, default_value_t = 1.0)]
    pub rate: f64,
    /// Source time of heat-kernel.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub t0: f64,
    /// Source location of heat-kernel; defaults to the domain centre.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x0: Option<Vec<f64>>,
    /// Also run the representation pipeline on the supersolution.
    #[arg(long)]
    pub represent: bool,
}

/// Failure classes and their exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Data(_) => 3,
            Failure::Numerical(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Data(m) => write!(f, "data error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

fn configure_threads(flag: Option<usize>) -> Result<(), Failure> {
    let threads = match std::env::var("PARWEIGHT_THREADS") {
        Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| Failure::Usage(format!("PARWEIGHT_THREADS={v:?}")))?),
        Err(_) => flag,
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure::Usage("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = configure_threads(cli.common.threads).and_then(|_| match &cli.command {
        Command::Classify => commands::classify(&cli.common),
        Command::Maximal { direction } => commands::maximal(&cli.common, *direction),
        Command::Factorize => commands::factorize(&cli.common),
        Command::Construct(args) => commands::construct(&cli.common, args),
        Command::Bmo { from_weight, direction } => commands::bmo(&cli.common, *from_weight, *direction),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("parweight: {e}");
            ExitCode::from(e.code())
        }
    }
}
