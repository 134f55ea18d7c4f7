//! `neural-chaos`: generate benchmark data, fit spectral expansions, and
//! compare them against Monte Carlo and polynomial chaos baselines.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Exit code for bad flags or inconsistent options.
const EXIT_USAGE: u8 = 2;
const EXIT_FAILURE: u8 = 1;

#[derive(Parser, Debug)]
#[command(name = "neural-chaos", version, about)]
struct Cli {
    /// Worker threads; overrides NEURAL_CHAOS_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a benchmark dataset.
    Generate(GenerateArgs),
    /// Fit a spectral expansion to a dataset.
    Fit(FitArgs),
    /// Compare model mean/std fields with fresh Monte Carlo estimates.
    Moments(MomentsArgs),
    /// Fit polynomial chaos baselines of increasing degree.
    ComparePce(ComparePceArgs),
    /// Orthogonality and variance-identity checks of a fitted model.
    Diagnose(DiagnoseArgs),
    /// Refit on subsets of the training rows.
    AblateDatasize(AblateArgs),
    /// Rerun the command recorded in a manifest and check the output digests.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DistArg {
    /// uniform(0, 1)
    Uniform,
    /// normal(0, 1)
    Normal,
    /// gamma(k = 1, θ = 1)
    Gamma,
    /// Poisson(λ = 1)
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CopulaArg {
    Gaussian,
    Gumbel,
}

#[derive(Args, Debug, Serialize)]
pub struct GenerateArgs {
    /// Problem id: ex1, ex2, ex3, ex4 or ex5.
    #[arg(long)]
    pub problem: Option<String>,
    /// Problem configuration JSON (as stored in a dataset's meta.config);
    /// other flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input distribution for ex1.
    #[arg(long, value_enum)]
    pub dist: Option<DistArg>,
    /// Dependence structure for ex5.
    #[arg(long, value_enum)]
    pub copula: Option<CopulaArg>,
    /// Gumbel copula parameter (ex5).
    #[arg(long)]
    pub tau: Option<f64>,
    /// Gaussian copula correlation (ex5).
    #[arg(long)]
    pub rho: Option<f64>,
    /// Gaussian copula standard deviation (ex5).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Retained Karhunen-Loève modes (ex3, ex4).
    #[arg(long)]
    pub kl_dims: Option<usize>,
    /// Number of realizations.
    #[arg(long)]
    pub n: Option<usize>,
    /// Grid points (per side for ex4).
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(short, long, default_value = "dataset.json")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    /// Rank-1 deflation only, no networks.
    Discrete,
    /// Rank-1 deflation, then networks fitted to the discrete factors.
    DiscreteContinuous,
    /// Network pairs trained directly on the product loss.
    Continuous,
    /// Cosine deterministic basis (ablation).
    FixedCosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationArg {
    Elu,
    Relu,
    Sine,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct FitOptions {
    #[arg(long, value_enum, default_value_t = Algo::DiscreteContinuous)]
    pub algo: Algo,
    /// Stop once the residual MSE falls below tol times the mean-removed MSE.
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    #[arg(long, default_value_t = 20)]
    pub max_terms: usize,
    /// Number of cosine terms (fixed-cosine); defaults to the grid limit.
    #[arg(long)]
    pub terms: Option<usize>,
    /// Problem whose default network hyperparameters apply; defaults to the
    /// dataset's problem.
    #[arg(long)]
    pub problem: Option<String>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Maximum training epochs per network.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Stopping threshold on the normalized training loss.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Hidden layer widths for every network, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub activation: Option<ActivationArg>,
    /// First-layer frequency of sine networks.
    #[arg(long)]
    pub omega0: Option<f64>,
    /// Epochs without 0.01% improvement before a continuous term stops.
    #[arg(long, default_value_t = 5000)]
    pub patience: usize,
    /// Network initialization seed; defaults to the dataset seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Serialize)]
pub struct FitArgs {
    /// Dataset JSON.
    pub dataset: PathBuf,
    #[command(flatten)]
    pub fit: FitOptions,
    /// Model JSON; residual/error CSVs, report and manifest are written next
    /// to it.
    #[arg(short, long, default_value = "model.json")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct MomentsArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset whose stored configuration drives the Monte Carlo solves.
    #[arg(long, required_unless_present = "config")]
    pub dataset: Option<PathBuf>,
    /// Problem configuration JSON, instead of a dataset.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Monte Carlo realizations; 0 skips Monte Carlo. Defaults to 100000
    /// (10000 for ex4).
    #[arg(long)]
    pub mc_n: Option<usize>,
    /// Monte Carlo seed; defaults to a value derived from the problem seed.
    #[arg(long)]
    pub mc_seed: Option<u64>,
    #[arg(short, long, default_value = "moments.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct ComparePceArgs {
    /// Dataset JSON with a stored problem configuration.
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub min_degree: usize,
    #[arg(long, default_value_t = 3)]
    pub max_degree: usize,
    /// Use only the first rows of the training and test splits.
    #[arg(long)]
    pub max_rows: Option<usize>,
    /// Fitted model for the comparison row.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Stochastic term whose ψ is also fitted by 1-D Legendre polynomials.
    #[arg(long, requires = "model")]
    pub legendre_term: Option<usize>,
    /// Legendre basis sizes for --legendre-term.
    #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
    pub legendre_sizes: Vec<usize>,
    #[arg(short, long, default_value = "pce.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset the model was fitted to; network checks use its test rows.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(short, long, default_value = "diagnostics.json")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct AblateArgs {
    pub dataset: PathBuf,
    /// Training set sizes.
    #[arg(long, value_delimiter = ',', default_value = "50,700")]
    pub sizes: Vec<usize>,
    #[command(flatten)]
    pub fit: FitOptions,
    #[arg(short, long, default_value = "ablation.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

/// Invalid flags or options; reported with exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn configure_threads(flag: Option<usize>) -> anyhow::Result<()> {
    let from_env = std::env::var("NEURAL_CHAOS_THREADS").ok();
    let threads = match (flag, from_env) {
        (Some(n), _) => Some(n),
        (None, Some(v)) => Some(v.trim().parse::<usize>().map_err(|_| {
            UsageError(format!("NEURAL_CHAOS_THREADS must be a positive integer, got `{v}`"))
        })?),
        (None, None) => None,
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(UsageError("thread count must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

/// Parses `args` (without the program name) and runs the command.
fn run(args: Vec<String>) -> anyhow::Result<()> {
    let argv = std::iter::once("neural-chaos".to_string()).chain(args.iter().cloned());
    let cli = Cli::try_parse_from(argv)?;
    match cli.command {
        Command::Generate(a) => commands::generate(a, args),
        Command::Fit(a) => commands::fit(a, args),
        Command::Moments(a) => commands::moments(a, args),
        Command::ComparePce(a) => commands::compare_pce(a, args),
        Command::Diagnose(a) => commands::diagnose(a, args),
        Command::AblateDatasize(a) => commands::ablate_datasize(a, args),
        Command::Replay(a) => commands::replay(a, run),
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = match Cli::try_parse_from(std::env::args()) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Err(e) = configure_threads(cli.threads) {
        eprintln!("error: {e:#}");
        return ExitCode::from(EXIT_USAGE);
    }
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::from(EXIT_FAILURE)
            }
        }
    }
}
