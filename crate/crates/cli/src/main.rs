use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kuramoto_oed::mocu::BackendKind;
use kuramoto_oed::oed::Strategy;
use kuramoto_oed::uncertainty::Setup;
use serde::Serialize;

mod commands;

/// Kuramoto network control under coupling uncertainty: datasets, surrogate
/// training, MOCU estimation and experimental design campaigns.
#[derive(Parser, Debug)]
#[command(name = "kuramoto-oed", version)]
pub struct Cli {
    /// Worker threads (defaults to the hardware parallelism).
    #[arg(long, global = true, env = "KURAMOTO_OED_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a balanced labeled dataset.
    GenData(GenDataArgs),
    /// Train the surrogate classifier on a dataset.
    Train(TrainArgs),
    /// Estimate the MOCU of a class (optionally after one observed outcome).
    Estimate(EstimateArgs),
    /// Rank all pairwise experiments by expected remaining MOCU.
    Rank(RankArgs),
    /// Run a simulated design campaign against a true model.
    Campaign(CampaignArgs),
    /// Time expected remaining MOCU under both backends.
    Benchmark(BenchmarkArgs),
    /// Aggregate campaign outputs into plot-ready CSV series.
    EmitPlots(EmitPlotsArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
#[group(required = true, multiple = false)]
pub struct SourceArgs {
    /// Bundled setup: five_osc or seven_osc.
    #[arg(long)]
    pub preset: Option<Setup>,
    /// Setup JSON file (omega, lower, upper, optional true_model).
    #[arg(long)]
    pub setup: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SimArgs {
    /// Sampling rate of the synchronization check, Hz.
    #[arg(long, default_value_t = 160.0)]
    pub fs: f64,
    /// Simulated time of the synchronization check, s.
    #[arg(long, default_value_t = 5.0)]
    pub duration: f64,
    /// Bisection tolerance on the control coupling.
    #[arg(long, default_value_t = 2.5e-4)]
    pub tolerance: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BackendArgs {
    #[arg(long, default_value = "ode")]
    pub backend: BackendKind,
    /// Trained classifier (required for the ml backend).
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Samples per label (default 2000 for five_osc, 5000 otherwise).
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Labeling horizon, s.
    #[arg(long, default_value_t = 400.0)]
    pub label_duration: f64,
    /// Use the published dataset sizes.
    #[arg(long)]
    pub paper_scale: bool,
    #[command(flatten)]
    pub sim: SimArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TrainArgs {
    /// Directory written by gen-data.
    #[arg(long)]
    pub data: PathBuf,
    /// Hidden width as a multiple of the feature count (default from the
    /// setup: 3 for five_osc, 4 for seven_osc).
    #[arg(long)]
    pub multiplier: Option<usize>,
    #[arg(long)]
    pub preset: Option<Setup>,
    #[arg(long, default_value_t = 2000)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct MocuArgs {
    /// Monte-Carlo sample count (default 2048, or 20480 with --paper-scale).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub paper_scale: bool,
    /// Score experiments by filtering one parent sample set.
    #[arg(long)]
    pub crn: bool,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub mocu: MocuArgs,
    #[command(flatten)]
    pub sim: SimArgs,
    /// Condition on an outcome for this one-based pair, e.g. 1,2.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub pair: Option<Vec<usize>>,
    /// Observed outcome for --pair.
    #[arg(long, requires = "pair")]
    pub synchronized: Option<bool>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct RankArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub mocu: MocuArgs,
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct CampaignArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long)]
    pub strategy: Strategy,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub mocu: MocuArgs,
    #[command(flatten)]
    pub sim: SimArgs,
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    /// K for the ground-truth MOCU recorded after each step (default: same
    /// as --k).
    #[arg(long)]
    pub eval_k: Option<usize>,
    /// JSON array with the true coupling vector.
    #[arg(long, conflicts_with = "sample_true_model")]
    pub true_model: Option<PathBuf>,
    /// Draw the true model from the class with the campaign seed, even if
    /// the setup ships one.
    #[arg(long)]
    pub sample_true_model: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub mocu: MocuArgs,
    #[command(flatten)]
    pub sim: SimArgs,
    /// Repetitions with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    /// One-based pair to score (default: the first informative pair).
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub pair: Option<Vec<usize>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EmitPlotsArgs {
    /// Directories written by `campaign --out`.
    #[arg(long, num_args = 1.., required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
