use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fling::model::GridMode;
use fling::sampler::Profile;

#[derive(Debug, Parser)]
#[command(name = "fling", version, about = "Causal discovery for multivariate functional data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a dataset and its generating graph from the model.
    Simulate(SimulateArgs),
    /// Run the sampler on a long-format dataset.
    Fit(FitArgs),
    /// Score an estimated adjacency matrix against the truth.
    Evaluate(EvaluateArgs),
    /// Reproduce one of the bivariate identifiability examples.
    Demo(DemoArgs),
    /// Re-threshold a saved posterior summary.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub p: usize,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Grid size (the maximum per curve in uneven mode).
    #[arg(long, default_value_t = 125)]
    pub d: usize,
    #[arg(long, default_value_t = 5.0)]
    pub snr: f64,
    #[arg(long, value_enum, default_value_t = GridArg::Even)]
    pub grid: GridArg,
    /// Number of generating basis functions.
    #[arg(long = "K-true", default_value_t = 3)]
    pub k_true: usize,
    /// Number of generating splines.
    #[arg(long = "L-true", default_value_t = 6)]
    pub l_true: usize,
    #[arg(long, default_value_t = 0.5)]
    pub laplace_scale: f64,
    /// Edge probability of the random graph (default 2/p).
    #[arg(long)]
    pub edge_prob: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GridArg {
    Even,
    Uneven,
}

impl From<GridArg> for GridMode {
    fn from(g: GridArg) -> Self {
        match g {
            GridArg::Even => GridMode::Even,
            GridArg::Uneven => GridMode::Uneven,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    SimDefault,
    Eeg,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::SimDefault => Profile::SimDefault,
            ProfileArg::Eeg => Profile::Eeg,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Preset for iterations, thinning and threshold; the flags below override it.
    #[arg(long, value_enum, default_value_t = ProfileArg::SimDefault)]
    pub profile: ProfileArg,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Defaults to half of the iterations.
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Basis truncation level.
    #[arg(long = "K", conflicts_with = "k_candidates")]
    pub k: Option<usize>,
    /// Candidate truncation levels, chosen by explained variance.
    #[arg(long = "K-candidates", value_delimiter = ',')]
    pub k_candidates: Option<Vec<usize>>,
    /// Mixture components per coefficient.
    #[arg(long = "M")]
    pub m: Option<usize>,
    /// Number of cubic B-splines.
    #[arg(long = "L")]
    pub l: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Estimated adjacency CSV.
    #[arg(long)]
    pub estimated: PathBuf,
    /// True adjacency CSV.
    #[arg(long)]
    pub truth: PathBuf,
    /// Metrics CSV to write; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dataset the estimate came from; fills the `n` and `d` columns.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Recorded in the `seed` column.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[command(subcommand)]
    pub which: DemoCommand,
}

#[derive(Debug, Subcommand)]
pub enum DemoCommand {
    /// Scale-mixture errors: group-wise slopes reveal the causal direction.
    Example1 {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        n: usize,
    },
    /// Gaussian errors: both directions give the same covariance.
    Example2 {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        b: f64,
        #[arg(long, default_value_t = 1.0)]
        tau1: f64,
        #[arg(long, default_value_t = 1.0)]
        tau2: f64,
        #[arg(long, default_value_t = 0.1)]
        sigma1: f64,
        #[arg(long, default_value_t = 0.1)]
        sigma2: f64,
        #[arg(long, default_value_t = 0.3)]
        tau1_prime: f64,
        #[arg(long, default_value_t = 0.1)]
        sigma1_prime: f64,
    },
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// `summary.json` written by `fit`.
    #[arg(long)]
    pub summary: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Dataset whose function labels name the DOT nodes.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
}
