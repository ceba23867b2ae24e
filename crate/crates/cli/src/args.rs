use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use covergllvm::distributions::Family;
use covergllvm::ordination::Metric;
use covergllvm::simulation::{Generator, Method};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(name = "covergllvm", version, about = "Latent variable models for percent-cover data")]
pub struct Cli {
    /// Base random seed.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Directory for all outputs.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Draw one synthetic dataset and its cover, class and presence views.
    Simulate(SimulateArgs),
    /// Fit a model and write it with its ordination.
    Fit(FitArgs),
    /// Predict expected cover and presence for new rows.
    Predict(PredictArgs),
    /// Score predictions against held-out observations.
    Evaluate(EvaluateArgs),
    /// Export the ordination of a fitted model.
    Ordinate(OrdinateArgs),
    /// Non-metric multidimensional scaling baseline.
    Nmds(NmdsArgs),
    /// Procrustes error between two score tables.
    Procrustes(ProcrustesArgs),
    /// Method comparison over simulated datasets.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DesignArgs {
    #[arg(long, default_value = "ordered-beta")]
    pub generator: Generator,
    #[arg(long, default_value_t = 60)]
    pub n: usize,
    #[arg(long, default_value_t = 40)]
    pub m: usize,
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    #[arg(long, default_value_t = 0.05)]
    pub one_prop: f64,
    #[arg(long, default_value_t = 4.0)]
    pub phi: f64,
    #[arg(long, default_value_t = 200_000)]
    pub calibration_cells: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// Proportion of exact zeros.
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    /// Replicate index (selects the random stream).
    #[arg(long, default_value_t = 0)]
    pub replicate: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum HurdleArg {
    ZerosOnly,
    ZerosAndOnes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutoffArg {
    Species,
    Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerArg {
    QuasiNewton,
    Adam,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataSource {
    /// Read the response table as site,species,value rows.
    #[arg(long)]
    pub long: bool,
    /// Responses are class labels 1..K rather than cover.
    #[arg(long)]
    pub ordinal: bool,
    /// Covariate CSV keyed by site.
    #[arg(long)]
    pub covariates: Option<PathBuf>,
    /// CSV mapping each site to a latent unit.
    #[arg(long)]
    pub units: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelTuning {
    #[arg(long, default_value_t = 2)]
    pub latent_dim: usize,
    #[arg(long)]
    pub row_effects: bool,
    #[arg(long, value_enum, default_value = "zeros-and-ones")]
    pub hurdle: HurdleArg,
    #[arg(long, value_enum, default_value = "species")]
    pub cutoffs: CutoffArg,
    /// N in the boundary shift (defaults to the number of rows).
    #[arg(long)]
    pub shift_n: Option<u32>,
    #[arg(long)]
    pub pooled_precision: bool,
    /// Full rather than diagonal variational covariance.
    #[arg(long)]
    pub full_cov: bool,
    #[arg(long, value_enum, default_value = "quasi-newton")]
    pub optimizer: OptimizerArg,
    #[arg(long, default_value_t = 3)]
    pub restarts: usize,
    #[arg(long, default_value_t = 3000)]
    pub max_iter: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Response CSV (sites × species).
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub source: DataSource,
    #[arg(long)]
    pub family: Family,
    #[command(flatten)]
    pub tuning: ModelTuning,
    /// CSV of site,group used to colour the ordination plot.
    #[arg(long)]
    pub groups: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Covariates of the new rows.
    #[arg(long)]
    pub covariates: Option<PathBuf>,
    /// CSV mapping each new row to a fitted latent unit (defaults to equal names).
    #[arg(long)]
    pub site_map: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// Expected-cover predictions (sites × species).
    #[arg(long, conflicts_with = "holdout_after")]
    pub predictions: Option<PathBuf>,
    /// Presence-probability predictions (sites × species).
    #[arg(long, conflicts_with = "holdout_after")]
    pub presence: Option<PathBuf>,
    /// Observed cover of the predicted rows.
    #[arg(long, conflicts_with = "holdout_after")]
    pub observed: Option<PathBuf>,
    /// Complete dataset used for species prevalence (defaults to the observed rows).
    #[arg(long, conflicts_with = "holdout_after")]
    pub prevalence_data: Option<PathBuf>,
    /// Fit on rows up to this year and evaluate on later rows.
    #[arg(long, requires_all = ["data", "family", "covariates"])]
    pub holdout_after: Option<f64>,
    #[arg(long, default_value = "year")]
    pub year_column: String,
    /// Complete response CSV for --holdout-after.
    #[arg(long, requires = "holdout_after")]
    pub data: Option<PathBuf>,
    #[arg(long, requires = "holdout_after")]
    pub family: Option<Family>,
    #[command(flatten)]
    pub source: DataSource,
    #[command(flatten)]
    pub tuning: ModelTuning,
    /// Number of prevalence groups.
    #[arg(long, default_value_t = 5)]
    pub groups: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct OrdinateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub groups: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct NmdsArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub long: bool,
    #[arg(long, default_value = "bray-curtis")]
    pub metric: Metric,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long)]
    pub groups: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ProcrustesArgs {
    /// Reference score table (site, dim1, ...).
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub candidate: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// Zero proportions, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.6,0.9")]
    pub p: Vec<f64>,
    #[arg(long, default_value_t = 30)]
    pub reps: usize,
    /// Methods, comma separated (default: all seven).
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<Method>,
    /// Optimizer restarts per model fit.
    #[arg(long, default_value_t = 2)]
    pub restarts: usize,
    #[arg(long, default_value_t = 3000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 10)]
    pub nmds_restarts: usize,
}
