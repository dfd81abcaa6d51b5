use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lossrate_core::analysis::BudgetForm;
use lossrate_core::{DataFormat, LambdaGrid, DEFAULT_TOLERANCE};

#[derive(Debug, Parser)]
#[command(
    name = "lossrate",
    version,
    about = "Cumulant and rate function estimates from per-sample losses"
)]
#[command(args_override_self = true)]
pub struct Cli {
    /// Worker threads for internal parallelism (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// JSON object of flag values; its entries override flags given on the
    /// command line.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Write the result here instead of stdout.
    #[arg(long, short, global = true, value_name = "FILE")]
    pub output: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    Csv,
    Jsonl,
}

impl From<InputFormat> for DataFormat {
    fn from(f: InputFormat) -> Self {
        match f {
            InputFormat::Csv => DataFormat::Csv,
            InputFormat::Jsonl => DataFormat::Jsonl,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Budget {
    Stated,
    Union,
}

impl From<Budget> for BudgetForm {
    fn from(b: Budget) -> Self {
        match b {
            Budget::Stated => BudgetForm::Stated,
            Budget::Union => BudgetForm::UnionBound,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cumulant estimate at one λ or over a grid.
    Cumulant(CumulantArgs),
    /// Rate function at one deviation or over a grid.
    Rate(RateArgs),
    /// Inverse rate function at one budget or over a grid.
    InverseRate(InverseRateArgs),
    /// Inverse rate restricted to a λ grid.
    GridInverseRate(GridInverseRateArgs),
    /// Generalization bound from held-out losses and model metadata.
    Bound(BoundArgs),
    /// Smoothness comparison of two models.
    Compare(CompareArgs),
    /// Checks the premises of the interpolator ordering claim.
    InterpolatorCheck(InterpolatorArgs),
    /// Replaces each augmentation group by its mean loss.
    Augment(AugmentArgs),
    /// Cumulant of the augmented loss against the per-view cumulant.
    DaCheck(DaCheckArgs),
    /// Second-order approximations around λ = 0.
    Taylor(TaylorArgs),
    /// Gradient-norm bounds on the cumulant and inverse rate.
    GradBound(GradBoundArgs),
    /// Exact cumulant and rate of a discrete loss distribution.
    OracleExact(OracleExactArgs),
    /// Monte Carlo tail probability of the empirical loss.
    SimulateCramer(CramerArgs),
    /// Small-sample bias of the cumulant estimator.
    BiasProbe(BiasArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Cumulant(_) => "cumulant",
            Command::Rate(_) => "rate",
            Command::InverseRate(_) => "inverse-rate",
            Command::GridInverseRate(_) => "grid-inverse-rate",
            Command::Bound(_) => "bound",
            Command::Compare(_) => "compare",
            Command::InterpolatorCheck(_) => "interpolator-check",
            Command::Augment(_) => "augment",
            Command::DaCheck(_) => "da-check",
            Command::Taylor(_) => "taylor",
            Command::GradBound(_) => "grad-bound",
            Command::OracleExact(_) => "oracle-exact",
            Command::SimulateCramer(_) => "simulate-cramer",
            Command::BiasProbe(_) => "bias-probe",
        }
    }
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Loss file (.csv, .jsonl).
    #[arg(long, short, value_name = "FILE")]
    pub input: PathBuf,

    /// Overrides the format guessed from the extension.
    #[arg(long, value_enum)]
    pub input_format: Option<InputFormat>,
}

#[derive(Debug, Args)]
pub struct CumulantArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, allow_negative_numbers = true, conflicts_with = "grid")]
    pub lambda: Option<f64>,
    /// "start:stop:count:linear|log"; defaults to 64 log points on [1e-3, 1e3].
    #[arg(long)]
    pub grid: Option<LambdaGrid>,
}

#[derive(Debug, Args)]
pub struct RateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(
        long,
        allow_negative_numbers = true,
        required_unless_present = "a_grid",
        conflicts_with = "a_grid"
    )]
    pub a: Option<f64>,
    #[arg(long)]
    pub a_grid: Option<LambdaGrid>,
    #[arg(long, allow_negative_numbers = true, default_value_t = DEFAULT_TOLERANCE)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct InverseRateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(
        long,
        allow_negative_numbers = true,
        required_unless_present = "s_grid",
        conflicts_with = "s_grid"
    )]
    pub s: Option<f64>,
    #[arg(long)]
    pub s_grid: Option<LambdaGrid>,
    #[arg(long, allow_negative_numbers = true, default_value_t = DEFAULT_TOLERANCE)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct GridInverseRateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, allow_negative_numbers = true)]
    pub s: f64,
    #[arg(long)]
    pub grid: Option<LambdaGrid>,
}

#[derive(Debug, Args)]
pub struct MetaArgs {
    /// Parameter count.
    #[arg(long)]
    pub p: u64,
    /// Training set size.
    #[arg(long)]
    pub n: u64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.05)]
    pub delta: f64,
    /// Interpolation threshold on the training loss.
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.0)]
    pub epsilon: f64,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub meta: MetaArgs,
    /// Training loss to add the inverse rate to (default: held-out mean).
    #[arg(long, allow_negative_numbers = true)]
    pub train_loss: Option<f64>,
    #[arg(long, value_enum, default_value_t = Budget::Stated)]
    pub budget: Budget,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Held-out loss files of model A and model B.
    #[arg(long, short, num_args = 2, required = true, value_names = ["A", "B"])]
    pub input: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub input_format: Option<InputFormat>,
    #[arg(long)]
    pub grid: Option<LambdaGrid>,
    /// Deviations for the rate check (default: 32 linear points up to the
    /// smaller loss gap).
    #[arg(long)]
    pub a_grid: Option<LambdaGrid>,
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct InterpolatorArgs {
    /// Held-out loss files of model A and model B.
    #[arg(long, short, num_args = 2, required = true, value_names = ["A", "B"])]
    pub input: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub input_format: Option<InputFormat>,
    /// Empirical training loss of model A.
    #[arg(long, allow_negative_numbers = true)]
    pub train_loss_a: f64,
    #[command(flatten)]
    pub meta: MetaArgs,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// JSON object mapping group ids to outer group ids.
    #[arg(long, value_name = "FILE")]
    pub outer_map: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DaCheckArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub grid: Option<LambdaGrid>,
    /// JSON object mapping group ids to outer group ids; enables the
    /// chained check.
    #[arg(long, value_name = "FILE")]
    pub outer_map: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TaylorArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: Option<f64>,
    #[arg(long, allow_negative_numbers = true, conflicts_with_all = ["lambda", "s", "displacement"])]
    pub a: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub s: Option<f64>,
    /// θ − θ₀ as comma-separated values; switches to the parameter-space
    /// approximation and needs --lambda.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        requires = "lambda"
    )]
    pub displacement: Option<Vec<f64>>,
    #[arg(long, allow_negative_numbers = true, default_value_t = DEFAULT_TOLERANCE)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct GradBoundArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Constant relating the cumulant to the mean squared gradient norm.
    #[arg(long = "m", value_name = "M", allow_negative_numbers = true)]
    pub m_const: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub s: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 1.0)]
    pub lambda: f64,
}

#[derive(Debug, Args)]
pub struct DistArgs {
    /// JSON file {"values": [...], "probs": [...]}.
    #[arg(long, value_name = "FILE")]
    pub dist: PathBuf,
}

#[derive(Debug, Args)]
pub struct OracleExactArgs {
    #[command(flatten)]
    pub dist: DistArgs,
    #[arg(long)]
    pub grid: Option<LambdaGrid>,
    /// Also report the exact rate at this deviation.
    #[arg(long, allow_negative_numbers = true)]
    pub a: Option<f64>,
    #[arg(long, default_value_t = lossrate_core::oracle::EXACT_RATE_RESOLUTION)]
    pub resolution: usize,
}

#[derive(Debug, Args)]
pub struct CramerArgs {
    #[command(flatten)]
    pub dist: DistArgs,
    #[arg(long)]
    pub n: u64,
    #[arg(long, allow_negative_numbers = true)]
    pub a: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BiasArgs {
    #[command(flatten)]
    pub dist: DistArgs,
    #[arg(long)]
    pub n: usize,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1000)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
