use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gmdkit::simulate::{HVariant, Method, QVariant};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "gmdkit", version, about = "Regression and inference for data with row and column kernels")]
pub struct Cli {
    /// Worker threads (default: all logical cores).
    #[arg(long, global = true, env = "GMDKIT_THREADS")]
    pub threads: Option<usize>,
    /// Human-readable tables instead of JSON.
    #[arg(long, global = true)]
    pub pretty: bool,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generalized matrix decomposition of X under (H, Q).
    Decompose(DecomposeArgs),
    /// Fit a GMD regression or kernel penalized regression.
    #[command(subcommand)]
    Fit(FitCommand),
    /// Bias-corrected p-values for every coefficient.
    Infer(InferArgs),
    /// Permutation tests of whether a kernel is informative.
    #[command(subcommand)]
    Structtest(StructCommand),
    /// Mixing weight between a row kernel and the identity.
    RobustTau(RobustArgs),
    /// Run a simulation scenario and summarize each method.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Design matrix, n rows by p columns.
    #[arg(long = "x", value_name = "CSV")]
    pub x: PathBuf,
    /// Row kernel (n×n); identity when omitted.
    #[arg(long = "h", value_name = "CSV")]
    pub h: Option<PathBuf>,
    /// Column kernel (p×p); identity when omitted.
    #[arg(long = "q", value_name = "CSV")]
    pub q: Option<PathBuf>,
    /// Response, one value per row of X.
    #[arg(long = "y", value_name = "CSV")]
    pub y: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Keep at most this many components.
    #[arg(long)]
    pub rank: Option<usize>,
    /// Skip H-weighted centering of the columns.
    #[arg(long)]
    pub no_center: bool,
}

#[derive(Debug, Subcommand)]
pub enum FitCommand {
    /// Regression on a subset of GMD components.
    Gmdr(GmdrArgs),
    /// Generalized ridge with penalty η‖β‖² in the Q⁻¹ norm.
    Kpr(KprArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ordering {
    /// By variable-importance score.
    Vi,
    /// By GMD value.
    Top,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GmdrArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "vi")]
    pub order: Ordering,
    /// Use exactly the first k components instead of a GCV choice.
    #[arg(long, conflicts_with = "components")]
    pub fixed_top_k: Option<usize>,
    /// Explicit one-based component indices, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub components: Option<Vec<usize>>,
    #[arg(long, default_value_t = gmdkit::estimators::DEFAULT_MIN_VAR_FRAC)]
    pub min_var_frac: f64,
    #[arg(long)]
    pub no_standardize: bool,
    /// Also report the leave-one-out relative prediction error.
    #[arg(long)]
    pub loocv: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct KprArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// A nonnegative number, or `cv` for k-fold cross-validation.
    #[arg(long, default_value = "cv")]
    pub eta: String,
    #[arg(long, default_value_t = gmdkit::estimators::DEFAULT_CV_FOLDS)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub no_standardize: bool,
    #[arg(long)]
    pub loocv: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Gmdr,
    Kpr,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InferArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "gmdr")]
    pub estimator: Estimator,
    /// Selection order for `gmdr`.
    #[arg(long, value_enum, default_value = "vi")]
    pub order: Ordering,
    /// For `gmdr`: use the first k components.
    #[arg(long)]
    pub fixed_top_k: Option<usize>,
    #[arg(long, default_value_t = gmdkit::estimators::DEFAULT_MIN_VAR_FRAC)]
    pub min_var_frac: f64,
    /// For `kpr`: a nonnegative number or `cv`.
    #[arg(long, default_value = "cv")]
    pub eta: String,
    #[arg(long, default_value_t = gmdkit::estimators::DEFAULT_CV_FOLDS)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Bias-correction switch applied to every coefficient (0 or 1).
    #[arg(long = "bias-switch", default_value_t = 1, value_parser = clap::value_parser!(u8).range(0..=1))]
    pub bias_switch: u8,
    /// Sparsity exponent in the slack bound.
    #[arg(long, default_value_t = gmdkit::inference::DEFAULT_SPARSITY_R)]
    pub r: f64,
    /// Lasso penalty of the initial estimator (default 2√(3n log p)).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Known noise variance; skips its estimation.
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Benjamini–Yekutieli q-values; significance uses this level.
    #[arg(long)]
    pub fdr: Option<f64>,
    /// Replace H by the estimated mixture τH + (1 − τ)‖H‖I first.
    #[arg(long)]
    pub robust: bool,
    #[arg(long)]
    pub no_standardize: bool,
}

#[derive(Debug, Subcommand)]
pub enum StructCommand {
    /// Kernel RV test between a data kernel and a structure kernel.
    Krv(KrvArgs),
    /// Kernel association test between the response and a row kernel.
    Mirkat(MirkatArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    /// Compare XXᵀ with an n×n kernel.
    Row,
    /// Compare XᵀX with a p×p kernel.
    Column,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScreenArgs {
    /// Structure kernel (its inverse is compared).
    #[arg(long, value_name = "CSV")]
    pub kernel: PathBuf,
    #[arg(long, default_value_t = gmdkit::structure::DEFAULT_PERMUTATIONS)]
    pub b: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct KrvArgs {
    #[arg(long = "x", value_name = "CSV")]
    pub x: PathBuf,
    #[arg(long, value_enum, default_value = "column")]
    pub side: Side,
    #[command(flatten)]
    pub screen: ScreenArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MirkatArgs {
    #[arg(long = "y", value_name = "CSV")]
    pub y: PathBuf,
    #[command(flatten)]
    pub screen: ScreenArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RobustArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Setting {
    #[value(name = "I")]
    I,
    #[value(name = "II")]
    II,
    #[value(name = "III")]
    III,
    #[value(name = "IV")]
    IV,
    #[value(name = "perturbed")]
    Perturbed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum QChoice {
    True,
    Q1,
    Q2,
}

impl From<QChoice> for QVariant {
    fn from(q: QChoice) -> Self {
        match q {
            QChoice::True => QVariant::True,
            QChoice::Q1 => QVariant::Q1,
            QChoice::Q2 => QVariant::Q2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum HChoice {
    H1,
    H2,
    H3,
    H4,
    H5,
    H6,
}

impl From<HChoice> for HVariant {
    fn from(h: HChoice) -> Self {
        match h {
            HChoice::H1 => HVariant::H1,
            HChoice::H2 => HVariant::H2,
            HChoice::H3 => HVariant::H3,
            HChoice::H4 => HVariant::H4,
            HChoice::H5 => HVariant::H5,
            HChoice::H6 => HVariant::H6,
        }
    }
}

fn parse_method(s: &str) -> Result<Method, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
        "expected one of gmdi-d, gmdi-k, r-gmdi-d, r-gmdi-k, krv-column, krv-row, \
         mirkat-row, loocv-vi, loocv-top, loocv-kpr"
            .to_string()
    })
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub setting: Setting,
    /// Target R² (settings I and II).
    #[arg(long, default_value_t = 0.8)]
    pub r2: f64,
    #[arg(long, value_enum, default_value = "q1")]
    pub q_variant: QChoice,
    #[arg(long, value_enum, default_value = "h1")]
    pub h_variant: HChoice,
    /// Eigenvalue-mass threshold of the truncated row kernel (setting IV).
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    /// Noise perturbation size (perturbed design).
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated; a per-setting default when omitted.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    pub methods: Option<Vec<Method>>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = gmdkit::structure::DEFAULT_PERMUTATIONS)]
    pub permutations: usize,
    /// Also write one CSV row per replicate and method.
    #[arg(long, value_name = "CSV")]
    pub csv: Option<PathBuf>,
}
