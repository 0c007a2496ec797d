//! Flag definitions and the merge of config-file values with flags.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::loss::{LossKind, LossParams};
use crate::solver::{InnerMethod, SolverConfig};

#[derive(Debug, Parser)]
#[command(
    name = "rhpsvm",
    version,
    about = "Robust kernel SVM training with the rescaled Huberized pinball loss"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a classifier and write the model file.
    Train(TrainArgs),
    /// Score a data file with a saved model.
    Predict(PredictArgs),
    /// Stratified k-fold cross-validation over a hyperparameter grid.
    Cv(CvArgs),
    /// Tabulate a loss and its derivative on a grid of margins.
    Losscurve(LossCurveArgs),
    /// Robustness and stability experiments.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Evaluate the generalization bound for a saved model.
    Bound(BoundArgs),
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Test accuracy of every loss under training-label noise.
    Noise(NoiseArgs),
    /// Bootstrap resampling stability of every loss.
    Stability(StabilityArgs),
    /// Weight-vector rotation caused by one far mislabeled point.
    Outlier(OutlierArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Csv,
    Libsvm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelName {
    Linear,
    Rbf,
    Poly,
}

fn parse_loss(s: &str) -> std::result::Result<LossKind, String> {
    LossKind::parse(s).map_err(|e| e.to_string())
}

fn parse_inner(s: &str) -> std::result::Result<InnerMethod, String> {
    InnerMethod::parse(s).map_err(|e| e.to_string())
}

fn parse_kernel(s: &str) -> std::result::Result<KernelName, String> {
    KernelName::from_str(s, false)
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input data file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Input format (default csv).
    #[arg(long, value_enum)]
    pub format: Option<DataFormat>,
    /// Feature count for libsvm input (default: largest index seen).
    #[arg(long)]
    pub dim: Option<usize>,
}

/// Loss shape parameters shared by every command that builds a loss.
#[derive(Debug, Args)]
pub struct LossArgs {
    /// Structured (JSON) config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[command(flatten)]
    pub loss_args: LossArgs,
    /// Kernel: linear, rbf or poly (default linear).
    #[arg(long, value_parser = parse_kernel)]
    pub kernel: Option<KernelName>,
    /// RBF width, or the inner-product scale of the polynomial kernel.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Polynomial degree (default 3).
    #[arg(long)]
    pub degree: Option<u32>,
    /// Polynomial offset (default 1).
    #[arg(long, allow_negative_numbers = true)]
    pub coef0: Option<f64>,
    /// Penalty weight on the empirical loss (default 1).
    #[arg(long = "C")]
    pub c: Option<f64>,
    /// Convex subproblem solver: primal or dual (default primal).
    #[arg(long, value_parser = parse_inner)]
    pub inner: Option<InnerMethod>,
    #[arg(long)]
    pub max_cccp: Option<usize>,
    #[arg(long)]
    pub outer_tol: Option<f64>,
    #[arg(long)]
    pub inner_tol: Option<f64>,
    #[arg(long)]
    pub max_inner: Option<usize>,
    #[arg(long)]
    pub big_m: Option<f64>,
    /// Seed for every random choice (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Loss: rhp, hp, pinball or hinge (default rhp).
    #[arg(long, value_parser = parse_loss)]
    pub loss: Option<LossKind>,
    /// Standardize features; the transform is stored with the model.
    #[arg(long)]
    pub standardize: bool,
    /// Model output path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Prediction CSV path (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Metrics CSV path (default: standard output when --out is given).
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_parser = parse_loss)]
    pub loss: Option<LossKind>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// JSON file listing candidate values per hyperparameter.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LossCurveArgs {
    #[command(flatten)]
    pub loss_args: LossArgs,
    #[arg(long, value_parser = parse_loss)]
    pub loss: Option<LossKind>,
    #[arg(long, default_value_t = -3.0, allow_negative_numbers = true)]
    pub umin: f64,
    #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
    pub umax: f64,
    #[arg(long, default_value_t = 0.1)]
    pub step: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Synthetic two-Gaussian data used when no --data file is given.
#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BenchShared {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub synth: SynthArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Fraction of every class held out for testing.
    #[arg(long, default_value_t = 0.3)]
    pub test_fraction: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    #[command(flatten)]
    pub shared: BenchShared,
    /// Comma-separated label-flip rates, each in [0, 0.5].
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3")]
    pub rates: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub shared: BenchShared,
    #[arg(long, default_value_t = 10)]
    pub resamples: usize,
}

#[derive(Debug, Args)]
pub struct OutlierArgs {
    #[command(flatten)]
    pub shared: BenchShared,
    /// Distance of the outlier from the origin along the positive-class mean.
    #[arg(long, default_value_t = 100.0)]
    pub distance: f64,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// The bound holds with probability at least 1 - zeta.
    #[arg(long, default_value_t = 0.05)]
    pub zeta: f64,
    /// Loss scale gamma of the bound.
    #[arg(long, default_value_t = 1.0)]
    pub gamma_scale: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Keys accepted in a `--config` file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub loss: Option<LossKind>,
    pub kernel: Option<String>,
    pub gamma: Option<f64>,
    pub degree: Option<u32>,
    pub coef0: Option<f64>,
    #[serde(rename = "C")]
    pub c: Option<f64>,
    pub eta: Option<f64>,
    pub lambda: Option<f64>,
    pub s: Option<f64>,
    pub tau: Option<f64>,
    pub inner: Option<InnerMethod>,
    pub max_cccp: Option<usize>,
    pub outer_tol: Option<f64>,
    pub inner_tol: Option<f64>,
    pub max_inner: Option<usize>,
    pub big_m: Option<f64>,
    pub seed: Option<u64>,
    pub standardize: Option<bool>,
    pub format: Option<DataFormat>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(ConfigFile::default());
        };
        let text = super::read_text(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::usage(format!("config file {}: {e}", path.display())))
    }
}

/// The effective settings of one invocation, echoed into its outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossKind>,
    pub kernel: KernelSpec,
    pub params: LossParams,
    pub solver: SolverConfig,
    pub seed: u64,
    pub standardize: bool,
}

fn param_error(e: Error) -> Error {
    match e {
        Error::Domain(msg) => Error::usage(format!("--{msg}")),
        other => other,
    }
}

pub fn resolve_params(flags: &LossArgs, file: &ConfigFile) -> Result<LossParams> {
    let d = LossParams::default();
    LossParams::new(
        flags.eta.or(file.eta).unwrap_or(d.eta()),
        flags.lambda.or(file.lambda).unwrap_or(d.lambda()),
        flags.s.or(file.s).unwrap_or(d.s()),
        flags.tau.or(file.tau).unwrap_or(d.tau()),
    )
    .map_err(param_error)
}

fn resolve_kernel(flags: &ModelArgs, file: &ConfigFile) -> Result<KernelSpec> {
    let name = match (flags.kernel, file.kernel.as_deref()) {
        (Some(k), _) => k,
        (None, Some(name)) => KernelName::from_str(name, false)
            .map_err(|_| Error::usage(format!("config key kernel: unknown kernel '{name}'")))?,
        (None, None) => KernelName::Linear,
    };
    let gamma = flags.gamma.or(file.gamma);
    let degree = flags.degree.or(file.degree);
    let coef0 = flags.coef0.or(file.coef0);
    if name != KernelName::Poly {
        if degree.is_some() {
            return Err(Error::usage("--degree only applies to --kernel poly"));
        }
        if coef0.is_some() {
            return Err(Error::usage("--coef0 only applies to --kernel poly"));
        }
    }
    let spec = match name {
        KernelName::Linear => {
            if gamma.is_some() {
                return Err(Error::usage("--gamma does not apply to --kernel linear"));
            }
            KernelSpec::Linear
        }
        KernelName::Rbf => KernelSpec::Rbf {
            gamma: gamma.unwrap_or(1.0),
        },
        KernelName::Poly => KernelSpec::Polynomial {
            degree: degree.unwrap_or(3),
            coef0: coef0.unwrap_or(1.0),
            scale: gamma.unwrap_or(1.0),
        },
    };
    spec.validate().map_err(param_error)?;
    Ok(spec)
}

pub fn resolve_solver(flags: &ModelArgs, file: &ConfigFile) -> Result<SolverConfig> {
    let d = SolverConfig::default();
    let cfg = SolverConfig {
        c: flags.c.or(file.c).unwrap_or(d.c),
        max_cccp: flags.max_cccp.or(file.max_cccp).unwrap_or(d.max_cccp),
        outer_tol: flags.outer_tol.or(file.outer_tol).unwrap_or(d.outer_tol),
        inner_method: flags.inner.or(file.inner).unwrap_or(d.inner_method),
        inner_tol: flags.inner_tol.or(file.inner_tol),
        max_inner: flags.max_inner.or(file.max_inner).unwrap_or(d.max_inner),
        big_m: flags.big_m.or(file.big_m).unwrap_or(d.big_m),
        seed: flags.seed.or(file.seed).unwrap_or(d.seed),
    };
    cfg.validate().map_err(|e| match e {
        Error::Domain(msg) => Error::usage(format!(
            "--{}",
            msg.replacen("big_M", "big-m", 1)
                .replacen("outer_tol", "outer-tol", 1)
                .replacen("inner_tol", "inner-tol", 1)
                .replacen("max_cccp", "max-cccp", 1)
                .replacen("max_inner", "max-inner", 1)
        )),
        other => other,
    })?;
    Ok(cfg)
}

impl ModelArgs {
    pub fn resolve(
        &self,
        loss: Option<LossKind>,
        standardize: bool,
    ) -> Result<(RunConfig, ConfigFile)> {
        let file = ConfigFile::load(self.loss_args.config.as_deref())?;
        let solver = resolve_solver(self, &file)?;
        let run = RunConfig {
            loss: loss.or(file.loss),
            kernel: resolve_kernel(self, &file)?,
            params: resolve_params(&self.loss_args, &file)?,
            seed: solver.seed,
            solver,
            standardize: standardize || file.standardize.unwrap_or(false),
        };
        Ok((run, file))
    }
}

/// Candidate values per hyperparameter for `cv`. Missing keys fall back to
/// the defaults below; keys that the chosen loss or kernel does not read are
/// collapsed to the single effective value.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    #[serde(rename = "C")]
    pub c: Option<Vec<f64>>,
    pub tau: Option<Vec<f64>>,
    pub s: Option<Vec<f64>>,
    pub lambda: Option<Vec<f64>>,
    pub eta: Option<Vec<f64>>,
    pub gamma: Option<Vec<f64>>,
    pub degree: Option<Vec<u32>>,
    pub coef0: Option<Vec<f64>>,
}

pub const DEFAULT_GRID_C: [f64; 4] = [0.1, 1.0, 10.0, 100.0];
pub const DEFAULT_GRID_TAU: [f64; 3] = [0.1, 0.5, 0.9];
pub const DEFAULT_GRID_S: [f64; 3] = [0.5, 1.0, 2.0];
pub const DEFAULT_GRID_LAMBDA: [f64; 3] = [0.5, 1.0, 2.0];
pub const DEFAULT_GRID_ETA: [f64; 1] = [1.0];
pub const DEFAULT_GRID_GAMMA: [f64; 3] = [0.01, 0.1, 1.0];
