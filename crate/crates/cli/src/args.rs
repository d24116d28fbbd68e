use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use psiflat::{ExportFormat, Measure, Space, TraceMode};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "psiflat", version, about = "Scale-invariant flatness analysis for ReLU MLPs")]
pub struct Cli {
    /// JSON file supplying any flag; explicit flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads (default: available cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// More log output on stderr (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

pub const SUBCOMMANDS: &[&str] = &["train", "paths", "transform", "flatness", "landscape", "verify", "bound"];

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an MLP with SGD and write a checkpoint.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Skeleton, basis paths and basis-path values of a network.
    #[command(args_override_self = true)]
    Paths(PathsArgs),
    /// Apply a positive scaling to a checkpoint and report invariance.
    #[command(args_override_self = true)]
    Transform(TransformArgs),
    /// Flatness measures in weight or basis-path space.
    #[command(args_override_self = true)]
    Flatness(FlatnessArgs),
    /// Sample a 2-D loss slice around a checkpoint.
    #[command(args_override_self = true)]
    Landscape(LandscapeArgs),
    /// Run the invariant suites.
    #[command(args_override_self = true)]
    Verify(VerifyArgs),
    /// Flatness upper bound and PAC-Bayes report.
    #[command(args_override_self = true)]
    Bound(BoundArgs),
}

/// Comma-separated values given as one flag argument.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct List<T>(pub Vec<T>);

impl<T> std::ops::Deref for List<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

fn list<T: std::str::FromStr>(s: &str) -> Result<List<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|t| t.trim().parse::<T>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<Result<_, _>>()
        .map(List)
}

fn usize_list(s: &str) -> Result<List<usize>, String> {
    list(s)
}

fn f64_list(s: &str) -> Result<List<f64>, String> {
    list(s)
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Dataset spec, e.g. `blobs:classes=3,dim=8,n=600,sigma=0.5,seed=1`.
    #[arg(long)]
    pub dataset: String,
    /// Layer widths, e.g. `8,16,16,3`.
    #[arg(long, value_parser = usize_list)]
    pub dims: List<usize>,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stop once an epoch's training loss falls below this.
    #[arg(long)]
    pub target_loss: Option<f64>,
    /// Initial weights are uniform in [-r, r].
    #[arg(long, default_value_t = 0.5)]
    pub init_radius: f64,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PathsArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Widths; with no checkpoint a random network of this shape is used.
    #[arg(long, value_parser = usize_list)]
    pub dims: Option<List<usize>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Include the node sequence of every basis path.
    #[arg(long)]
    pub list: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct TransformArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output checkpoint.
    #[arg(long)]
    pub out: PathBuf,
    /// One positive factor per hidden node, layer by layer.
    #[arg(long, value_parser = f64_list, conflicts_with = "canonical")]
    pub scaling: Option<List<f64>>,
    /// Range for random log-uniform factors when `--scaling` is absent.
    #[arg(long, value_parser = f64_list, default_value = "0.1,10")]
    pub range: List<f64>,
    /// Map to the canonical representative instead.
    #[arg(long)]
    pub canonical: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dataset for the loss comparison; defaults to the checkpoint's.
    #[arg(long)]
    pub dataset: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct FlatnessArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset spec; defaults to the one recorded in the checkpoint.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long, default_value_t = Space::Psi)]
    pub space: Space,
    /// `eps`, `trace`, `expected` or `all`.
    #[arg(long, default_value = "all")]
    pub measure: String,
    /// Ball radius.
    #[arg(long, default_value_t = 0.05)]
    pub eps: f64,
    /// Perturbation standard deviation for the expected measure.
    #[arg(long, default_value_t = 0.01)]
    pub sigma_u: f64,
    /// Monte Carlo draws for the expected measure.
    #[arg(long, default_value_t = 200)]
    pub mc: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Uniform ball samples in the eps search.
    #[arg(long, default_value_t = 64)]
    pub samples: usize,
    /// Gradient-ascent restarts in the eps search.
    #[arg(long, default_value_t = 4)]
    pub restarts: usize,
    #[arg(long, default_value_t = 40)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.25)]
    pub step_size: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub fd_step: f64,
    /// `auto`, `exact` or `hutchinson`.
    #[arg(long, default_value = "auto")]
    pub trace_mode: String,
    #[arg(long, default_value_t = 100)]
    pub probes: usize,
}

impl FlatnessArgs {
    pub fn measures(&self) -> Result<Vec<Measure>, String> {
        if self.measure == "all" {
            return Ok(vec![Measure::Eps, Measure::Trace, Measure::Expected]);
        }
        self.measure
            .split(',')
            .map(|m| m.trim().parse::<Measure>().map_err(|e| e.to_string()))
            .collect()
    }

    pub fn trace_mode(&self) -> Result<TraceMode, String> {
        match self.trace_mode.as_str() {
            "auto" => Ok(TraceMode::Auto),
            "exact" => Ok(TraceMode::Exact),
            "hutchinson" => Ok(TraceMode::Hutchinson),
            other => Err(format!("unknown trace mode `{other}`")),
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct LandscapeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long, default_value_t = Space::Psi)]
    pub space: Space,
    /// Direction standard deviation.
    #[arg(long, default_value_t = 0.05)]
    pub sigma: f64,
    /// `lo,hi` for both axes or `lo1,hi1,lo2,hi2`.
    #[arg(long, value_parser = f64_list, default_value = "-1,1", allow_hyphen_values = true)]
    pub range: List<f64>,
    /// Points per axis, `n` or `n1,n2`.
    #[arg(long, value_parser = usize_list, default_value = "51")]
    pub res: List<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; without it the grid is printed as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `csv`, `json` or `svg`; inferred from `--out` when absent.
    #[arg(long)]
    pub format: Option<String>,
}

impl LandscapeArgs {
    pub fn format(&self) -> Result<Option<ExportFormat>, String> {
        if let Some(f) = &self.format {
            return f.parse().map(Some).map_err(|e: psiflat::Error| e.to_string());
        }
        let ext = self
            .out
            .as_ref()
            .and_then(|p| p.extension())
            .and_then(|e| e.to_str())
            .unwrap_or("csv");
        Ok(Some(ext.parse().unwrap_or(ExportFormat::Csv)))
    }
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArgs {
    /// Fewer trials per suite.
    #[arg(long)]
    pub quick: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct BoundArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: Option<String>,
    /// Radius in basis-path space.
    #[arg(long, default_value_t = 0.01)]
    pub eps: f64,
    /// Bound on layer-input norms; measured on the dataset when absent.
    #[arg(long)]
    pub c: Option<f64>,
    /// Lipschitz constant of the loss in the outputs.
    #[arg(long, default_value_t = std::f64::consts::SQRT_2)]
    pub c_l: f64,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_prior: f64,
    #[arg(long, default_value_t = 0.01)]
    pub sigma_posterior: f64,
    #[arg(long, default_value_t = 200)]
    pub mc: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
