use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use docnet::data::{
    CsvOptions, DEFAULT_CATEGORY_COLUMN, DEFAULT_DROP_COLUMNS, DEFAULT_LABEL_COLUMN,
};
use docnet::eval::{DetectorKind, Protocol};
use docnet::nn::Activation;
use docnet::pipeline::DocConfig;
use docnet::svdd::SvddConfig;

#[derive(Debug, Parser)]
#[command(
    name = "docnet",
    version,
    about = "One-class flow anomaly detection: Deep SVDD embeddings scored by HBOS"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic labeled flow table.
    Synth(SynthArgs),
    /// Train a model on the benign rows of a labeled CSV.
    Train(TrainArgs),
    /// Score a CSV against a model; writes the rows plus `score` and `verdict` to stdout.
    Score(ScoreArgs),
    /// Cross-validate detectors on a labeled CSV.
    Evaluate(EvaluateArgs),
    /// Render a saved JSON evaluation report.
    Report(ReportArgs),
}

fn positive_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got {s:?}")),
    }
}

fn non_negative_f64(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a non-negative number, got {s:?}")),
    }
}

fn open_unit(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v < 1.0 => Ok(v),
        _ => Err(format!(
            "expected a number strictly between 0 and 1, got {s:?}"
        )),
    }
}

fn protocol(s: &str) -> Result<Protocol, String> {
    s.parse()
}

fn detector(s: &str) -> Result<DetectorKind, String> {
    s.parse()
}

fn activation(s: &str) -> Result<Activation, String> {
    s.parse()
}

#[derive(Debug, Args)]
pub struct SeedArg {
    /// RNG seed for splits, initialization and shuffling.
    #[arg(long, env = "DOC_SEED", default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub benign: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub attack: u64,
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    pub dims: u64,
    /// Distance the attack mixture is translated along a fixed random direction.
    #[arg(long, default_value_t = 0.6, value_parser = non_negative_f64)]
    pub shift: f64,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CsvArgs {
    #[arg(long, default_value = DEFAULT_LABEL_COLUMN)]
    pub label_column: String,
    /// Attack-group column, kept out of the features when present.
    #[arg(long, default_value = DEFAULT_CATEGORY_COLUMN)]
    pub category_column: String,
    /// Identifier columns to remove (comma separated). Defaults to the NetFlow flow keys.
    #[arg(long, value_delimiter = ',')]
    pub drop: Option<Vec<String>>,
    /// Skip rows with unparseable values instead of failing.
    #[arg(long)]
    pub skip_invalid: bool,
}

impl CsvArgs {
    pub fn options(&self) -> CsvOptions {
        CsvOptions {
            label_column: self.label_column.clone(),
            category_column: Some(self.category_column.clone()),
            drop_columns: self
                .drop
                .clone()
                .unwrap_or_else(|| DEFAULT_DROP_COLUMNS.iter().map(|s| s.to_string()).collect()),
            skip_invalid: self.skip_invalid,
        }
    }
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 256, value_parser = clap::value_parser!(u64).range(1..))]
    pub batch_size: u64,
    #[arg(long, default_value_t = 1e-2, value_parser = positive_f64)]
    pub lr: f64,
    /// Weight-decay coefficient.
    #[arg(long, default_value_t = 1e-4, value_parser = non_negative_f64)]
    pub lambda: f64,
    /// Layer widths after the input layer; the last is the embedding size.
    #[arg(long, value_delimiter = ',', default_values_t = [32usize, 8])]
    pub layer_dims: Vec<usize>,
    #[arg(long, default_value = "leaky-relu", value_parser = activation)]
    pub activation: Activation,
    #[arg(long, default_value_t = 0.1, value_parser = positive_f64)]
    pub center_eps: f64,
    /// Histogram bins per embedding dimension.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub bins: u64,
    /// Expected anomaly share of the training data; sets the threshold quantile.
    #[arg(long, default_value_t = 0.1, value_parser = open_unit)]
    pub contamination: f64,
}

impl ModelArgs {
    pub fn doc_config(&self, seed: u64) -> Result<DocConfig, String> {
        if self.layer_dims.is_empty() || self.layer_dims.contains(&0) {
            return Err("--layer-dims entries must be positive".into());
        }
        Ok(DocConfig {
            svdd: SvddConfig {
                hidden_dims: self.layer_dims.clone(),
                activation: self.activation,
                epochs: self.epochs,
                batch_size: self.batch_size as usize,
                lr: self.lr,
                lambda: self.lambda,
                seed,
                center_eps: self.center_eps,
            },
            bins: self.bins as usize,
            contamination: self.contamination,
        })
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Where to write the model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Train on this benign fraction and report held-out metrics on the rest plus all attacks.
    #[arg(long, value_parser = open_unit)]
    pub split: Option<f64>,
    #[command(flatten)]
    pub csv: CsvArgs,
    #[command(flatten)]
    pub model_args: ModelArgs,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub csv: CsvArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_delimiter = ',', value_parser = detector, default_value = "doc,svdd,hbos,pca")]
    pub detectors: Vec<DetectorKind>,
    #[arg(long, value_parser = protocol, default_value = "kfold")]
    pub protocol: Protocol,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(2..))]
    pub k: u64,
    /// Benign training fraction for the holdout protocol.
    #[arg(long, default_value_t = 0.7, value_parser = open_unit)]
    pub holdout_fraction: f64,
    /// Minimum cumulative variance share kept by the PCA baseline.
    #[arg(long, default_value_t = 0.9, value_parser = open_unit_closed)]
    pub pca_variance: f64,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    #[arg(long)]
    pub out_table: Option<PathBuf>,
    /// Include wall-clock seconds in the JSON report.
    #[arg(long)]
    pub timing: bool,
    #[command(flatten)]
    pub csv: CsvArgs,
    #[command(flatten)]
    pub model_args: ModelArgs,
    #[command(flatten)]
    pub seed: SeedArg,
}

fn open_unit_closed(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v <= 1.0 => Ok(v),
        _ => Err(format!("expected a number in (0, 1], got {s:?}")),
    }
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// JSON report written by `evaluate --out-json`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "text", value_parser = ["text", "json"])]
    pub format: String,
}
