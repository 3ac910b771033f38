//! The deployable two-stage detector: hypersphere embeddings scored by HBOS.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{fit_scaler, ScalerParams, Schema};
use crate::error::{Error, ModelError, Result};
use crate::hbos::{HistogramSet, DEFAULT_BINS};
use crate::matrix::Matrix;
use crate::stats;
use crate::svdd::{self, SvddConfig, SvddModel};

mod format;

pub use format::{FORMAT_VERSION, MAGIC};

pub const DEFAULT_CONTAMINATION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocConfig {
    pub svdd: SvddConfig,
    pub bins: usize,
    pub contamination: f64,
}

impl Default for DocConfig {
    fn default() -> Self {
        Self {
            svdd: SvddConfig::default(),
            bins: DEFAULT_BINS,
            contamination: DEFAULT_CONTAMINATION,
        }
    }
}

impl DocConfig {
    pub fn validate(&self) -> Result<()> {
        self.svdd.validate()?;
        if self.bins == 0 {
            return Err(Error::InvalidConfig("bins must be at least 1".into()));
        }
        validate_contamination(self.contamination)
    }
}

pub(crate) fn validate_contamination(c: f64) -> Result<()> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "contamination must lie strictly between 0 and 1, got {c}"
        )));
    }
    Ok(())
}

/// Decision threshold: the `(1 − contamination)`-quantile of training scores.
pub fn quantile_threshold(train_scores: &[f64], contamination: f64) -> Result<f64> {
    if train_scores.is_empty() {
        return Err(Error::EmptyInput("training scores"));
    }
    if let Some(bad) = train_scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("training score {bad}")));
    }
    Ok(stats::quantile(train_scores, 1.0 - contamination))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictLabel {
    Benign,
    Anomaly,
}

impl VerdictLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            VerdictLabel::Benign => "benign",
            VerdictLabel::Anomaly => "anomaly",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub score: f64,
    pub label: VerdictLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocModel {
    pub svdd: SvddModel,
    pub hist: HistogramSet,
    pub threshold: f64,
    pub contamination: f64,
    pub scaler: ScalerParams,
    pub schema: Schema,
}

impl DocModel {
    /// Trains on benign rows that are already scaled with `scaler`.
    pub fn fit(
        config: &DocConfig,
        benign_train: &Matrix,
        scaler: ScalerParams,
        schema: Schema,
    ) -> Result<Self> {
        config.validate()?;
        if benign_train.is_empty() {
            return Err(Error::EmptyInput("benign training set"));
        }
        if scaler.dim() != benign_train.cols() || schema.columns.len() != benign_train.cols() {
            return Err(Error::DimensionMismatch {
                context: "training schema",
                expected: benign_train.cols(),
                actual: if scaler.dim() != benign_train.cols() {
                    scaler.dim()
                } else {
                    schema.columns.len()
                },
            });
        }
        let svdd = svdd::train(&config.svdd, benign_train)?;
        let embeddings = svdd.embed_batch(benign_train)?;
        let hist = HistogramSet::fit(&embeddings, config.bins)?;
        let scores = hist.score_batch(&embeddings)?;
        let threshold = quantile_threshold(&scores, config.contamination)?;
        Ok(Self {
            svdd,
            hist,
            threshold,
            contamination: config.contamination,
            scaler,
            schema,
        })
    }

    /// Fits the scaler on the raw benign rows, then trains.
    pub fn fit_raw(config: &DocConfig, benign_raw: &Matrix, schema: Schema) -> Result<Self> {
        let scaler = fit_scaler(benign_raw)?;
        let scaled = scaler.apply(benign_raw)?;
        Self::fit(config, &scaled, scaler, schema)
    }

    pub fn schema_hash(&self) -> [u8; 32] {
        self.schema.hash()
    }

    /// Refuses inputs whose feature columns differ from the training schema.
    pub fn check_schema(&self, input: &Schema) -> Result<(), ModelError> {
        if input.hash() != self.schema_hash() {
            return Err(ModelError::SchemaMismatch {
                expected: self.schema.columns.len(),
                actual: input.columns.len(),
                expected_columns: self.schema.columns.join(","),
                actual_columns: input.columns.join(","),
            });
        }
        Ok(())
    }

    /// HBOS of the embedding of a row that is already scaled.
    pub fn score_scaled(&self, x: &[f64]) -> Result<f64> {
        self.hist.score(&self.svdd.embed(x)?)
    }

    /// `hbos(hist, embed(svdd, scale(x)))` for a raw feature row.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        self.score_scaled(&self.scaler.transform(x)?)
    }

    pub fn score_batch(&self, xs: &Matrix) -> Result<Vec<f64>> {
        xs.iter_rows().map(|x| self.score(x)).collect()
    }

    /// Ties with the threshold classify benign.
    pub fn verdict(&self, score: f64) -> Verdict {
        Verdict {
            score,
            label: if score > self.threshold {
                VerdictLabel::Anomaly
            } else {
                VerdictLabel::Benign
            },
        }
    }

    pub fn classify(&self, x: &[f64]) -> Result<Verdict> {
        Ok(self.verdict(self.score(x)?))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        format::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        format::decode(bytes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_bytes(&bytes)?)
    }
}
