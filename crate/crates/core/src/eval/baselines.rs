//! Detectors run by the evaluation harness: the two-stage model and its baselines.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::{ScalerParams, Schema};
use crate::error::{Error, Result};
use crate::hbos::HistogramSet;
use crate::matrix::{dot, Matrix};
use crate::pipeline::{DocConfig, DocModel};
use crate::svdd::{self, SvddConfig, SvddModel};

/// A one-class scorer. Higher scores are more anomalous; `score` must not mutate.
pub trait Detector: Send {
    fn name(&self) -> &str;
    fn fit(&mut self, benign: &Matrix) -> Result<()>;
    fn score(&self, row: &[f64]) -> Result<f64>;

    fn score_batch(&self, rows: &Matrix) -> Result<Vec<f64>> {
        rows.iter_rows().map(|r| self.score(r)).collect()
    }
}

fn not_fitted(name: &str) -> Error {
    Error::InvalidConfig(format!("{name} detector used before fit"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaConfig {
    /// Keep the fewest components whose cumulative share of variance reaches this.
    pub variance: f64,
    /// Explicit component count; overrides `variance` (still capped at rank).
    pub components: Option<usize>,
}

impl Default for PcaConfig {
    fn default() -> Self {
        Self {
            variance: 0.9,
            components: None,
        }
    }
}

/// Principal subspace of centered training data; scores are squared reconstruction errors.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Unit eigenvectors of the covariance, one per row, by descending eigenvalue.
    pub components: Matrix,
    /// All covariance eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
}

/// Sample covariance (n − 1 denominator; n when there is a single row).
pub fn covariance(data: &Matrix) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if data.is_empty() {
        return Err(Error::EmptyInput("PCA training rows"));
    }
    let (n, d) = (data.rows(), data.cols());
    let mean: Vec<f64> = (0..d)
        .map(|j| data.column(j).sum::<f64>() / n as f64)
        .collect();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for x in data.iter_rows() {
        for a in 0..d {
            let da = x[a] - mean[a];
            for b in a..d {
                cov[(a, b)] += da * (x[b] - mean[b]);
            }
        }
    }
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / denom;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    Ok((mean, cov))
}

impl PcaModel {
    pub fn fit(data: &Matrix, config: &PcaConfig) -> Result<Self> {
        if !(config.variance > 0.0 && config.variance <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "PCA variance share must lie in (0, 1], got {}",
                config.variance
            )));
        }
        let (mean, cov) = covariance(data)?;
        let d = cov.nrows();
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();

        let top = eigenvalues.first().copied().unwrap_or(0.0);
        let rank = eigenvalues
            .iter()
            .filter(|&&l| l > top * 1e-12 && l > 0.0)
            .count();
        let total: f64 = eigenvalues.iter().sum();
        let m = match config.components {
            Some(m) => m.min(rank),
            None if total <= 0.0 => 0,
            None => {
                let target = config.variance * total;
                let mut acc = 0.0;
                let mut m = 0;
                for &l in &eigenvalues {
                    if acc >= target {
                        break;
                    }
                    acc += l;
                    m += 1;
                }
                m.min(rank)
            }
        };
        let mut components = Matrix::zeros(m, d);
        for (r, &i) in order.iter().take(m).enumerate() {
            for j in 0..d {
                components.set(r, j, eig.eigenvectors[(j, i)]);
            }
        }
        Ok(Self {
            mean,
            components,
            eigenvalues,
        })
    }

    pub fn n_components(&self) -> usize {
        self.components.rows()
    }

    /// `‖(x − μ) − V Vᵀ (x − μ)‖²`.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                context: "PCA input",
                expected: self.mean.len(),
                actual: x.len(),
            });
        }
        let mut residual: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        let centered = residual.clone();
        for v in self.components.iter_rows() {
            let coef = dot(v, &centered);
            for (r, &vj) in residual.iter_mut().zip(v) {
                *r -= coef * vj;
            }
        }
        Ok(residual.iter().map(|r| r * r).sum())
    }
}

pub struct PcaDetector {
    config: PcaConfig,
    model: Option<PcaModel>,
}

impl PcaDetector {
    pub fn new(config: PcaConfig) -> Self {
        Self {
            config,
            model: None,
        }
    }
}

impl Detector for PcaDetector {
    fn name(&self) -> &str {
        "pca"
    }

    fn fit(&mut self, benign: &Matrix) -> Result<()> {
        self.model = Some(PcaModel::fit(benign, &self.config)?);
        Ok(())
    }

    fn score(&self, row: &[f64]) -> Result<f64> {
        self.model
            .as_ref()
            .ok_or_else(|| not_fitted("pca"))?
            .score(row)
    }
}

/// HBOS directly on the scaled input features.
pub struct HbosDetector {
    bins: usize,
    hist: Option<HistogramSet>,
}

impl HbosDetector {
    pub fn new(bins: usize) -> Self {
        Self { bins, hist: None }
    }
}

impl Detector for HbosDetector {
    fn name(&self) -> &str {
        "hbos"
    }

    fn fit(&mut self, benign: &Matrix) -> Result<()> {
        self.hist = Some(HistogramSet::fit(benign, self.bins)?);
        Ok(())
    }

    fn score(&self, row: &[f64]) -> Result<f64> {
        self.hist
            .as_ref()
            .ok_or_else(|| not_fitted("hbos"))?
            .score(row)
    }
}

/// Squared distance to the hypersphere center.
pub struct SvddDetector {
    config: SvddConfig,
    model: Option<SvddModel>,
}

impl SvddDetector {
    pub fn new(config: SvddConfig) -> Self {
        Self {
            config,
            model: None,
        }
    }
}

impl Detector for SvddDetector {
    fn name(&self) -> &str {
        "svdd"
    }

    fn fit(&mut self, benign: &Matrix) -> Result<()> {
        self.model = Some(svdd::train(&self.config, benign)?);
        Ok(())
    }

    fn score(&self, row: &[f64]) -> Result<f64> {
        self.model
            .as_ref()
            .ok_or_else(|| not_fitted("svdd"))?
            .distance_score(row)
    }
}

/// The two-stage model; the harness hands it rows that are already scaled.
pub struct DocDetector {
    config: DocConfig,
    model: Option<DocModel>,
}

impl DocDetector {
    pub fn new(config: DocConfig) -> Self {
        Self {
            config,
            model: None,
        }
    }

    pub fn model(&self) -> Option<&DocModel> {
        self.model.as_ref()
    }
}

impl Detector for DocDetector {
    fn name(&self) -> &str {
        "doc"
    }

    fn fit(&mut self, benign: &Matrix) -> Result<()> {
        let d = benign.cols();
        let schema = Schema::new((0..d).map(|j| format!("x{j}")).collect());
        self.model = Some(DocModel::fit(
            &self.config,
            benign,
            ScalerParams::unit(d),
            schema,
        )?);
        Ok(())
    }

    fn score(&self, row: &[f64]) -> Result<f64> {
        self.model
            .as_ref()
            .ok_or_else(|| not_fitted("doc"))?
            .score_scaled(row)
    }
}
