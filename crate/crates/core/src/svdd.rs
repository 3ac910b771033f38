//! One-class hypersphere training on top of [`MlpParams`].
//!
//! The objective is the mean squared distance of the embeddings to a fixed
//! center `c` plus `λ/2 · Σ‖W‖²_F`. The center is set once from the initial
//! network and never trained.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{squared_distance, Matrix};
use crate::nn::{Activation, Gradients, MlpParams};
use crate::stats;

/// Quantile of training distances reported as the radius proxy.
pub const RADIUS_QUANTILE: f64 = 0.99;

/// Stream offset so the shuffle RNG is independent of weight init.
const SHUFFLE_STREAM: u64 = 0x5eed_5fd1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvddConfig {
    /// Layer widths after the input layer; the last entry is the embedding dimension.
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lambda: f64,
    pub seed: u64,
    pub center_eps: f64,
}

impl Default for SvddConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![32, 8],
            activation: Activation::LeakyRelu,
            epochs: 50,
            batch_size: 256,
            lr: 1e-2,
            lambda: 1e-4,
            seed: 42,
            center_eps: 0.1,
        }
    }
}

impl SvddConfig {
    /// Full `[d, h1, …, p]` for input dimension `d`.
    pub fn layer_dims(&self, input_dim: usize) -> Vec<usize> {
        std::iter::once(input_dim)
            .chain(self.hidden_dims.iter().copied())
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(Error::InvalidConfig(
                "hidden_dims must be non-empty and positive".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if !(self.center_eps > 0.0 && self.center_eps.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "center_eps must be positive, got {}",
                self.center_eps
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: u32,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvddModel {
    pub params: MlpParams,
    pub center: Vec<f64>,
    pub lambda: f64,
    /// 0.99-quantile of `‖φ(x)−c‖` over the training rows. Diagnostic only.
    pub radius_proxy: f64,
    pub train_history: Vec<EpochLoss>,
    /// Mean `‖φ(x)−c‖` over the training rows before the first update.
    pub initial_mean_distance: f64,
    /// Mean `‖φ(x)−c‖` over the training rows after the last update.
    pub final_mean_distance: f64,
}

/// Mean of the initial embeddings, with near-zero coordinates pushed out to `±eps`.
pub fn init_center(params: &MlpParams, train: &Matrix, eps: f64) -> Result<Vec<f64>> {
    if train.is_empty() {
        return Err(Error::EmptyInput("training set for center initialization"));
    }
    let p = params.output_dim();
    let mut c = vec![0.0; p];
    for x in train.iter_rows() {
        for (cj, zj) in c.iter_mut().zip(params.forward(x)?) {
            *cj += zj;
        }
    }
    let n = train.rows() as f64;
    for cj in &mut c {
        *cj /= n;
        if cj.abs() < eps {
            *cj = if *cj < 0.0 { -eps } else { eps };
        }
    }
    Ok(c)
}

fn check_batch(params: &MlpParams, batch: &Matrix, center: &[f64]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("loss batch"));
    }
    if center.len() != params.output_dim() {
        return Err(Error::DimensionMismatch {
            context: "hypersphere center",
            expected: params.output_dim(),
            actual: center.len(),
        });
    }
    if batch.cols() != params.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "network input",
            expected: params.input_dim(),
            actual: batch.cols(),
        });
    }
    Ok(())
}

/// `(1/n)·Σ‖φ(x_i)−c‖² + (λ/2)·Σ_ℓ‖W^ℓ‖²_F`.
pub fn svdd_loss(params: &MlpParams, batch: &Matrix, center: &[f64], lambda: f64) -> Result<f64> {
    check_batch(params, batch, center)?;
    let mut total = 0.0;
    for x in batch.iter_rows() {
        total += squared_distance(&params.forward(x)?, center);
    }
    Ok(total / batch.rows() as f64 + 0.5 * lambda * params.weight_norm_sq())
}

/// Loss and its exact gradient over a batch.
pub fn svdd_loss_grad(
    params: &MlpParams,
    batch: &Matrix,
    center: &[f64],
    lambda: f64,
) -> Result<(f64, Gradients)> {
    check_batch(params, batch, center)?;
    let n = batch.rows() as f64;
    let mut grads = Gradients::zeros_like(params);
    let mut dist = 0.0;
    for x in batch.iter_rows() {
        let z = params.forward(x)?;
        dist += squared_distance(&z, center);
        let dl_dz: Vec<f64> = z
            .iter()
            .zip(center)
            .map(|(zj, cj)| 2.0 * (zj - cj))
            .collect();
        params.backprop_accumulate(x, &dl_dz, 1.0 / n, &mut grads)?;
    }
    if lambda != 0.0 {
        for (g, w) in grads.layers.iter_mut().zip(params.layers()) {
            for (gv, wv) in g.as_mut_slice().iter_mut().zip(w.as_slice()) {
                *gv += lambda * wv;
            }
        }
    }
    Ok((dist / n + 0.5 * lambda * params.weight_norm_sq(), grads))
}

fn distances(params: &MlpParams, center: &[f64], data: &Matrix) -> Result<Vec<f64>> {
    data.iter_rows()
        .map(|x| Ok(squared_distance(&params.forward(x)?, center).sqrt()))
        .collect()
}

/// Mini-batch SGD on the hypersphere objective with a frozen center.
pub fn train(config: &SvddConfig, train: &Matrix) -> Result<SvddModel> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    if !train.is_finite() {
        return Err(Error::NonFinite("training features".into()));
    }
    let mut params = MlpParams::init(
        &config.layer_dims(train.cols()),
        config.activation,
        config.seed,
    )?;
    let center = init_center(&params, train, config.center_eps)?;
    let initial = distances(&params, &center, train)?;
    let initial_mean_distance = stats::mean(&initial);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..train.rows()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = train.select_rows(chunk);
            let (loss, grads) = svdd_loss_grad(&params, &batch, &center, config.lambda)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Diverged {
                    epoch: epoch + 1,
                    batch: b + 1,
                    loss,
                });
            }
            params.sgd_step(&grads, config.lr)?;
            loss_sum += loss;
            batches += 1;
        }
        history.push(EpochLoss {
            epoch: (epoch + 1) as u32,
            loss: loss_sum / batches as f64,
        });
    }

    let mut final_d = distances(&params, &center, train)?;
    let final_mean_distance = stats::mean(&final_d);
    final_d.sort_by(f64::total_cmp);
    let radius_proxy = stats::quantile_sorted(&final_d, RADIUS_QUANTILE);

    Ok(SvddModel {
        params,
        center,
        lambda: config.lambda,
        radius_proxy,
        train_history: history,
        initial_mean_distance,
        final_mean_distance,
    })
}

impl SvddModel {
    pub fn embedding_dim(&self) -> usize {
        self.center.len()
    }

    pub fn input_dim(&self) -> usize {
        self.params.input_dim()
    }

    /// `z = φ(x; W*)`.
    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.params.forward(x)
    }

    pub fn embed_batch(&self, xs: &Matrix) -> Result<Matrix> {
        self.params.forward_batch(xs)
    }

    /// `‖φ(x)−c‖²`; higher is more anomalous.
    pub fn distance_score(&self, x: &[f64]) -> Result<f64> {
        Ok(squared_distance(&self.embed(x)?, &self.center))
    }

    pub fn distance_scores(&self, xs: &Matrix) -> Result<Vec<f64>> {
        xs.iter_rows().map(|x| self.distance_score(x)).collect()
    }
}
