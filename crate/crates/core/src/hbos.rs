//! Histogram-based outlier score over independent univariate histograms.
//!
//! Each dimension gets `k` equal-width bins spanning its observed range.
//! Bin `i` covers `[lo + i·w, lo + (i+1)·w)`; the last bin is closed on the
//! right. Heights are counts divided by the largest count, so the modal bin
//! has height 1 and contributes nothing to the score.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const DEFAULT_BINS: usize = 10;

/// Heights below this are floored inside the log so empty bins score finitely.
pub const HEIGHT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub heights: Vec<f64>,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.heights.len()
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins() as f64
    }

    pub fn is_degenerate(&self) -> bool {
        self.hi <= self.lo
    }

    /// Bin holding `v`. Values outside `[lo, hi]` clamp to the edge bins.
    pub fn bin_index(&self, v: f64) -> usize {
        let k = self.bins();
        if self.is_degenerate() || v <= self.lo || v.is_nan() {
            return 0;
        }
        if v >= self.hi {
            return k - 1;
        }
        let w = self.width();
        let mut idx = (((v - self.lo) / w).floor() as usize).min(k - 1);
        // the edge expressions below are authoritative; the division only seeds the search
        while idx + 1 < k && v >= self.lo + (idx + 1) as f64 * w {
            idx += 1;
        }
        while idx > 0 && v < self.lo + idx as f64 * w {
            idx -= 1;
        }
        idx
    }

    pub fn height(&self, v: f64) -> f64 {
        self.heights[self.bin_index(v)]
    }

    /// `log(1 / max(hist(v), floor))`.
    pub fn score(&self, v: f64) -> f64 {
        -self.height(v).max(HEIGHT_FLOOR).ln()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSet {
    pub bins: usize,
    pub dims: Vec<Histogram>,
}

impl HistogramSet {
    pub fn fit(z: &Matrix, k: usize) -> Result<Self> {
        fit_histograms(z, k)
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    /// `Σ_j log(1 / hist_j(z_j))`; higher is more anomalous.
    pub fn score(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dims.len() {
            return Err(Error::DimensionMismatch {
                context: "histogram input",
                expected: self.dims.len(),
                actual: z.len(),
            });
        }
        Ok(self.dims.iter().zip(z).map(|(h, &v)| h.score(v)).sum())
    }

    pub fn score_batch(&self, z: &Matrix) -> Result<Vec<f64>> {
        z.iter_rows().map(|row| self.score(row)).collect()
    }
}

/// Fits one equal-width histogram per column of `z`.
pub fn fit_histograms(z: &Matrix, k: usize) -> Result<HistogramSet> {
    if z.is_empty() || z.cols() == 0 {
        return Err(Error::EmptyInput("histogram input matrix"));
    }
    if k == 0 {
        return Err(Error::InvalidConfig(
            "histogram bin count must be at least 1".into(),
        ));
    }
    if !z.is_finite() {
        return Err(Error::NonFinite("histogram input".into()));
    }
    let dims = (0..z.cols())
        .map(|j| {
            let (lo, hi) = z
                .column(j)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
            let mut h = Histogram {
                lo,
                hi,
                heights: vec![0.0; k],
            };
            let mut counts = vec![0usize; k];
            for v in z.column(j) {
                counts[h.bin_index(v)] += 1;
            }
            let max = *counts.iter().max().expect("k >= 1") as f64;
            for (height, &c) in h.heights.iter_mut().zip(&counts) {
                *height = c as f64 / max;
            }
            h
        })
        .collect();
    Ok(HistogramSet { bins: k, dims })
}
