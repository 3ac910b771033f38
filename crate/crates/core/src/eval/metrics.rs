use serde::{Deserialize, Serialize};

use crate::data::ATTACK;
use crate::error::{Error, Result};

/// Attack (label 1) is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(labels: &[u8], predictions: &[u8]) -> Result<ConfusionMatrix> {
    if labels.len() != predictions.len() {
        return Err(Error::DimensionMismatch {
            context: "confusion predictions",
            expected: labels.len(),
            actual: predictions.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&y, &p) in labels.iter().zip(predictions) {
        if y > 1 || p > 1 {
            return Err(Error::InvalidConfig(
                "labels and predictions must be 0 or 1".into(),
            ));
        }
        match (y == ATTACK, p == ATTACK) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fn_ += 1,
            (false, true) => cm.fp += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// Percentages. A metric whose denominator is zero is reported as 0 and named in `undefined`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub dr: f64,
    pub far: f64,
    pub precision: f64,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub undefined: Vec<String>,
}

pub fn metrics(cm: &ConfusionMatrix) -> Metrics {
    let mut undefined = Vec::new();
    let mut ratio = |name: &str, num: u64, den: u64| -> f64 {
        if den == 0 {
            undefined.push(name.to_string());
            0.0
        } else {
            num as f64 / den as f64 * 100.0
        }
    };
    let accuracy = ratio("accuracy", cm.tp + cm.tn, cm.total());
    let dr = ratio("dr", cm.tp, cm.tp + cm.fn_);
    let far = ratio("far", cm.fp, cm.fp + cm.tn);
    let precision = ratio("precision", cm.tp, cm.tp + cm.fp);
    let f1 = if dr + precision > 0.0 {
        2.0 * dr * precision / (dr + precision)
    } else {
        undefined.push("f1".into());
        0.0
    };
    Metrics {
        accuracy,
        dr,
        far,
        precision,
        f1,
        undefined,
    }
}

/// Mann–Whitney AUC with midranks for tied scores.
pub fn roc_auc(labels: &[u8], scores: &[f64]) -> Result<f64> {
    if labels.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            context: "roc_auc scores",
            expected: labels.len(),
            actual: scores.len(),
        });
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::NonFinite(format!("score {s}")));
    }
    let n_pos = labels.iter().filter(|&&l| l == ATTACK).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InsufficientData(
            "both classes to compute AUC".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j share their mean
        let midrank = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k] == ATTACK).count();
        pos_rank_sum += midrank * pos_in_group as f64;
        i = j;
    }
    let n_pos_f = n_pos as f64;
    let u = pos_rank_sum - n_pos_f * (n_pos_f + 1.0) / 2.0;
    Ok(u / (n_pos_f * n_neg as f64))
}
