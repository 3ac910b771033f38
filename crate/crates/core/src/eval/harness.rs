//! Benign-only cross-validation over interchangeable detectors.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{fit_scaler, split_benign_indices, LabeledDataset, SplitSpec, ATTACK, BENIGN};
use crate::error::{Error, Result};
use crate::hbos::DEFAULT_BINS;
use crate::pipeline::{
    quantile_threshold, validate_contamination, DocConfig, DEFAULT_CONTAMINATION,
};
use crate::stats;

use super::baselines::{Detector, DocDetector, HbosDetector, PcaConfig, PcaDetector, SvddDetector};
use super::metrics::{confusion, metrics, roc_auc, ConfusionMatrix, Metrics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// `k` benign folds; each test fold also holds every attack row.
    Kfold,
    /// One seeded benign split; every attack row goes to the test side.
    Holdout,
}

impl std::str::FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "kfold" => Ok(Protocol::Kfold),
            "holdout" => Ok(Protocol::Holdout),
            other => Err(format!(
                "unknown protocol {other:?} (expected kfold or holdout)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Doc,
    Svdd,
    Hbos,
    Pca,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 4] = [
        DetectorKind::Doc,
        DetectorKind::Svdd,
        DetectorKind::Hbos,
        DetectorKind::Pca,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Doc => "doc",
            DetectorKind::Svdd => "svdd",
            DetectorKind::Hbos => "hbos",
            DetectorKind::Pca => "pca",
        }
    }

    /// Row label used in the results table.
    pub fn display_name(self) -> &'static str {
        match self {
            DetectorKind::Doc => "DOC",
            DetectorKind::Svdd => "DeepSVDD",
            DetectorKind::Hbos => "HBOS",
            DetectorKind::Pca => "PCA",
        }
    }

    pub fn build(self, config: &EvalConfig) -> Box<dyn Detector> {
        match self {
            DetectorKind::Doc => Box::new(DocDetector::new(config.doc.clone())),
            DetectorKind::Svdd => Box::new(SvddDetector::new(config.doc.svdd.clone())),
            DetectorKind::Hbos => Box::new(HbosDetector::new(config.doc.bins)),
            DetectorKind::Pca => Box::new(PcaDetector::new(config.pca.clone())),
        }
    }
}

impl std::str::FromStr for DetectorKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        DetectorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown detector {s:?} (expected doc, svdd, hbos or pca)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub protocol: Protocol,
    pub k: usize,
    pub holdout_fraction: f64,
    /// Shared by every detector's training-quantile threshold.
    pub contamination: f64,
    pub seed: u64,
    pub doc: DocConfig,
    pub pca: PcaConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            protocol: Protocol::Kfold,
            k: 5,
            holdout_fraction: 0.7,
            contamination: DEFAULT_CONTAMINATION,
            seed: 42,
            doc: DocConfig {
                bins: DEFAULT_BINS,
                ..DocConfig::default()
            },
            pca: PcaConfig::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        validate_contamination(self.contamination)?;
        if self.protocol == Protocol::Kfold && self.k < 2 {
            return Err(Error::InvalidConfig(format!(
                "k must be at least 2, got {}",
                self.k
            )));
        }
        SplitSpec {
            benign_train_fraction: self.holdout_fraction,
            seed: self.seed,
        }
        .validate()?;
        self.doc.validate()
    }
}

/// Row indices of one train/test partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Benign rows into `k` seeded folds of near-equal size; every test fold gets all attack rows.
pub fn kfold_splits(ds: &LabeledDataset, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!(
            "k must be at least 2, got {k}"
        )));
    }
    let mut benign = ds.benign_indices();
    if benign.len() < k {
        return Err(Error::InsufficientData(format!(
            "at least {k} benign rows so every fold has a benign test row (found {})",
            benign.len()
        )));
    }
    let attacks = ds.attack_indices();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    benign.shuffle(&mut rng);
    let n = benign.len();
    Ok((0..k)
        .map(|i| {
            let (start, end) = (i * n / k, (i + 1) * n / k);
            let train = benign[..start]
                .iter()
                .chain(&benign[end..])
                .copied()
                .collect();
            let test = benign[start..end].iter().chain(&attacks).copied().collect();
            Fold { train, test }
        })
        .collect())
}

pub fn folds_for(ds: &LabeledDataset, config: &EvalConfig) -> Result<Vec<Fold>> {
    match config.protocol {
        Protocol::Kfold => kfold_splits(ds, config.k, config.seed),
        Protocol::Holdout => {
            let (train, test) = split_benign_indices(
                ds,
                &SplitSpec {
                    benign_train_fraction: config.holdout_fraction,
                    seed: config.seed,
                },
            )?;
            Ok(vec![Fold { train, test }])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test_benign: usize,
    pub n_test_attack: usize,
    pub threshold: f64,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    /// Percent, like the other metrics.
    pub auc: f64,
}

/// The five headline metrics, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSummary {
    pub accuracy: f64,
    pub f1: f64,
    pub auc: f64,
    pub dr: f64,
    pub far: f64,
}

impl MetricSummary {
    fn from_fold(f: &FoldResult) -> Self {
        Self {
            accuracy: f.metrics.accuracy,
            f1: f.metrics.f1,
            auc: f.auc,
            dr: f.metrics.dr,
            far: f.metrics.far,
        }
    }

    fn aggregate(folds: &[FoldResult], agg: fn(&[f64]) -> f64) -> Self {
        let pick = |g: fn(&MetricSummary) -> f64| -> f64 {
            let v: Vec<f64> = folds
                .iter()
                .map(|f| g(&MetricSummary::from_fold(f)))
                .collect();
            agg(&v)
        };
        Self {
            accuracy: pick(|m| m.accuracy),
            f1: pick(|m| m.f1),
            auc: pick(|m| m.auc),
            dr: pick(|m| m.dr),
            far: pick(|m| m.far),
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.accuracy, self.f1, self.auc, self.dr, self.far]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub detector: DetectorKind,
    pub protocol: Protocol,
    pub folds: Vec<FoldResult>,
    pub mean: MetricSummary,
    /// Absent for the single-split protocol.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std: Option<MetricSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub rows: usize,
    pub benign: usize,
    pub attack: usize,
    pub features: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSuite {
    pub config: EvalConfig,
    pub dataset: DatasetSummary,
    pub reports: Vec<EvalReport>,
}

impl EvalSuite {
    /// Drops wall-clock fields so reruns with the same seed serialize identically.
    pub fn without_timing(mut self) -> Self {
        for r in &mut self.reports {
            r.wall_clock_seconds = None;
        }
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn report(&self, kind: DetectorKind) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.detector == kind)
    }

    /// Fixed-width table: Accuracy, F1 Score, AUC, DR, FAR.
    pub fn to_table(&self) -> String {
        let kfold = self.config.protocol == Protocol::Kfold;
        let width = if kfold { 16 } else { 9 };
        let mut out = String::new();
        let protocol = match self.config.protocol {
            Protocol::Kfold => format!("kfold (k={})", self.config.k),
            Protocol::Holdout => {
                format!("holdout (train fraction {})", self.config.holdout_fraction)
            }
        };
        let _ = writeln!(
            out,
            "protocol: {protocol}  contamination: {}  seed: {}  rows: {} ({} benign / {} attack)",
            self.config.contamination,
            self.config.seed,
            self.dataset.rows,
            self.dataset.benign,
            self.dataset.attack
        );
        let _ = write!(out, "{:<10}", "");
        for h in ["Accuracy", "F1 Score", "AUC", "DR", "FAR"] {
            let _ = write!(out, " | {h:>width$}");
        }
        out.push('\n');
        let _ = writeln!(out, "{}", "-".repeat(10 + 5 * (width + 3)));
        for r in &self.reports {
            let _ = write!(out, "{:<10}", r.detector.display_name());
            let means = r.mean.as_array();
            match (&r.std, kfold) {
                (Some(std), true) => {
                    for (m, s) in means.iter().zip(std.as_array()) {
                        let cell = format!("{m:.2} ± {s:.2}");
                        let _ = write!(out, " | {cell:>width$}");
                    }
                }
                _ => {
                    for m in means {
                        let cell = format!("{m:.2}");
                        let _ = write!(out, " | {cell:>width$}");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

fn run_fold(
    ds: &LabeledDataset,
    fold_idx: usize,
    fold: &Fold,
    detector: &mut dyn Detector,
    contamination: f64,
) -> Result<FoldResult> {
    if let Some(&bad) = fold.train.iter().find(|&&i| ds.labels[i] != BENIGN) {
        return Err(Error::InvalidConfig(format!(
            "fold {fold_idx} training set holds attack row {bad}"
        )));
    }
    let train_raw = ds.features.select_rows(&fold.train);
    let scaler = fit_scaler(&train_raw)?;
    let train = scaler.apply(&train_raw)?;
    let test = scaler.apply(&ds.features.select_rows(&fold.test))?;
    let labels: Vec<u8> = fold.test.iter().map(|&i| ds.labels[i]).collect();

    detector.fit(&train)?;
    let threshold = quantile_threshold(&detector.score_batch(&train)?, contamination)?;
    let scores = detector.score_batch(&test)?;
    let preds: Vec<u8> = scores.iter().map(|&s| u8::from(s > threshold)).collect();
    let cm = confusion(&labels, &preds)?;
    let auc = roc_auc(&labels, &scores)? * 100.0;
    let n_test_attack = labels.iter().filter(|&&l| l == ATTACK).count();
    Ok(FoldResult {
        fold: fold_idx,
        n_train: fold.train.len(),
        n_test_benign: labels.len() - n_test_attack,
        n_test_attack,
        threshold,
        confusion: cm,
        metrics: metrics(&cm),
        auc,
    })
}

fn assemble(
    kind: DetectorKind,
    protocol: Protocol,
    folds: Vec<FoldResult>,
    seconds: f64,
) -> EvalReport {
    let std =
        (protocol == Protocol::Kfold).then(|| MetricSummary::aggregate(&folds, stats::std_dev));
    EvalReport {
        detector: kind,
        protocol,
        mean: MetricSummary::aggregate(&folds, stats::mean),
        std,
        folds,
        wall_clock_seconds: Some(seconds),
    }
}

/// Runs each detector over the same folds. Folds run in parallel; results are
/// collected in fold order so reports do not depend on scheduling.
pub fn evaluate(
    ds: &LabeledDataset,
    detectors: &[DetectorKind],
    config: &EvalConfig,
) -> Result<EvalSuite> {
    config.validate()?;
    if detectors.is_empty() {
        return Err(Error::InvalidConfig("no detectors selected".into()));
    }
    let n_attack = ds.attack_indices().len();
    let n_benign = ds.len() - n_attack;
    if n_attack == 0 || n_benign == 0 {
        return Err(Error::InsufficientData(
            "both benign and attack rows for evaluation".into(),
        ));
    }
    let folds = folds_for(ds, config)?;
    let reports = detectors
        .iter()
        .map(|&kind| kfold_evaluate_with(ds, &folds, config, kind, || kind.build(config)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalSuite {
        config: config.clone(),
        dataset: DatasetSummary {
            rows: ds.len(),
            benign: n_benign,
            attack: n_attack,
            features: ds.columns.len(),
        },
        reports,
    })
}

/// One detector over precomputed folds; `factory` builds a fresh detector per fold.
pub fn kfold_evaluate_with<F>(
    ds: &LabeledDataset,
    folds: &[Fold],
    config: &EvalConfig,
    kind: DetectorKind,
    factory: F,
) -> Result<EvalReport>
where
    F: Fn() -> Box<dyn Detector> + Sync,
{
    let started = Instant::now();
    let results = folds
        .par_iter()
        .enumerate()
        .map(|(i, fold)| {
            let mut det = factory();
            run_fold(ds, i, fold, det.as_mut(), config.contamination)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(
        kind,
        config.protocol,
        results,
        started.elapsed().as_secs_f64(),
    ))
}

/// k-fold evaluation of a single detector kind.
pub fn kfold_evaluate(
    ds: &LabeledDataset,
    kind: DetectorKind,
    config: &EvalConfig,
) -> Result<EvalReport> {
    let mut single = evaluate(ds, &[kind], config)?;
    Ok(single.reports.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    fn toy(n_benign: usize, n_attack: usize) -> LabeledDataset {
        let n = n_benign + n_attack;
        let features = Matrix::from_vec(
            n,
            2,
            (0..n)
                .flat_map(|i| {
                    let a = i >= n_benign;
                    let base = if a { 5.0 } else { 0.0 };
                    [base + (i % 7) as f64 * 0.1, base + (i % 3) as f64 * 0.2]
                })
                .collect(),
        )
        .unwrap();
        let labels = (0..n).map(|i| u8::from(i >= n_benign)).collect();
        LabeledDataset::new(vec!["a".into(), "b".into()], features, labels, None).unwrap()
    }

    #[test]
    fn kfold_partitions_benign() {
        let ds = toy(23, 4);
        let folds = kfold_splits(&ds, 5, 3).unwrap();
        let mut seen: Vec<usize> = folds
            .iter()
            .flat_map(|f| f.test.iter().copied().filter(|&i| ds.labels[i] == BENIGN))
            .collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..23).collect::<Vec<_>>());
        for f in &folds {
            assert!(f.train.iter().all(|&i| ds.labels[i] == BENIGN));
            assert_eq!(
                f.test.iter().filter(|&&i| ds.labels[i] == ATTACK).count(),
                4
            );
            assert_eq!(f.train.len() + f.test.len() - 4, 23);
        }
    }

    #[test]
    fn kfold_needs_enough_benign_rows() {
        assert!(kfold_splits(&toy(3, 2), 5, 0).is_err());
        assert!(kfold_splits(&toy(10, 2), 1, 0).is_err());
    }

    #[test]
    fn single_class_rejected() {
        let ds = toy(10, 0);
        let err = evaluate(&ds, &[DetectorKind::Hbos], &EvalConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
    }

    #[test]
    fn holdout_has_no_std() {
        let ds = toy(40, 5);
        let cfg = EvalConfig {
            protocol: Protocol::Holdout,
            ..EvalConfig::default()
        };
        let suite = evaluate(&ds, &[DetectorKind::Hbos, DetectorKind::Pca], &cfg).unwrap();
        assert_eq!(suite.reports.len(), 2);
        assert!(suite
            .reports
            .iter()
            .all(|r| r.std.is_none() && r.folds.len() == 1));
        assert!(!suite.to_table().contains('±'));
    }

    #[test]
    fn parses_names() {
        assert_eq!("pca".parse::<DetectorKind>().unwrap(), DetectorKind::Pca);
        assert!("iforest".parse::<DetectorKind>().is_err());
        assert_eq!("holdout".parse::<Protocol>().unwrap(), Protocol::Holdout);
    }
}
