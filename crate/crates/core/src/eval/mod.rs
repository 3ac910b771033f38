//! Detection metrics, baseline detectors and the evaluation harness.

pub mod baselines;
pub mod harness;
pub mod metrics;

pub use baselines::{
    Detector, DocDetector, HbosDetector, PcaConfig, PcaDetector, PcaModel, SvddDetector,
};
pub use harness::{
    evaluate, folds_for, kfold_evaluate, kfold_evaluate_with, kfold_splits, DetectorKind,
    EvalConfig, EvalReport, EvalSuite, Fold, FoldResult, MetricSummary, Protocol,
};
pub use metrics::{confusion, metrics, roc_auc, ConfusionMatrix, Metrics};
