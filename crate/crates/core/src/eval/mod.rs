//! Prediction rules and evaluation metrics.

mod activation;
mod metrics;
mod predict;

pub use activation::{activation_report, ActivationReport, RankedSample};
pub use metrics::{
    class_counts, gzsl_eval, harmonic_mean, mca, seen_holdout, ClassAccuracy, GzslReport,
    McaReport, Partition,
};
pub use predict::{
    argmax, predict_batch, predict_combined, predict_la, predict_multiscale, predict_ua,
    BatchPrediction, PredictionResult, Space,
};
