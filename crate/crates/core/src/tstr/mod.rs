//! Generator evaluation by training a classifier on synthetic heatmaps only
//! and scoring it on held-out real ones.

pub mod classifier;
pub mod metrics;
pub mod trials;

pub use classifier::{build_classifier, evaluate, predict_labels, train_classifier, ClassifierConfig};
pub use metrics::{boxplot_stats, class_metrics, macro_average, ClassMetrics, ConfusionMatrix, FiveNumber};
pub use trials::{
    run_trial, run_tstr_trials, top_k, EvalReport, FailedTrial, GeneratorSource, MetricSummary, TopRow,
    TrialOutcome, TrialResult, TstrConfig, DEFAULT_TOP_K,
};
