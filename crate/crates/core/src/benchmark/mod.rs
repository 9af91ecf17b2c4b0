//! Benchmark harness: regression metrics, RPE distribution statistics,
//! grouped evaluation of any [`Predictor`] and submission bundles.

mod boxplot;
mod evaluate;
mod metrics;
mod report;

pub use boxplot::{boxplot_stats, quantile, BoxStats, QUARTILE_METHOD};
pub use evaluate::{
    evaluate, evaluate_with, Cell, EvalError, EvalOptions, GroupKind, GroupReport, GroupSelection,
    InferenceTiming, MetricsReport, PredictError, PredictionFile, PredictionRecord, Predictor, PredictorInfo,
    REPORT_VERSION,
};
pub use metrics::{r2, rmse, rpe, smape, MetricError, MetricTriple, R2};
pub use report::{load_bundle, render_submission, BundleError, BUNDLE_FILES};
