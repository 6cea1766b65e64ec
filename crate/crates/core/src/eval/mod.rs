//! Task metrics and the multi-dimension model comparison: win scores,
//! average performance, feature quality, tuning gain, variability,
//! transferability and scalability, plus radar normalization, balancing
//! weights and the domain/size regime summary.

mod metrics;
mod records;
mod report;
mod score;

use thiserror::Error;

pub use metrics::{
    classification_metrics, inverse_frequency_weights, mae, nsd, nsd_with, pearson, radar_normalize,
    relative_improvement, scalability_slope, tuning_gain, ClassMetrics, StdKind,
};
pub use records::{
    parse_model_size, read_results_csv, write_results_csv, Domain, Metric, MetricFamily, ResultRecord,
    Strategy,
};
pub use report::{
    aggregate_performance, dimension_report, regime_pairs, regime_summary, DimensionReport, Filter,
    ModelDimensions, RegimePair, RegimeRow, SizeBand, DIMENSIONS,
};
pub use score::{combined_scores, win_scores, ModelKey, TiePrecision, WinScores};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("missing cell: task '{task}' dataset '{dataset}' has no value for model {model}")]
    MissingCell {
        task: String,
        dataset: String,
        model: String,
    },
    #[error("duplicate cell: task '{task}' dataset '{dataset}' model {model}")]
    DuplicateCell {
        task: String,
        dataset: String,
        model: String,
    },
    #[error("filter selected no records")]
    EmptySelection,
    #[error("records mix classification and regression metrics")]
    MixedMetricFamilies,
    #[error("head performance is zero for task {0}")]
    ZeroHeadPerformance(usize),
    #[error("mean is zero")]
    ZeroMean,
    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("need at least 2 points, got {0}")]
    InsufficientPoints(usize),
    #[error("sizes must include at least two distinct positive values")]
    DegenerateSizes,
    #[error("input is constant")]
    ConstantInput,
    #[error("reference value is zero")]
    ZeroReference,
    #[error("radar normalization needs at least 2 models")]
    SingleModel,
    #[error("task '{task}' has inconsistent directions")]
    InconsistentDirection { task: String },
    #[error("row {row}: {message}")]
    BadRow { row: usize, message: String },
    #[error("io: {0}")]
    Io(String),
}
