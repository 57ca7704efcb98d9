//! Age and identity evaluation: error and accuracy metrics, ROC sweeps,
//! estimation-shift statistics and Student-t intervals.

mod metrics;
mod report;
mod roc;
mod stats;

pub use metrics::{
    age_group_accuracy, demographic_slice, mae, minor_adult_accuracy, shift_stats, EstimationShift, GroupMae,
    PredictionRecord, ShiftStats, Summary, ADULT_AGE,
};
pub use report::{merge_reports, read_report_rows, EvalReport};
pub use roc::{
    build_score_set, roc, tmr_at_fmr, OperatingPoint, RocCurve, RocPoint, ScoreSet, DEFAULT_FMR, IMPOSTOR_RATIO,
};
pub use stats::{ln_gamma, regularized_incomplete_beta, student_t_cdf, student_t_quantile, t_confidence_interval, ConfidenceInterval};
