//! Equation-recovery scoring, cumulative error curves and report files.

mod curve;
mod report;
mod score;

pub use curve::{cumulative_curve, curve_from_errors, log_error, CumulativeCurve, CurvePoint, EmptyScores};
pub use report::{
    emit_report, improvement, learning_series, read_cumulative_curve, read_learning_curve,
    read_report, summaries_from_tables, write_cumulative_curve, write_learning_curve,
    EvaluationReport, MetricReport, ProtocolReport, Report, ReportError, ReportInputs, Series,
    METRIC_DEFINITION, REPORT_SCHEMA, REPORT_VERSION,
};
pub use score::{
    relative_squared_error, score_dataset, score_index, score_with_skeleton, IndexScore,
    ERROR_FLOOR, FAULT_CEILING,
};
