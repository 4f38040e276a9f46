//! Training protocols, fold assignment and loss bookkeeping.

mod folds;
mod output;
mod protocol;
pub mod reference;
mod summary;

pub use folds::{make_folds, FoldAssignment, FoldError};
pub use output::{
    read_loss_csv, read_summary, write_baseline, write_kfcv, write_loss_csv, write_summary,
    ConfigEcho, ExperimentSummary, OutputError, CSV_HEADER, SUMMARY_SCHEMA, SUMMARY_VERSION,
};
pub use protocol::{
    baseline_split, fold_model_seed, run_baseline, run_kfcv, BaselineOutcome, ExperimentConfig,
    FoldRun, KfcvOutcome, Protocol, ProtocolError,
};
pub use summary::{
    average_losses, relative_improvement, LossRecord, LossSummary, NonPositiveBaseline,
    SummaryError, UnitKind,
};
