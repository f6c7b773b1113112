//! Training loop, evaluation, the (method × horizon × TTE × ROI scale)
//! experiment grid and its accuracy tables.

mod grid;
mod metrics;
mod report;
mod train;

pub use grid::{cell_path, run_cell, run_grid, CellResult, Dataset, ExperimentGrid, GridCell, Method, Pipeline};
pub use metrics::{evaluate, evaluate_checkpoint, predict_examples, MetricsReport};
pub use report::{
    cells_csv, classification_table, emit_report, format_accuracy, prediction_table, CellStat, ReportFormat, Table,
    FAILED, PREDICTION_HORIZON,
};
pub use train::{stack_examples, train, EpochLog, StopReason, TrainBudget, TrainOutcome};
