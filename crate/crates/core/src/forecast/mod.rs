//! Forecasting the remainder of a partially observed year and scoring the
//! forecasts.

pub mod baselines;
pub mod batch;
pub mod metrics;
pub mod tables;
pub mod task;

pub use baselines::{baseline_mean_fda, baseline_rw_fda};
pub use batch::{forecast_years, write_batch, BatchOutput, BatchSpec, PeakDrawRecord, Reference};
pub use metrics::{ecp, mae_by_week, mae_by_year, median, miw};
pub use tables::{
    summarize, task_records, write_report_tables, CellRecord, SummaryRecord, TaskLabels, TaskRecord,
};
pub use task::{
    peak_of, peak_time_credible_set, report_from_store, run_forecast, score_forecast,
    ForecastReport, ForecastTask, TaskScore,
};
