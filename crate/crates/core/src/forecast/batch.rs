//! Runs a sequence of rolling-origin tasks on one panel and collects the
//! table rows.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::tables::{
    task_records, write_report_tables, write_table, CellRecord, TaskLabels, TaskRecord,
};
use super::task::{run_forecast, ForecastTask};
use crate::error::{Error, Result};
use crate::gibbs::FitConfig;
use crate::io::CountPanel;

/// Values to score against, aligned with the panel. Without one the
/// panel's own observed counts are used.
#[derive(Debug, Clone, Default)]
pub struct Reference {
    pub counts: Option<DMatrix<u64>>,
    pub curves: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakDrawRecord {
    pub task_id: String,
    pub draw: usize,
    pub peak_value: f64,
    pub peak_week: usize,
}

#[derive(Debug, Clone, Default)]
pub struct BatchOutput {
    pub tasks: Vec<TaskRecord>,
    pub cells: Vec<CellRecord>,
    pub peaks: Vec<PeakDrawRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSpec {
    pub target_years: Vec<i64>,
    pub m0: usize,
    pub level: f64,
    /// Task ids are `{prefix}{year}`.
    pub prefix: String,
    pub era: String,
}

/// Forecasts each target year from all earlier rows plus its first `m0`
/// weeks. Each task's chain seed is offset by its target row.
pub fn forecast_years(
    panel: &CountPanel,
    reference: &Reference,
    spec: &BatchSpec,
    cfg: &FitConfig,
) -> Result<BatchOutput> {
    let mut out = BatchOutput::default();
    let m = panel.m();
    let (m0, level) = (spec.m0, spec.level);
    if let Some(c) = &reference.counts {
        if c.shape() != (panel.n(), m) {
            return Err(Error::DimensionMismatch(format!(
                "reference counts {:?} for a {}x{m} panel",
                c.shape(),
                panel.n()
            )));
        }
    }
    if let Some(c) = &reference.curves {
        if c.shape() != (panel.n(), m) {
            return Err(Error::DimensionMismatch(format!(
                "reference curves {:?} for a {}x{m} panel",
                c.shape(),
                panel.n()
            )));
        }
    }
    for &year in &spec.target_years {
        let row = panel
            .row_of_year(year)
            .ok_or_else(|| Error::InvalidParameter(format!("year {year} is not in the panel")))?;
        if row == 0 {
            return Err(Error::InvalidParameter(format!(
                "year {year} has no earlier years to train on"
            )));
        }
        let task = ForecastTask {
            train_rows: 0..row,
            target_row: row,
            m0,
            level,
        };
        let cfg = FitConfig {
            seed: cfg.seed.wrapping_add(row as u64),
            ..cfg.clone()
        };
        let report = run_forecast(panel, &task, &cfg)?;
        let actual: Vec<Option<f64>> = (m0..m)
            .map(|j| match &reference.counts {
                Some(c) => Some(c[(row, j)] as f64),
                None => panel.get(row, j).map(|z| z as f64),
            })
            .collect();
        let truth: Option<Vec<f64>> = reference
            .curves
            .as_ref()
            .map(|c| (m0..m).map(|j| c[(row, j)]).collect());
        let labels = TaskLabels {
            task_id: format!("{}{year}", spec.prefix),
            variant: cfg.variant,
            era: spec.era.clone(),
        };
        let (t, cells) = task_records(&labels, panel, &task, &report, &actual, truth.as_deref())?;
        out.peaks.extend(
            report
                .peak_value_draws
                .iter()
                .zip(&report.peak_time_draws)
                .enumerate()
                .map(|(d, (&v, &w))| PeakDrawRecord {
                    task_id: labels.task_id.clone(),
                    draw: d,
                    peak_value: v,
                    peak_week: w,
                }),
        );
        out.tasks.push(t);
        out.cells.extend(cells);
    }
    Ok(out)
}

pub const PEAK_HEADER: [&str; 4] = ["task_id", "draw", "peak_value", "peak_week"];

/// Writes the task, cell, MAE-curve and peak-draw tables into `dir`.
pub fn write_batch(dir: impl AsRef<Path>, out: &BatchOutput) -> Result<()> {
    let dir = dir.as_ref();
    write_report_tables(dir, &out.tasks, &out.cells)?;
    write_table(dir.join("peak_draws.csv"), &out.peaks, &PEAK_HEADER)
}
