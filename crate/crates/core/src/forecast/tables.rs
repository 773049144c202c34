//! Delimited metric tables and their aggregation.
//!
//! * `tasks.csv`: one row per forecast task.
//! * `cells.csv`: one row per forecast week of every task.
//! * `mae_by_week.csv`: long-format MAE curves per method.
//! * `summary.csv`: pooled metrics per variant, era and forecast origin.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::baselines::{baseline_mean_fda, baseline_rw_fda};
use super::metrics::{mae_by_week, median};
use super::task::{score_forecast, ForecastReport, ForecastTask};
use crate::error::{Error, Result};
use crate::gibbs::Variant;
use crate::io::CountPanel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: String,
    pub variant: Variant,
    pub era: String,
    pub m0: usize,
    pub target_year: i64,
    pub mae: f64,
    pub ecp: f64,
    pub miw: f64,
    pub covered: usize,
    pub scored: usize,
    pub peak_value_lower: f64,
    pub peak_value_upper: f64,
    /// Week positions joined by `;`.
    pub peak_time_set: String,
    pub peak_value_covered: Option<bool>,
    pub peak_time_covered: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub task_id: String,
    pub variant: Variant,
    pub era: String,
    pub m0: usize,
    pub week: usize,
    pub actual: Option<f64>,
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub mean_fda: Option<f64>,
    pub rw_fda: Option<f64>,
    /// Known conditional mean, for simulated panels.
    pub truth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaeByWeekRecord {
    pub variant: Variant,
    pub era: String,
    pub m0: usize,
    pub week: usize,
    pub method: String,
    pub mae: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub variant: Variant,
    pub era: String,
    pub m0: usize,
    pub tasks: usize,
    pub cells: usize,
    pub ecp: f64,
    pub miw: f64,
    pub mae: f64,
    pub mae_mean_fda: f64,
    pub mae_rw_fda: f64,
    pub peak_value_coverage: f64,
    pub peak_time_coverage: f64,
}

/// Labels attached to every row of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskLabels {
    pub task_id: String,
    pub variant: Variant,
    pub era: String,
}

/// Scores a report and lays it out as table rows. `actual` and `truth` hold
/// one entry per forecast week.
pub fn task_records(
    labels: &TaskLabels,
    panel: &CountPanel,
    task: &ForecastTask,
    report: &ForecastReport,
    actual: &[Option<f64>],
    truth: Option<&[f64]>,
) -> Result<(TaskRecord, Vec<CellRecord>)> {
    let h = task.horizon(panel.m());
    if actual.len() != h || truth.is_some_and(|t| t.len() != h) || report.point.len() != h {
        return Err(Error::DimensionMismatch(format!(
            "forecast horizon is {h} weeks"
        )));
    }
    let score = score_forecast(report, actual)?;
    let mean_fda = baseline_mean_fda(panel, task)?;
    let rw_fda = baseline_rw_fda(panel, task)?;
    let task_rec = TaskRecord {
        task_id: labels.task_id.clone(),
        variant: labels.variant,
        era: labels.era.clone(),
        m0: task.m0,
        target_year: panel.year_labels()[task.target_row],
        mae: score.mae,
        ecp: if score.scored == 0 {
            f64::NAN
        } else {
            score.covered as f64 / score.scored as f64
        },
        miw: median(&score.widths),
        covered: score.covered,
        scored: score.scored,
        peak_value_lower: report.peak_value_interval.0,
        peak_value_upper: report.peak_value_interval.1,
        peak_time_set: report
            .peak_time_set
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join(";"),
        peak_value_covered: score.peak_value_covered,
        peak_time_covered: score.peak_time_covered,
    };
    let cells = (0..h)
        .map(|k| CellRecord {
            task_id: labels.task_id.clone(),
            variant: labels.variant,
            era: labels.era.clone(),
            m0: task.m0,
            week: task.m0 + k + 1,
            actual: actual[k],
            point: report.point[k],
            lower: report.lower[k],
            upper: report.upper[k],
            mean_fda: mean_fda[k],
            rw_fda: rw_fda[k],
            truth: truth.map(|t| t[k]),
        })
        .collect();
    Ok((task_rec, cells))
}

pub fn write_table<T: Serialize>(
    path: impl AsRef<Path>,
    rows: &[T],
    header: &[&str],
) -> Result<()> {
    let path = path.as_ref();
    let io = |e: csv::Error| Error::io(path, e.into());
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(io)?;
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.serialize(row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_table<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    rdr.deserialize()
        .map(|r| {
            r.map_err(|e: csv::Error| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                Error::parse(path, line, e.to_string())
            })
        })
        .collect()
}

pub const TASK_HEADER: [&str; 15] = [
    "task_id",
    "variant",
    "era",
    "m0",
    "target_year",
    "mae",
    "ecp",
    "miw",
    "covered",
    "scored",
    "peak_value_lower",
    "peak_value_upper",
    "peak_time_set",
    "peak_value_covered",
    "peak_time_covered",
];
pub const CELL_HEADER: [&str; 12] = [
    "task_id", "variant", "era", "m0", "week", "actual", "point", "lower", "upper", "mean_fda",
    "rw_fda", "truth",
];
pub const MAE_BY_WEEK_HEADER: [&str; 7] = ["variant", "era", "m0", "week", "method", "mae", "n"];
pub const SUMMARY_HEADER: [&str; 12] = [
    "variant",
    "era",
    "m0",
    "tasks",
    "cells",
    "ecp",
    "miw",
    "mae",
    "mae_mean_fda",
    "mae_rw_fda",
    "peak_value_coverage",
    "peak_time_coverage",
];

type GroupKey = (Variant, String, usize);

fn group_key_str(v: Variant, era: &str, m0: usize) -> GroupKey {
    (v, era.to_string(), m0)
}

/// MAE at each forecast week across tasks, for the model and both baselines.
pub fn mae_by_week_table(cells: &[CellRecord]) -> Result<Vec<MaeByWeekRecord>> {
    let mut groups: BTreeMap<(GroupKey, usize), Vec<&CellRecord>> = BTreeMap::new();
    for c in cells {
        groups
            .entry((group_key_str(c.variant, &c.era, c.m0), c.week))
            .or_default()
            .push(c);
    }
    let mut out = Vec::new();
    for (((variant, era, m0), week), rows) in groups {
        let actual: Vec<Option<f64>> = rows.iter().map(|c| c.actual).collect();
        let methods: [(&str, Vec<Option<f64>>); 3] = [
            (
                variant.as_str(),
                rows.iter().map(|c| Some(c.point)).collect(),
            ),
            ("mean_fda", rows.iter().map(|c| c.mean_fda).collect()),
            ("rw_fda", rows.iter().map(|c| c.rw_fda).collect()),
        ];
        for (method, pred) in methods {
            // drop weeks without a prediction as well as those without an actual
            let (a, p): (Vec<Option<f64>>, Vec<f64>) = actual
                .iter()
                .zip(&pred)
                .filter_map(|(a, p)| p.map(|p| (*a, p)))
                .unzip();
            out.push(MaeByWeekRecord {
                variant,
                era: era.clone(),
                m0,
                week,
                method: method.to_string(),
                mae: mae_by_week(&a, &p)?,
                n: a.iter().filter(|v| v.is_some()).count(),
            });
        }
    }
    Ok(out)
}

fn mean_finite(values: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = values
        .filter(|v| v.is_finite())
        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if c == 0 {
        f64::NAN
    } else {
        s / c as f64
    }
}

fn rate(flags: impl Iterator<Item = Option<bool>>) -> f64 {
    mean_finite(flags.map(|f| f.map_or(f64::NAN, |b| b as u8 as f64)))
}

/// Pooled metrics per (variant, era, m0). ECP is pooled over cells, MIW is
/// the median width over cells, MAE averages the per-task MAE.
pub fn summarize(tasks: &[TaskRecord], cells: &[CellRecord]) -> Vec<SummaryRecord> {
    let mut task_groups: BTreeMap<GroupKey, Vec<&TaskRecord>> = BTreeMap::new();
    for t in tasks {
        task_groups
            .entry(group_key_str(t.variant, &t.era, t.m0))
            .or_default()
            .push(t);
    }
    let mut cell_groups: BTreeMap<GroupKey, Vec<&CellRecord>> = BTreeMap::new();
    for c in cells {
        cell_groups
            .entry(group_key_str(c.variant, &c.era, c.m0))
            .or_default()
            .push(c);
    }
    let mut keys: Vec<GroupKey> = task_groups
        .keys()
        .chain(cell_groups.keys())
        .cloned()
        .collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|key| {
            let ts = task_groups.get(&key).cloned().unwrap_or_default();
            let cs = cell_groups.get(&key).cloned().unwrap_or_default();
            let scored: Vec<&&CellRecord> = cs.iter().filter(|c| c.actual.is_some()).collect();
            let covered = scored
                .iter()
                .filter(|c| c.lower <= c.actual.unwrap() && c.actual.unwrap() <= c.upper)
                .count();
            let widths: Vec<f64> = cs.iter().map(|c| c.upper - c.lower).collect();
            let mut per_task: BTreeMap<&str, [Vec<f64>; 2]> = BTreeMap::new();
            for c in &cs {
                if let Some(a) = c.actual {
                    let e = per_task.entry(c.task_id.as_str()).or_default();
                    e[0].push(c.mean_fda.map_or(f64::NAN, |p| (a - p).abs()));
                    e[1].push(c.rw_fda.map_or(f64::NAN, |p| (a - p).abs()));
                }
            }
            let baseline_mae = |method: usize| {
                mean_finite(
                    per_task
                        .values()
                        .map(|v| mean_finite(v[method].iter().copied())),
                )
            };
            let (variant, era, m0) = key;
            SummaryRecord {
                variant,
                era,
                m0,
                tasks: ts.len(),
                cells: scored.len(),
                ecp: if scored.is_empty() {
                    f64::NAN
                } else {
                    covered as f64 / scored.len() as f64
                },
                miw: median(&widths),
                mae: mean_finite(ts.iter().map(|t| t.mae)),
                mae_mean_fda: baseline_mae(0),
                mae_rw_fda: baseline_mae(1),
                peak_value_coverage: rate(ts.iter().map(|t| t.peak_value_covered)),
                peak_time_coverage: rate(ts.iter().map(|t| t.peak_time_covered)),
            }
        })
        .collect()
}

/// Writes `tasks.csv`, `cells.csv` and `mae_by_week.csv` into `dir`.
pub fn write_report_tables(
    dir: impl AsRef<Path>,
    tasks: &[TaskRecord],
    cells: &[CellRecord],
) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_table(dir.join("tasks.csv"), tasks, &TASK_HEADER)?;
    write_table(dir.join("cells.csv"), cells, &CELL_HEADER)?;
    write_table(
        dir.join("mae_by_week.csv"),
        &mae_by_week_table(cells)?,
        &MAE_BY_WEEK_HEADER,
    )
}
