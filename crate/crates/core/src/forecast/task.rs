//! Rolling-origin forecasts of the rest of a partially observed year.

use std::ops::Range;

use super::metrics::{coverage_counts, mae_by_year};
use crate::error::{Error, Result};
use crate::gibbs::{fit, predictive_summary, quantile_sorted, DrawStore, FitConfig};
use crate::io::CountPanel;

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastTask {
    /// Panel rows used as complete training years.
    pub train_rows: Range<usize>,
    /// Row forecast from its first `m0` weeks; must equal `train_rows.end`.
    pub target_row: usize,
    pub m0: usize,
    pub level: f64,
}

impl ForecastTask {
    pub fn validate(&self, panel: &CountPanel) -> Result<()> {
        if self.train_rows.is_empty() || self.target_row != self.train_rows.end {
            return Err(Error::InvalidParameter(format!(
                "target row {} must directly follow training rows {:?}",
                self.target_row, self.train_rows
            )));
        }
        if self.target_row >= panel.n() {
            return Err(Error::OutOfBounds(format!(
                "target row {} of a panel with {} rows",
                self.target_row,
                panel.n()
            )));
        }
        if !(self.m0 >= 1 && self.m0 < panel.m()) {
            return Err(Error::InvalidParameter(format!(
                "observed weeks m0 = {} must lie in 1..{}",
                self.m0,
                panel.m()
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "interval level must be in (0, 1), got {}",
                self.level
            )));
        }
        Ok(())
    }

    pub fn horizon(&self, m: usize) -> usize {
        m - self.m0
    }

    /// Training rows plus the target row with every week after `m0` masked.
    pub fn training_panel(&self, panel: &CountPanel) -> Result<CountPanel> {
        self.validate(panel)?;
        let rows: Vec<usize> = (self.train_rows.start..=self.target_row).collect();
        let mut sub = panel.select_rows(&rows)?;
        let last = sub.n() - 1;
        for j in self.m0..sub.m() {
            sub.mask(last, j);
        }
        Ok(sub)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastReport {
    pub m0: usize,
    pub level: f64,
    /// Predictive means for weeks `m0 + 1 ..= m`.
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Predictive draws per forecast week.
    pub horizon_draws: Vec<Vec<f64>>,
    pub peak_value_draws: Vec<f64>,
    /// 1-based week positions of each draw's peak.
    pub peak_time_draws: Vec<usize>,
    pub peak_value_interval: (f64, f64),
    /// Sorted 1-based week positions.
    pub peak_time_set: Vec<usize>,
}

/// Maximum of one joint draw and its earliest arg-max (0-based).
pub fn peak_of(values: &[f64]) -> (f64, usize) {
    values
        .iter()
        .enumerate()
        .fold((f64::NEG_INFINITY, 0), |(best, at), (j, &v)| {
            if v > best {
                (v, j)
            } else {
                (best, at)
            }
        })
}

/// Smallest set of weeks whose posterior peak-time mass reaches `level`,
/// built greedily by descending mass with ties going to the earlier week.
pub fn peak_time_credible_set(peak_times: &[usize], level: f64) -> Vec<usize> {
    let mut counts: Vec<(usize, usize)> = Vec::new();
    let mut sorted = peak_times.to_vec();
    sorted.sort_unstable();
    for w in sorted {
        match counts.last_mut() {
            Some((week, c)) if *week == w => *c += 1,
            _ => counts.push((w, 1)),
        }
    }
    counts.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let total = peak_times.len() as f64;
    let mut set = Vec::new();
    let mut mass = 0usize;
    for (week, c) in counts {
        if mass as f64 >= level * total * (1.0 - 1e-12) {
            break;
        }
        set.push(week);
        mass += c;
    }
    set.sort_unstable();
    set
}

/// Builds the report for `row` of the fitted panel from stored predictive draws.
pub fn report_from_store(
    store: &DrawStore,
    row: usize,
    m0: usize,
    level: f64,
) -> Result<ForecastReport> {
    let m = store.meta.m;
    let cells: Vec<(usize, usize)> = (m0..m).map(|j| (row, j)).collect();
    let horizon_draws = store.posterior_predictive_cells(&cells)?;
    let summaries = horizon_draws
        .iter()
        .map(|d| predictive_summary(d, level))
        .collect::<Result<Vec<_>>>()?;
    let n_draws = store.n_draws();
    let (peak_value_draws, peak_time_draws): (Vec<f64>, Vec<usize>) = (0..n_draws)
        .map(|t| {
            let joint: Vec<f64> = horizon_draws.iter().map(|d| d[t]).collect();
            let (v, j) = peak_of(&joint);
            (v, m0 + j + 1)
        })
        .unzip();
    let mut sorted = peak_value_draws.clone();
    sorted.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - level);
    Ok(ForecastReport {
        m0,
        level,
        point: summaries.iter().map(|s| s.point).collect(),
        lower: summaries.iter().map(|s| s.lower).collect(),
        upper: summaries.iter().map(|s| s.upper).collect(),
        peak_value_interval: (
            quantile_sorted(&sorted, tail),
            quantile_sorted(&sorted, 1.0 - tail),
        ),
        peak_time_set: peak_time_credible_set(&peak_time_draws, level),
        horizon_draws,
        peak_value_draws,
        peak_time_draws,
    })
}

/// Fits on the training years plus the first `m0` weeks of the target year
/// and summarises the predictive distribution of the remaining weeks.
pub fn run_forecast(
    panel: &CountPanel,
    task: &ForecastTask,
    cfg: &FitConfig,
) -> Result<ForecastReport> {
    let sub = task.training_panel(panel)?;
    if let Some(x) = &cfg.design {
        if x.nrows() != panel.n() {
            return Err(Error::DimensionMismatch(format!(
                "design has {} rows for a panel of {} rows",
                x.nrows(),
                panel.n()
            )));
        }
    }
    let cfg = FitConfig {
        design: cfg
            .design
            .as_ref()
            .map(|x| x.rows(task.train_rows.start, sub.n()).into_owned()),
        ..cfg.clone()
    };
    let store = fit(&sub, &cfg)?;
    report_from_store(&store, sub.n() - 1, task.m0, task.level)
}

/// Scores of one forecast against the realised values of the forecast weeks.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskScore {
    pub mae: f64,
    pub covered: usize,
    pub scored: usize,
    pub widths: Vec<f64>,
    /// `None` when some forecast week lacks an actual value.
    pub peak_value_covered: Option<bool>,
    pub peak_time_covered: Option<bool>,
}

pub fn score_forecast(report: &ForecastReport, actual: &[Option<f64>]) -> Result<TaskScore> {
    let mae = mae_by_year(actual, &report.point)?;
    let (covered, scored) = coverage_counts(actual, &report.lower, &report.upper)?;
    let widths = report
        .lower
        .iter()
        .zip(&report.upper)
        .map(|(l, u)| u - l)
        .collect();
    let full: Option<Vec<f64>> = actual.iter().copied().collect();
    let (peak_value_covered, peak_time_covered) = match full {
        Some(a) if !a.is_empty() => {
            let (v, j) = peak_of(&a);
            let (lo, hi) = report.peak_value_interval;
            (
                Some(lo <= v && v <= hi),
                Some(report.peak_time_set.contains(&(report.m0 + j + 1))),
            )
        }
        _ => (None, None),
    };
    Ok(TaskScore {
        mae,
        covered,
        scored,
        widths,
        peak_value_covered,
        peak_time_covered,
    })
}
