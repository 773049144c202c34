//! The count panel and its `year,week,count` / `year,population` tables.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use crate::error::{Error, Result};

/// Last week kept as its own column; later weeks are summed into it.
pub const FOLD_WEEK: u32 = 52;
pub const MAX_WEEK: u32 = 53;

/// n years by m weeks of counts with a missingness mask and positive offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct CountPanel {
    n: usize,
    m: usize,
    counts: Vec<u64>,
    observed: Vec<bool>,
    offsets: Vec<f64>,
    year_labels: Vec<i64>,
    week_labels: Vec<u32>,
}

impl CountPanel {
    /// Panel with unit offsets; `cells` is row-major with `None` for missing.
    pub fn new(
        n: usize,
        m: usize,
        cells: &[Option<u64>],
        year_labels: Vec<i64>,
        week_labels: Vec<u32>,
    ) -> Result<Self> {
        if cells.len() != n * m {
            return Err(Error::DimensionMismatch(format!(
                "{n}x{m} panel given {} cells",
                cells.len()
            )));
        }
        if year_labels.len() != n || week_labels.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{n}x{m} panel given {} year and {} week labels",
                year_labels.len(),
                week_labels.len()
            )));
        }
        Ok(Self {
            n,
            m,
            counts: cells.iter().map(|c| c.unwrap_or(0)).collect(),
            observed: cells.iter().map(Option::is_some).collect(),
            offsets: vec![1.0; n * m],
            year_labels,
            week_labels,
        })
    }

    /// Panel with default labels (years 1..=n, weeks 1..=m).
    pub fn from_cells(n: usize, m: usize, cells: &[Option<u64>]) -> Result<Self> {
        Self::new(
            n,
            m,
            cells,
            (1..=n as i64).collect(),
            (1..=m as u32).collect(),
        )
    }

    pub fn with_offsets(mut self, offsets: Vec<f64>) -> Result<Self> {
        if offsets.len() != self.n * self.m {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} panel given {} offsets",
                self.n,
                self.m,
                offsets.len()
            )));
        }
        if let Some((c, v)) = offsets
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
        {
            return Err(Error::InvalidInput(format!(
                "offset at year {} week {} must be positive and finite, got {v}",
                self.year_labels[c / self.m],
                self.week_labels[c % self.m]
            )));
        }
        self.offsets = offsets;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.m + j
    }

    pub fn get(&self, i: usize, j: usize) -> Option<u64> {
        let c = self.index(i, j);
        self.observed[c].then_some(self.counts[c])
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.observed[self.index(i, j)]
    }

    pub fn offset(&self, i: usize, j: usize) -> f64 {
        self.offsets[self.index(i, j)]
    }

    /// Row-major counts; missing cells hold 0.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn year_labels(&self) -> &[i64] {
        &self.year_labels
    }

    pub fn week_labels(&self) -> &[u32] {
        &self.week_labels
    }

    pub fn n_missing(&self) -> usize {
        self.observed.iter().filter(|o| !**o).count()
    }

    pub fn row_of_year(&self, year: i64) -> Option<usize> {
        self.year_labels.iter().position(|&y| y == year)
    }

    /// Marks a cell missing and forgets its count.
    pub fn mask(&mut self, i: usize, j: usize) {
        let c = self.index(i, j);
        self.observed[c] = false;
        self.counts[c] = 0;
    }

    /// Sub-panel made of the given rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&r) = rows.iter().find(|&&r| r >= self.n) {
            return Err(Error::OutOfBounds(format!(
                "row {r} of a panel with {} rows",
                self.n
            )));
        }
        let m = self.m;
        let cells: Vec<usize> = rows
            .iter()
            .flat_map(|&r| (0..m).map(move |j| r * m + j))
            .collect();
        Ok(Self {
            n: rows.len(),
            m: self.m,
            counts: cells.iter().map(|&c| self.counts[c]).collect(),
            observed: cells.iter().map(|&c| self.observed[c]).collect(),
            offsets: cells.iter().map(|&c| self.offsets[c]).collect(),
            year_labels: rows.iter().map(|&r| self.year_labels[r]).collect(),
            week_labels: self.week_labels.clone(),
        })
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file))
}

fn check_header(
    rdr: &mut csv::Reader<std::fs::File>,
    path: &Path,
    expected: &[&str],
) -> Result<()> {
    let header = rdr
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?;
    let got: Vec<&str> = header.iter().collect();
    if got != expected {
        return Err(Error::parse(
            path,
            1,
            format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                got.join(",")
            ),
        ));
    }
    Ok(())
}

fn record_line(rec: &csv::StringRecord) -> usize {
    rec.position().map(|p| p.line() as usize).unwrap_or(0)
}

/// Reads a long `year,week,count` table. Blank counts are missing; week 53
/// is summed into week 52 (the folded cell is missing if either part is).
pub fn read_counts(path: impl AsRef<Path>) -> Result<CountPanel> {
    let path = path.as_ref();
    let mut rdr = open_reader(path)?;
    check_header(&mut rdr, path, &["year", "week", "count"])?;

    let mut seen: HashMap<(i64, u32), usize> = HashMap::new();
    let mut raw: BTreeMap<(i64, u32), Option<u64>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::parse(path, line, e.to_string())
        })?;
        let line = record_line(&rec);
        if rec.len() != 3 {
            return Err(Error::parse(
                path,
                line,
                format!("expected 3 fields, found {}", rec.len()),
            ));
        }
        let year: i64 = rec[0].parse().map_err(|_| {
            Error::parse(path, line, format!("year `{}` is not an integer", &rec[0]))
        })?;
        let week: u32 = rec[1].parse().map_err(|_| {
            Error::parse(path, line, format!("week `{}` is not an integer", &rec[1]))
        })?;
        if !(1..=MAX_WEEK).contains(&week) {
            return Err(Error::parse(
                path,
                line,
                format!("week {week} outside 1..={MAX_WEEK}"),
            ));
        }
        let count = if rec[2].is_empty() {
            None
        } else {
            Some(rec[2].parse::<u64>().map_err(|_| {
                Error::parse(
                    path,
                    line,
                    format!("count `{}` is not a nonnegative integer", &rec[2]),
                )
            })?)
        };
        if let Some(first) = seen.insert((year, week), line) {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate entry for year {year} week {week} (lines {first} and {line})"),
            ));
        }
        raw.insert((year, week), count);
    }
    if raw.is_empty() {
        return Err(Error::parse(path, 1, "no data rows"));
    }

    let mut folded: BTreeMap<(i64, u32), Option<u64>> = BTreeMap::new();
    for (&(year, week), &count) in &raw {
        if week <= FOLD_WEEK {
            folded.insert((year, week), count);
        }
    }
    for (&(year, week), &extra) in &raw {
        if week > FOLD_WEEK {
            let cell = folded.entry((year, FOLD_WEEK)).or_insert(None);
            *cell = match (*cell, extra) {
                (Some(a), Some(b)) => Some(a + b),
                _ => None,
            };
        }
    }

    let years: Vec<i64> = folded
        .keys()
        .map(|k| k.0)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let m = folded.keys().map(|k| k.1).max().unwrap_or(0) as usize;
    let n = years.len();
    let mut cells = vec![None; n * m];
    for (i, &y) in years.iter().enumerate() {
        for j in 0..m {
            cells[i * m + j] = folded.get(&(y, j as u32 + 1)).copied().flatten();
        }
    }
    CountPanel::new(n, m, &cells, years, (1..=m as u32).collect())
}

pub fn write_counts(path: impl AsRef<Path>, panel: &CountPanel) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let io = |e: csv::Error| Error::io(path, e.into());
    w.write_record(["year", "week", "count"]).map_err(io)?;
    for i in 0..panel.n() {
        for j in 0..panel.m() {
            let count = panel.get(i, j).map(|c| c.to_string()).unwrap_or_default();
            w.write_record([
                panel.year_labels[i].to_string(),
                panel.week_labels[j].to_string(),
                count,
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Broadcasts a `year,population` table over the weeks of every panel year.
pub fn read_offsets(path: impl AsRef<Path>, panel: CountPanel) -> Result<CountPanel> {
    let path = path.as_ref();
    let mut rdr = open_reader(path)?;
    check_header(&mut rdr, path, &["year", "population"])?;
    let mut pop: HashMap<i64, (f64, usize)> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::parse(path, line, e.to_string())
        })?;
        let line = record_line(&rec);
        if rec.len() != 2 {
            return Err(Error::parse(
                path,
                line,
                format!("expected 2 fields, found {}", rec.len()),
            ));
        }
        let year: i64 = rec[0].parse().map_err(|_| {
            Error::parse(path, line, format!("year `{}` is not an integer", &rec[0]))
        })?;
        let value: f64 = rec[1].parse().map_err(|_| {
            Error::parse(
                path,
                line,
                format!("population `{}` is not a number", &rec[1]),
            )
        })?;
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::parse(
                path,
                line,
                format!("population must be positive, got {value}"),
            ));
        }
        if let Some((_, first)) = pop.insert(year, (value, line)) {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate population for year {year} (lines {first} and {line})"),
            ));
        }
    }
    let mut offsets = Vec::with_capacity(panel.n() * panel.m());
    for &year in panel.year_labels() {
        let (value, _) = pop.get(&year).ok_or_else(|| Error::Schema {
            path: path.to_path_buf(),
            message: format!("no population given for year {year}"),
        })?;
        offsets.extend(std::iter::repeat_n(*value, panel.m()));
    }
    panel.with_offsets(offsets)
}

/// Counts plus optional offsets; without an offsets file every offset is 1.
pub fn load_panel(counts: impl AsRef<Path>, offsets: Option<&Path>) -> Result<CountPanel> {
    let panel = read_counts(counts)?;
    match offsets {
        Some(p) => read_offsets(p, panel),
        None => {
            log::info!("no offsets file given; using unit offsets");
            Ok(panel)
        }
    }
}
