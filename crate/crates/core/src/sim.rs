//! Synthetic integer-valued functional panels with known ground truth.

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::count::{sample_nb, NBParams};
use crate::error::{Error, Result};
use crate::forecast::ForecastTask;
use crate::io::CountPanel;
use crate::rng::RngHandle;

/// Weeks of the final year that are always observed and form the forecast
/// origin of the benchmark task.
pub const SIM_M0: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub m: usize,
    pub k_true: usize,
    pub phi: f64,
    pub rsnr: f64,
    pub missing_frac: f64,
    pub r: f64,
    pub seed: u64,
    /// Stream of the generator; replications use distinct streams.
    pub stream: u64,
    /// Read `sqrt(1 - phi^2)` as the innovation standard deviation (the
    /// default) rather than its variance.
    pub innovation_sd_is_sd: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 50,
            m: 50,
            k_true: 4,
            phi: 0.8,
            rsnr: 10.0,
            missing_frac: 0.10,
            r: 1000.0,
            seed: 0,
            stream: 0,
            innovation_sd_is_sd: true,
        }
    }
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        if self.n < 2 || self.m <= SIM_M0 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 rows and more than {SIM_M0} weeks, got {}x{}",
                self.n, self.m
            )));
        }
        if self.k_true == 0 || self.k_true > self.m {
            return Err(Error::InvalidParameter(format!(
                "{} true factors on {} weeks",
                self.k_true, self.m
            )));
        }
        if !(self.phi.abs() < 1.0) || !(self.rsnr > 0.0) || !(self.r > 0.0) {
            return Err(Error::InvalidParameter(
                "phi must lie in (-1, 1); rsnr and r must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.missing_frac) {
            return Err(Error::InvalidParameter(format!(
                "missing fraction must be in [0, 1), got {}",
                self.missing_frac
            )));
        }
        Ok(())
    }

    /// Innovation standard deviation of the coefficient series.
    pub fn innovation_sd(&self) -> f64 {
        let s = (1.0 - self.phi * self.phi).sqrt();
        if self.innovation_sd_is_sd {
            s
        } else {
            s.sqrt()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    pub theta_star: DMatrix<f64>,
    pub mu_star: DMatrix<f64>,
    /// Conditional means `exp(mu*) exp(sigma*^2 / 2)`.
    pub true_curves: DMatrix<f64>,
    pub f_star: DMatrix<f64>,
    pub beta_star: DMatrix<f64>,
    pub sigma_star: f64,
    /// Counts before deletion.
    pub full_counts: DMatrix<u64>,
}

/// Orthonormal columns spanning the discrete polynomials of degree
/// `0..=max_degree` on `m` equally spaced points, by two passes of modified
/// Gram-Schmidt on the monomials.
pub fn discrete_orthonormal_polynomials(m: usize, max_degree: usize) -> DMatrix<f64> {
    let t: Vec<f64> = (0..m)
        .map(|j| 2.0 * j as f64 / (m - 1) as f64 - 1.0)
        .collect();
    let mut q = DMatrix::from_fn(m, max_degree + 1, |j, d| t[j].powi(d as i32));
    for d in 0..=max_degree {
        for _ in 0..2 {
            for e in 0..d {
                let proj = q.column(e).dot(&q.column(d));
                let prev = q.column(e).into_owned();
                q.column_mut(d).axpy(-proj, &prev, 1.0);
            }
        }
        let norm = q.column(d).norm();
        q.column_mut(d).scale_mut(1.0 / norm);
        // fix the sign so the leading value at the right end is positive
        if q[(m - 1, d)] < 0.0 {
            q.column_mut(d).neg_mut();
        }
    }
    q
}

/// True factors: the constant `1/sqrt(m)` followed by the orthonormal
/// polynomials of degree `2, 3, ...`.
pub fn true_factors(m: usize, k: usize) -> DMatrix<f64> {
    let poly = discrete_orthonormal_polynomials(m, k);
    DMatrix::from_fn(m, k, |j, c| {
        if c == 0 {
            poly[(j, 0)]
        } else {
            poly[(j, c + 1)]
        }
    })
}

fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Draws a panel and its ground truth. Offsets are 1; years and weeks are
/// labelled from 1.
pub fn simulate(cfg: &SimConfig) -> Result<(CountPanel, SimTruth)> {
    cfg.validate()?;
    let (n, m, k) = (cfg.n, cfg.m, cfg.k_true);
    let mut rng = RngHandle::new(cfg.seed, cfg.stream).rng();

    let f_star = true_factors(m, k);
    let sd = cfg.innovation_sd();
    let stationary_sd = sd / (1.0 - cfg.phi * cfg.phi).sqrt();
    let root_m = (m as f64).sqrt();
    let mut beta_star = DMatrix::zeros(n, k);
    for c in 0..k {
        let mut gamma = stationary_sd * rng.sample::<f64, _>(StandardNormal);
        for i in 0..n {
            if i > 0 {
                gamma = cfg.phi * gamma + sd * rng.sample::<f64, _>(StandardNormal);
            }
            beta_star[(i, c)] = root_m + root_m / (c + 1) as f64 * gamma;
        }
    }
    let mu_star = &beta_star * f_star.transpose();
    let sigma_star = sample_sd(mu_star.as_slice()) / cfg.rsnr;
    let theta_star = mu_star.map(|v| v + sigma_star * rng.sample::<f64, _>(StandardNormal));
    let true_curves = mu_star.map(|v| (v + 0.5 * sigma_star * sigma_star).exp());

    let mut full_counts = DMatrix::<u64>::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            full_counts[(i, j)] = sample_nb(&NBParams::new(cfg.r, theta_star[(i, j)])?, &mut rng);
        }
    }

    // deletions: never the protected prefix of the final year, never a whole row
    let eligible: Vec<usize> = (0..n * m)
        .filter(|&c| !(c / m == n - 1 && c % m < SIM_M0))
        .collect();
    let n_delete = (cfg.missing_frac * (n * m) as f64).round() as usize;
    if n_delete > eligible.len() {
        return Err(Error::InvalidParameter(format!(
            "cannot delete {n_delete} cells"
        )));
    }
    let deleted = loop {
        let pick: Vec<usize> = sample_indices(&mut rng, eligible.len(), n_delete)
            .into_iter()
            .map(|p| eligible[p])
            .collect();
        let mut per_row = vec![0usize; n];
        for &c in &pick {
            per_row[c / m] += 1;
        }
        if per_row.iter().all(|&d| d < m) {
            break pick;
        }
    };
    let mut cells: Vec<Option<u64>> = (0..n * m)
        .map(|c| Some(full_counts[(c / m, c % m)]))
        .collect();
    for c in deleted {
        cells[c] = None;
    }
    let panel = CountPanel::new(
        n,
        m,
        &cells,
        (1..=n as i64).collect(),
        (1..=m as u32).collect(),
    )?;
    Ok((
        panel,
        SimTruth {
            theta_star,
            mu_star,
            true_curves,
            f_star,
            beta_star,
            sigma_star,
            full_counts,
        },
    ))
}

/// Forecast the final year from its first [`SIM_M0`] weeks.
pub fn forecast_task_for_sim(panel: &CountPanel) -> ForecastTask {
    let n = panel.n();
    ForecastTask {
        train_rows: 0..n - 1,
        target_row: n - 1,
        m0: SIM_M0,
        level: 0.95,
    }
}

pub const TRUTH_HEADER: [&str; 6] = ["year", "week", "count", "theta", "mu", "true_curve"];

/// Writes the per-cell truth as `year,week,count,theta,mu,true_curve`, where
/// `count` is the undeleted count.
pub fn write_truth(path: impl AsRef<Path>, panel: &CountPanel, truth: &SimTruth) -> Result<()> {
    let path = path.as_ref();
    let io = |e: csv::Error| Error::io(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(TRUTH_HEADER).map_err(io)?;
    for i in 0..panel.n() {
        for j in 0..panel.m() {
            w.write_record([
                panel.year_labels()[i].to_string(),
                panel.week_labels()[j].to_string(),
                truth.full_counts[(i, j)].to_string(),
                truth.theta_star[(i, j)].to_string(),
                truth.mu_star[(i, j)].to_string(),
                truth.true_curves[(i, j)].to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Per-cell truth read back from [`write_truth`] output, aligned with `panel`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTable {
    pub full_counts: DMatrix<u64>,
    pub true_curves: DMatrix<f64>,
}

pub fn read_truth(path: impl AsRef<Path>, panel: &CountPanel) -> Result<TruthTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = rdr
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?;
    if header.iter().collect::<Vec<_>>() != TRUTH_HEADER {
        return Err(Error::parse(
            path,
            1,
            format!("expected header `{}`", TRUTH_HEADER.join(",")),
        ));
    }
    let (n, m) = (panel.n(), panel.m());
    let mut full_counts = DMatrix::zeros(n, m);
    let mut true_curves = DMatrix::from_element(n, m, f64::NAN);
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            Error::parse(
                path,
                e.position().map_or(0, |p| p.line() as usize),
                e.to_string(),
            )
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |what: &str| Error::parse(path, line, format!("invalid {what}"));
        let year: i64 = rec[0].parse().map_err(|_| bad("year"))?;
        let week: u32 = rec[1].parse().map_err(|_| bad("week"))?;
        let i = panel.row_of_year(year).ok_or_else(|| bad("year"))?;
        let j = panel
            .week_labels()
            .iter()
            .position(|&w| w == week)
            .ok_or_else(|| bad("week"))?;
        full_counts[(i, j)] = rec[2].parse().map_err(|_| bad("count"))?;
        true_curves[(i, j)] = rec[5].parse().map_err(|_| bad("true curve"))?;
    }
    if true_curves.iter().any(|v| v.is_nan()) {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            message: "truth table does not cover every panel cell".into(),
        });
    }
    Ok(TruthTable {
        full_counts,
        true_curves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn true_factors_are_orthonormal() {
        let f = true_factors(50, 4);
        let dev = (f.transpose() * &f - DMatrix::<f64>::identity(4, 4)).amax();
        assert!(dev < 1e-10, "{dev}");
        assert!(f
            .column(0)
            .iter()
            .all(|v| (v - 50f64.sqrt().recip()).abs() < 1e-12));
    }

    #[test]
    fn polynomial_degrees() {
        // third differences vanish for degree <= 2 on an equally spaced grid
        let q = discrete_orthonormal_polynomials(20, 4);
        let third_diff = |c: usize| -> f64 {
            (0..17)
                .map(|j| {
                    (q[(j + 3, c)] - 3.0 * q[(j + 2, c)] + 3.0 * q[(j + 1, c)] - q[(j, c)]).abs()
                })
                .fold(0.0, f64::max)
        };
        assert!(third_diff(2) < 1e-10);
        assert!(third_diff(3) > 1e-4);
        // the degree-2 column is even about the centre
        assert!((0..20).all(|j| (q[(j, 2)] - q[(19 - j, 2)]).abs() < 1e-10));
    }

    #[test]
    fn rsnr_definition() {
        let mut ratios = Vec::new();
        for s in 0..20 {
            let (_, t) = simulate(&SimConfig {
                seed: 3,
                stream: s,
                ..SimConfig::default()
            })
            .unwrap();
            ratios.push(sample_sd(t.mu_star.as_slice()) / t.sigma_star);
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!((mean - 10.0).abs() < 0.5, "{mean}");
    }

    #[test]
    fn deletion_pattern() {
        let cfg = SimConfig {
            seed: 9,
            ..SimConfig::default()
        };
        let (panel, truth) = simulate(&cfg).unwrap();
        assert_eq!(panel.n_missing(), 250);
        assert!((0..SIM_M0).all(|j| panel.is_observed(49, j)));
        for i in 0..50 {
            assert!((0..50).any(|j| panel.is_observed(i, j)));
            for j in 0..50 {
                if let Some(z) = panel.get(i, j) {
                    assert_eq!(z, truth.full_counts[(i, j)]);
                }
            }
        }
        assert!(truth.true_curves.iter().all(|v| *v > 0.0));
        assert!(panel.offsets().iter().all(|e| *e == 1.0));
    }

    #[test]
    fn deterministic_by_seed() {
        let cfg = SimConfig {
            seed: 4,
            r: 10.0,
            ..SimConfig::default()
        };
        assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
        let other = SimConfig {
            stream: 1,
            ..cfg.clone()
        };
        assert_ne!(
            simulate(&cfg).unwrap().1.full_counts,
            simulate(&other).unwrap().1.full_counts
        );
    }

    #[test]
    fn overdispersed_at_small_r() {
        let mut hits = 0;
        for s in 0..100 {
            let (_, t) = simulate(&SimConfig {
                r: 10.0,
                seed: 5,
                stream: s,
                ..SimConfig::default()
            })
            .unwrap();
            let z: Vec<f64> = t.full_counts.iter().map(|&c| c as f64).collect();
            let mean = z.iter().sum::<f64>() / z.len() as f64;
            let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (z.len() - 1) as f64;
            hits += (var > mean) as usize;
        }
        assert!(hits >= 95, "{hits}");
    }

    #[test]
    fn sim_task_shape() {
        let (panel, _) = simulate(&SimConfig::default()).unwrap();
        let task = forecast_task_for_sim(&panel);
        assert_eq!((task.m0, panel.m() - task.m0), (30, 20));
        assert_eq!((task.train_rows.clone(), task.target_row), (0..49, 49));
    }

    #[test]
    fn truth_round_trip() {
        let (panel, truth) = simulate(&SimConfig {
            n: 4,
            m: 32,
            ..SimConfig::default()
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.csv");
        write_truth(&path, &panel, &truth).unwrap();
        let back = read_truth(&path, &panel).unwrap();
        assert_eq!(back.full_counts, truth.full_counts);
        assert_eq!(back.true_curves, truth.true_curves);
    }

    #[test]
    fn rejects_bad_configs() {
        for cfg in [
            SimConfig {
                m: 30,
                ..SimConfig::default()
            },
            SimConfig {
                phi: 1.0,
                ..SimConfig::default()
            },
            SimConfig {
                missing_frac: 1.0,
                ..SimConfig::default()
            },
            SimConfig {
                r: 0.0,
                ..SimConfig::default()
            },
        ] {
            assert!(simulate(&cfg).is_err());
        }
    }
}
