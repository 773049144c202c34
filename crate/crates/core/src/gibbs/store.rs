//! Stored draws and their directory format.
//!
//! A store directory holds `metadata.json` plus one binary table per
//! quantity. Tables are row-major little-endian 64-bit values with one row
//! per stored draw; matrices are flattened row by row within a draw.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::config::{FitConfig, Priors, Variant};
use crate::error::{Error, Result};

pub const FORMAT_NAME: &str = "nbfts-draws";
pub const FORMAT_VERSION: u32 = 1;
const ORTHONORMAL_TOL: f64 = 1e-8;

/// One stored state of the chain. Log-means and Polya-Gamma variables are
/// not kept.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    /// m x K factors.
    pub f: DMatrix<f64>,
    /// n x K coefficients.
    pub beta: DMatrix<f64>,
    pub mu: Vec<f64>,
    pub phi: Vec<f64>,
    pub sigma_eta: Vec<f64>,
    pub sigma_eps: f64,
    pub r: Option<f64>,
    /// p x K regression coefficients.
    pub alpha: Option<DMatrix<f64>>,
    pub lambda_f: Vec<f64>,
}

impl ModelState {
    /// `beta F'`, the smooth part of `theta - log E` (n x m).
    pub fn mean_surface(&self) -> DMatrix<f64> {
        &self.beta * self.f.transpose()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreMeta {
    pub variant: Variant,
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub p: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub r_fixed: Option<f64>,
    pub l_m: usize,
    pub priors: Priors,
    pub year_labels: Vec<i64>,
    pub week_labels: Vec<u32>,
}

impl StoreMeta {
    pub fn new(
        cfg: &FitConfig,
        n: usize,
        m: usize,
        p: usize,
        l_m: usize,
        years: &[i64],
        weeks: &[u32],
    ) -> Self {
        Self {
            variant: cfg.variant,
            seed: cfg.seed,
            n,
            m,
            k: cfg.k,
            p,
            iterations: cfg.iterations,
            burn_in: cfg.burn_in,
            thin: cfg.thin,
            r_fixed: cfg.fixed_dispersion(),
            l_m,
            priors: cfg.priors,
            year_labels: years.to_vec(),
            week_labels: weeks.to_vec(),
        }
    }
}

/// Thinned post-burn-in states plus predictive count draws for every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawStore {
    pub meta: StoreMeta,
    pub states: Vec<ModelState>,
    /// One row-major n x m array per stored state. Observed cells hold their
    /// observed count.
    pub predictive: Vec<Vec<f64>>,
    /// Row-major observation mask.
    pub observed: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TableSpec {
    name: String,
    file: String,
    dtype: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Metadata {
    format: String,
    version: u32,
    byte_order: String,
    n_draws: usize,
    meta: StoreMeta,
    tables: Vec<TableSpec>,
}

fn flatten(mat: &DMatrix<f64>) -> impl Iterator<Item = f64> + '_ {
    (0..mat.nrows()).flat_map(move |i| (0..mat.ncols()).map(move |j| mat[(i, j)]))
}

fn write_f64(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    let mut bytes = Vec::with_capacity(rows.iter().map(|r| r.len() * 8).sum());
    for row in rows {
        for v in row {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_f64(path: &Path, rows: usize, cols: usize) -> Result<Vec<Vec<f64>>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != rows * cols * 8 {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            message: format!(
                "expected {} bytes for a {rows}x{cols} table, found {}",
                rows * cols * 8,
                bytes.len()
            ),
        });
    }
    Ok(bytes
        .chunks_exact(8 * cols.max(1))
        .take(rows)
        .map(|row| {
            row.chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect()
        })
        .collect())
}

impl DrawStore {
    pub fn n_draws(&self) -> usize {
        self.states.len()
    }

    /// Predictive draws of the requested `(row, week)` cells across stored states.
    pub fn posterior_predictive_cells(&self, cells: &[(usize, usize)]) -> Result<Vec<Vec<f64>>> {
        let (n, m) = (self.meta.n, self.meta.m);
        cells
            .iter()
            .map(|&(i, j)| {
                if i >= n || j >= m {
                    return Err(Error::OutOfBounds(format!(
                        "cell ({i}, {j}) outside a {n}x{m} panel"
                    )));
                }
                Ok(self.predictive.iter().map(|p| p[i * m + j]).collect())
            })
            .collect()
    }

    fn tables(&self) -> Vec<(TableSpec, Vec<Vec<f64>>)> {
        let meta = &self.meta;
        let d = self.n_draws();
        let spec = |name: &str, cols: usize| TableSpec {
            name: name.to_string(),
            file: format!("{name}.f64"),
            dtype: "f64".into(),
            rows: d,
            cols,
        };
        let rows = |f: &dyn Fn(&ModelState) -> Vec<f64>| -> Vec<Vec<f64>> {
            self.states.iter().map(f).collect()
        };
        let mut out = vec![
            (
                spec("f", meta.m * meta.k),
                rows(&|s| flatten(&s.f).collect()),
            ),
            (
                spec("beta", meta.n * meta.k),
                rows(&|s| flatten(&s.beta).collect()),
            ),
            (spec("mu", meta.k), rows(&|s| s.mu.clone())),
            (spec("phi", meta.k), rows(&|s| s.phi.clone())),
            (spec("sigma_eta", meta.k), rows(&|s| s.sigma_eta.clone())),
            (spec("sigma_eps", 1), rows(&|s| vec![s.sigma_eps])),
            (spec("lambda_f", meta.k), rows(&|s| s.lambda_f.clone())),
        ];
        if meta.variant != Variant::Gauss {
            out.push((spec("r", 1), rows(&|s| vec![s.r.unwrap_or(f64::NAN)])));
        }
        if meta.p > 0 {
            out.push((
                spec("alpha", meta.p * meta.k),
                rows(&|s| {
                    s.alpha
                        .as_ref()
                        .map(|a| flatten(a).collect())
                        .unwrap_or_default()
                }),
            ));
        }
        out.push((spec("predictive", meta.n * meta.m), self.predictive.clone()));
        out
    }

    /// Writes the store into `dir` (created if needed).
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut specs = Vec::new();
        for (spec, rows) in self.tables() {
            write_f64(&dir.join(&spec.file), &rows)?;
            specs.push(spec);
        }
        let mask: Vec<u8> = self
            .observed
            .iter()
            .flat_map(|&o| (o as u64).to_le_bytes())
            .collect();
        let mask_path = dir.join("observed.u64");
        fs::write(&mask_path, mask).map_err(|e| Error::io(&mask_path, e))?;
        specs.push(TableSpec {
            name: "observed".into(),
            file: "observed.u64".into(),
            dtype: "u64".into(),
            rows: 1,
            cols: self.meta.n * self.meta.m,
        });
        let md = Metadata {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            byte_order: "little".into(),
            n_draws: self.n_draws(),
            meta: self.meta.clone(),
            tables: specs,
        };
        let path = dir.join("metadata.json");
        let text = serde_json::to_string_pretty(&md).expect("metadata serialises");
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let md_path = dir.join("metadata.json");
        let text = fs::read_to_string(&md_path).map_err(|e| Error::io(&md_path, e))?;
        let md: Metadata = serde_json::from_str(&text).map_err(|e| Error::Schema {
            path: md_path.clone(),
            message: e.to_string(),
        })?;
        let schema = |message: String| Error::Schema {
            path: md_path.clone(),
            message,
        };
        if md.format != FORMAT_NAME || md.version != FORMAT_VERSION || md.byte_order != "little" {
            return Err(schema(format!(
                "unsupported format {} v{} ({})",
                md.format, md.version, md.byte_order
            )));
        }
        let meta = md.meta;
        let d = md.n_draws;
        let find = |name: &str| md.tables.iter().find(|t| t.name == name);
        let load = |name: &str, cols: usize| -> Result<Vec<Vec<f64>>> {
            let spec = find(name).ok_or_else(|| schema(format!("missing table `{name}`")))?;
            if spec.dtype != "f64" || spec.rows != d || spec.cols != cols {
                return Err(schema(format!(
                    "table `{name}` declared {} {}x{}, expected f64 {d}x{cols}",
                    spec.dtype, spec.rows, spec.cols
                )));
            }
            read_f64(&dir.join(&spec.file), d, cols)
        };
        let (n, m, k, p) = (meta.n, meta.m, meta.k, meta.p);
        let f = load("f", m * k)?;
        let beta = load("beta", n * k)?;
        let mu = load("mu", k)?;
        let phi = load("phi", k)?;
        let sigma_eta = load("sigma_eta", k)?;
        let sigma_eps = load("sigma_eps", 1)?;
        let lambda_f = load("lambda_f", k)?;
        let r = if meta.variant != Variant::Gauss {
            Some(load("r", 1)?)
        } else {
            None
        };
        let alpha = if p > 0 {
            Some(load("alpha", p * k)?)
        } else {
            None
        };
        let predictive = load("predictive", n * m)?;

        let mask_spec =
            find("observed").ok_or_else(|| schema("missing table `observed`".into()))?;
        if mask_spec.dtype != "u64" || mask_spec.rows != 1 || mask_spec.cols != n * m {
            return Err(schema("table `observed` has the wrong shape".into()));
        }
        let mask_path = dir.join(&mask_spec.file);
        let bytes = fs::read(&mask_path).map_err(|e| Error::io(&mask_path, e))?;
        if bytes.len() != n * m * 8 {
            return Err(Error::Schema {
                path: mask_path,
                message: format!("expected {} bytes, found {}", n * m * 8, bytes.len()),
            });
        }
        let observed = bytes
            .chunks_exact(8)
            .map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")) != 0)
            .collect();

        let states = (0..d)
            .map(|t| ModelState {
                f: DMatrix::from_row_slice(m, k, &f[t]),
                beta: DMatrix::from_row_slice(n, k, &beta[t]),
                mu: mu[t].clone(),
                phi: phi[t].clone(),
                sigma_eta: sigma_eta[t].clone(),
                sigma_eps: sigma_eps[t][0],
                r: r.as_ref().map(|r| r[t][0]),
                alpha: alpha.as_ref().map(|a| DMatrix::from_row_slice(p, k, &a[t])),
                lambda_f: lambda_f[t].clone(),
            })
            .collect();
        Ok(Self {
            meta,
            states,
            predictive,
            observed,
        })
    }

    /// Structural checks on an in-memory store.
    pub fn check(&self) -> std::result::Result<(), String> {
        let meta = &self.meta;
        let expected = meta.iterations.saturating_sub(meta.burn_in) / meta.thin.max(1);
        if self.states.len() != expected || self.predictive.len() != expected {
            return Err(format!(
                "{} states and {} predictive draws, expected {expected}",
                self.states.len(),
                self.predictive.len()
            ));
        }
        if self.observed.len() != meta.n * meta.m {
            return Err("observation mask has the wrong length".into());
        }
        let eye = DMatrix::<f64>::identity(meta.k, meta.k);
        for (t, s) in self.states.iter().enumerate() {
            if s.f.shape() != (meta.m, meta.k) || s.beta.shape() != (meta.n, meta.k) {
                return Err(format!("draw {t}: factor or coefficient shape mismatch"));
            }
            let dev = (s.f.transpose() * &s.f - &eye).amax();
            if !(dev <= ORTHONORMAL_TOL) {
                return Err(format!(
                    "draw {t}: factors deviate from orthonormality by {dev:e}"
                ));
            }
            if !(s.sigma_eps > 0.0) || s.phi.iter().any(|p| !(p.abs() < 1.0)) {
                return Err(format!("draw {t}: parameter outside its support"));
            }
            if let Some(r) = s.r {
                if !(r > 0.0) {
                    return Err(format!("draw {t}: dispersion {r} not positive"));
                }
                if let Some(fixed) = meta.r_fixed {
                    if r != fixed {
                        return Err(format!(
                            "draw {t}: dispersion {r} differs from the fixed value {fixed}"
                        ));
                    }
                }
            }
        }
        for (t, p) in self.predictive.iter().enumerate() {
            if p.len() != meta.n * meta.m || p.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(format!(
                    "draw {t}: predictive counts must be finite and nonnegative"
                ));
            }
        }
        Ok(())
    }
}

/// Loads a store directory and runs the structural checks.
pub fn validate_store_dir(dir: impl AsRef<Path>) -> Result<DrawStore> {
    let dir = dir.as_ref();
    let store = DrawStore::load(dir)?;
    store.check().map_err(|message| Error::Schema {
        path: dir.to_path_buf(),
        message,
    })?;
    Ok(store)
}
