//! The Gibbs sampler over a count panel.

use libm::lgamma;
use log::{debug, info};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::config::{FitConfig, Variant, R_INIT};
use super::store::{DrawStore, ModelState, StoreMeta};
use crate::basis::{build_spline_basis, default_basis_size, FactorMatrix, SplineBasis};
use crate::count::{sample_nb, NBParams, SliceSampler};
use crate::error::{Error, Result};
use crate::io::CountPanel;
use crate::latent::factors::init_factors;
use crate::latent::{
    backfit_factors, ffbs_coefficients, sample_inv_gamma, update_ar_params, update_lambda_f,
    update_regression, update_theta, update_xi, DynamicCoefficients, DynamicsPrior,
    RegressionBlock, ThetaCell,
};
use crate::rng::RngHandle;

const STEP_IMPUTE: u8 = 0;
const STEP_DISPERSION: u8 = 1;
const STEP_CELLS: u8 = 2;
const STEP_FUNCTIONAL: u8 = 3;

/// Environment variable capping the worker threads used inside one chain.
pub const THREADS_ENV: &str = "NBFTS_THREADS";

fn check_panel(panel: &CountPanel, cfg: &FitConfig) -> Result<usize> {
    cfg.validate()?;
    let (n, m) = (panel.n(), panel.m());
    let rows_with_data = (0..n)
        .filter(|&i| (0..m).any(|j| panel.is_observed(i, j)))
        .count();
    if rows_with_data < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least two rows with observations, found {rows_with_data}"
        )));
    }
    if let Some(j) = (0..m).find(|&j| (0..n).all(|i| !panel.is_observed(i, j))) {
        return Err(Error::InvalidInput(format!(
            "week {} has no observation in any year",
            panel.week_labels()[j]
        )));
    }
    if panel.offsets().iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidInput("offsets must be positive".into()));
    }
    let l_m = cfg.l_m.unwrap_or_else(|| default_basis_size(m));
    if l_m > m {
        return Err(Error::InvalidParameter(format!(
            "basis size {l_m} exceeds the {m} grid points"
        )));
    }
    if cfg.k > l_m.min(n) {
        return Err(Error::InvalidParameter(format!(
            "{} factors exceed min(basis size {l_m}, rows {n})",
            cfg.k
        )));
    }
    if let Some(x) = &cfg.design {
        if x.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "design has {} rows for a panel of {n} rows",
                x.nrows()
            )));
        }
    }
    Ok(l_m)
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let t: usize = v.trim().parse().map_err(|_| {
            Error::InvalidParameter(format!(
                "{THREADS_ENV} must be a positive integer, got `{v}`"
            ))
        })?;
        builder = builder.num_threads(t.max(1));
    }
    builder
        .build()
        .map_err(|e| Error::InvalidState(format!("cannot start worker threads: {e}")))
}

/// Column means of observed values, used to fill never-seen cells at the
/// start of the chain.
fn column_fill(panel: &CountPanel, value: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    (0..panel.m())
        .map(|j| {
            let obs: Vec<f64> = (0..panel.n())
                .filter(|&i| panel.is_observed(i, j))
                .map(|i| value(i, j))
                .collect();
            obs.iter().sum::<f64>() / obs.len() as f64
        })
        .collect()
}

/// Step 5: smooth factors, dynamic coefficients and noise variance for a
/// complete real-valued surface.
struct FunctionalBlock {
    basis: SplineBasis,
    factors: FactorMatrix,
    dynamics: DynamicCoefficients,
    reg: Option<RegressionBlock>,
    sigma_eps: f64,
    prior: DynamicsPrior,
    cfg: FitConfig,
}

impl FunctionalBlock {
    fn init(y: &DMatrix<f64>, cfg: &FitConfig, l_m: usize, grid: &[f64]) -> Result<Self> {
        let basis = build_spline_basis(grid, l_m)?;
        let (factors, beta) = init_factors(y, &basis, cfg.k)?;
        let resid = y - &beta * factors.f.transpose();
        let sigma_eps = (resid.norm_squared() / resid.len() as f64).sqrt().max(1e-3);
        let reg = cfg
            .design
            .clone()
            .map(|x| RegressionBlock::new(x, cfg.k))
            .transpose()?;
        let p = &cfg.priors;
        Ok(Self {
            basis,
            factors,
            dynamics: DynamicCoefficients::from_beta(beta),
            reg,
            sigma_eps,
            prior: DynamicsPrior {
                a_phi: p.a_phi,
                b_phi: p.b_phi,
                hyper_shape: p.hyper_shape,
                hyper_rate: p.hyper_rate,
                fixed_hypers: [false; 4],
            },
            cfg: cfg.clone(),
        })
    }

    /// Smooth part `beta F'` (n x m).
    fn surface(&self) -> DMatrix<f64> {
        &self.dynamics.beta * self.factors.f.transpose()
    }

    fn sweep(&mut self, y: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> Result<()> {
        let pr = self.cfg.priors;
        backfit_factors(
            y,
            &mut self.dynamics.beta,
            &mut self.factors,
            &self.basis,
            self.sigma_eps,
            rng,
        )?;
        update_lambda_f(
            &mut self.factors,
            &self.basis,
            pr.lambda_f_shape,
            pr.lambda_f_rate,
            rng,
        )?;
        let y_proj = y * &self.factors.f;
        let means = self.dynamics.state_means(self.reg.as_ref());
        self.dynamics.beta =
            ffbs_coefficients(&y_proj, &means, &self.dynamics, self.sigma_eps, rng)?;
        if let Some(reg) = self.reg.as_mut() {
            update_regression(&mut self.dynamics, reg, rng)?;
        }
        update_ar_params(&mut self.dynamics, self.reg.as_ref(), &self.prior, rng)?;
        let ss = (y - self.surface()).norm_squared();
        let var = sample_inv_gamma(
            pr.sigma_eps_shape + 0.5 * y.len() as f64,
            pr.sigma_eps_rate + 0.5 * ss,
            rng,
        )?;
        self.sigma_eps = var.sqrt();
        Ok(())
    }

    fn snapshot(&self, r: Option<f64>) -> ModelState {
        ModelState {
            f: self.factors.f.clone(),
            beta: self.dynamics.beta.clone(),
            mu: self.dynamics.mu.clone(),
            phi: self.dynamics.phi.clone(),
            sigma_eta: self.dynamics.sigma_eta(),
            sigma_eps: self.sigma_eps,
            r,
            alpha: self.reg.as_ref().map(|g| g.alpha.clone()),
            lambda_f: self.factors.lambda_f.clone(),
        }
    }
}

fn grid_of(panel: &CountPanel) -> Vec<f64> {
    panel.week_labels().iter().map(|&w| w as f64).collect()
}

fn is_saved(t: usize, cfg: &FitConfig) -> bool {
    t >= cfg.burn_in && (t + 1 - cfg.burn_in).is_multiple_of(cfg.thin)
}

/// Log full conditional of the dispersion given counts and log-means, under
/// a half-Cauchy(0, scale) prior.
pub fn dispersion_logpost(r: f64, z: &[f64], theta: &[f64], scale: f64) -> f64 {
    if !(r > 0.0 && r.is_finite()) {
        return f64::NEG_INFINITY;
    }
    let base = -lgamma(r) + r * r.ln();
    let lik: f64 = z
        .iter()
        .zip(theta)
        .map(|(&z, &th)| {
            // ln(r + e^theta) without overflow
            let log_sum = if th > r.ln() {
                th + (r * (-th).exp()).ln_1p()
            } else {
                r.ln() + (th - r.ln()).exp().ln_1p()
            };
            lgamma(z + r) + base - (z + r) * log_sum
        })
        .sum();
    lik - (1.0 + (r / scale).powi(2)).ln()
}

/// Fits the chosen variant. The Gaussian variant is dispatched to
/// [`fit_gauss`].
pub fn fit(panel: &CountPanel, cfg: &FitConfig) -> Result<DrawStore> {
    if cfg.variant == Variant::Gauss {
        return fit_gauss(panel, cfg);
    }
    let l_m = check_panel(panel, cfg)?;
    let pool = thread_pool()?;
    pool.install(|| fit_counts(panel, cfg, l_m))
}

fn fit_counts(panel: &CountPanel, cfg: &FitConfig, l_m: usize) -> Result<DrawStore> {
    let (n, m) = (panel.n(), panel.m());
    let root = RngHandle::new(cfg.seed, 0);
    let off_log: Vec<f64> = panel.offsets().iter().map(|e| e.ln()).collect();
    let fill = column_fill(panel, |i, j| {
        (panel.get(i, j).unwrap() as f64 + 1.0) / panel.offset(i, j)
    });
    let mut theta: Vec<f64> = (0..n * m)
        .map(|c| {
            let (i, j) = (c / m, c % m);
            match panel.get(i, j) {
                Some(z) => ((z as f64 + 1.0) / panel.offset(i, j)).ln() + off_log[c],
                None => fill[j].ln() + off_log[c],
            }
        })
        .collect();
    let y0 = DMatrix::from_fn(n, m, |i, j| theta[i * m + j] - off_log[i * m + j]);
    let mut block = FunctionalBlock::init(&y0, cfg, l_m, &grid_of(panel))?;
    let fixed_r = cfg.fixed_dispersion();
    let mut r = fixed_r.unwrap_or(R_INIT);
    let mut z: Vec<f64> = panel.counts().iter().map(|&c| c as f64).collect();
    let mut xi = vec![1.0; n * m];
    let observed = panel.observed().to_vec();
    let r_slice = SliceSampler::new(1.0, 50);

    let mut states = Vec::with_capacity(cfg.n_saved());
    let mut predictive = Vec::with_capacity(cfg.n_saved());
    info!(
        "fitting {} variant: {n} rows, {m} weeks, K={}, {} iterations",
        cfg.variant, cfg.k, cfg.iterations
    );

    for t in 0..cfg.iterations {
        let it = t as u64;
        // 1. imputation
        z.par_chunks_mut(m)
            .zip(theta.par_chunks(m))
            .enumerate()
            .try_for_each(|(i, (zr, th))| -> Result<()> {
                let mut rng = root.substream(it, STEP_IMPUTE, i as u16).rng();
                for j in 0..m {
                    if !observed[i * m + j] {
                        zr[j] = sample_nb(&NBParams::new(r, th[j])?, &mut rng) as f64;
                    }
                }
                Ok(())
            })?;

        // 2. dispersion
        if fixed_r.is_none() {
            let mut rng = root.substream(it, STEP_DISPERSION, 0).rng();
            let scale = cfg.priors.r_scale;
            r = r_slice.step_positive(|r| dispersion_logpost(r, &z, &theta, scale), r, &mut rng)?;
        }

        // 3-4. Polya-Gamma variables and log-means
        let mu = block.surface();
        let sigma_eps = block.sigma_eps;
        let pg = cfg.pg;
        theta
            .par_chunks_mut(m)
            .zip(xi.par_chunks_mut(m))
            .enumerate()
            .try_for_each(|(i, (th, xr))| -> Result<()> {
                let mut rng = root.substream(it, STEP_CELLS, i as u16).rng();
                for j in 0..m {
                    let c = i * m + j;
                    xr[j] = update_xi(z[c], r, th[j], &pg, &mut rng)?;
                    let cell = ThetaCell {
                        z: z[c],
                        r,
                        xi: xr[j],
                        mu: mu[(i, j)],
                        offset_log: off_log[c],
                    };
                    th[j] = update_theta(&cell, sigma_eps, &mut rng)?;
                }
                Ok(())
            })?;

        // 5. functional block
        let y = DMatrix::from_fn(n, m, |i, j| theta[i * m + j] - off_log[i * m + j]);
        let mut rng = root.substream(it, STEP_FUNCTIONAL, 0).rng();
        block.sweep(&y, &mut rng)?;

        if is_saved(t, cfg) {
            states.push(block.snapshot(Some(r)));
            predictive.push(z.clone());
        }
        if (t + 1) % 1000 == 0 {
            debug!(
                "iteration {}: r = {r:.3}, sigma_eps = {:.4}",
                t + 1,
                block.sigma_eps
            );
        }
    }

    Ok(DrawStore {
        meta: StoreMeta::new(
            cfg,
            n,
            m,
            block.reg.as_ref().map_or(0, |g| g.p()),
            l_m,
            panel.year_labels(),
            panel.week_labels(),
        ),
        states,
        predictive,
        observed,
    })
}

/// Square-root rate surface `sqrt(Z / E)`; missing cells are `None`.
pub fn sqrt_rates(panel: &CountPanel) -> Vec<Option<f64>> {
    (0..panel.n() * panel.m())
        .map(|c| {
            let (i, j) = (c / panel.m(), c % panel.m());
            panel
                .get(i, j)
                .map(|z| (z as f64 / panel.offset(i, j)).sqrt())
        })
        .collect()
}

/// Gaussian functional-data model on `sqrt(Z / E)`. Predictive counts are
/// `E max(Y, 0)^2`.
pub fn fit_gauss(panel: &CountPanel, cfg: &FitConfig) -> Result<DrawStore> {
    let l_m = check_panel(panel, cfg)?;
    let pool = thread_pool()?;
    pool.install(|| fit_gauss_inner(panel, cfg, l_m))
}

fn fit_gauss_inner(panel: &CountPanel, cfg: &FitConfig, l_m: usize) -> Result<DrawStore> {
    let (n, m) = (panel.n(), panel.m());
    let root = RngHandle::new(cfg.seed, 0);
    let rates = sqrt_rates(panel);
    let fill = column_fill(panel, |i, j| rates[i * m + j].unwrap());
    let mut y = DMatrix::from_fn(n, m, |i, j| rates[i * m + j].unwrap_or(fill[j]));
    let mut block = FunctionalBlock::init(&y, cfg, l_m, &grid_of(panel))?;
    let observed = panel.observed().to_vec();
    let offsets = panel.offsets();

    let mut states = Vec::with_capacity(cfg.n_saved());
    let mut predictive = Vec::with_capacity(cfg.n_saved());
    info!(
        "fitting gauss variant: {n} rows, {m} weeks, K={}, {} iterations",
        cfg.k, cfg.iterations
    );

    for t in 0..cfg.iterations {
        let it = t as u64;
        let mu = block.surface();
        let sd = block.sigma_eps;
        let imputed: Vec<Vec<(usize, f64)>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = root.substream(it, STEP_IMPUTE, i as u16).rng();
                (0..m)
                    .filter(|&j| !observed[i * m + j])
                    .map(|j| {
                        let e: f64 = rng.sample(StandardNormal);
                        (j, mu[(i, j)] + sd * e)
                    })
                    .collect()
            })
            .collect();
        for (i, row) in imputed.iter().enumerate() {
            for &(j, v) in row {
                y[(i, j)] = v;
            }
        }

        let mut rng = root.substream(it, STEP_FUNCTIONAL, 0).rng();
        block.sweep(&y, &mut rng)?;

        if is_saved(t, cfg) {
            states.push(block.snapshot(None));
            predictive.push(
                (0..n * m)
                    .map(|c| match panel.get(c / m, c % m) {
                        Some(z) => z as f64,
                        None => offsets[c] * y[(c / m, c % m)].max(0.0).powi(2),
                    })
                    .collect(),
            );
        }
    }

    Ok(DrawStore {
        meta: StoreMeta::new(
            cfg,
            n,
            m,
            block.reg.as_ref().map_or(0, |g| g.p()),
            l_m,
            panel.year_labels(),
            panel.week_labels(),
        ),
        states,
        predictive,
        observed,
    })
}
