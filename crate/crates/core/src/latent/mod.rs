//! Conditional updates for the latent Gaussian layer.
//!
//! Given the augmented counts, the log-means `theta` follow a Gaussian
//! functional data model `theta_i = log E_i + F beta_i + eps_i` with smooth
//! orthonormal factors `F` and AR(1) coefficient dynamics under
//! multiplicative gamma process shrinkage.

pub mod covariance;
pub mod dynamics;
pub mod factors;
pub mod ffbs;
pub mod process;
pub mod regression;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};

pub use covariance::{contemporaneous_cov, lag_cov_ar, lag_cov_matrix, numerical_rank};
pub use dynamics::{update_ar_params, DynamicsPrior};
pub use factors::{backfit_factors, update_lambda_f};
pub use ffbs::{ffbs_coefficients, ArStateSpace};
pub use process::{compute_zpg, update_theta, update_xi, ThetaCell};
pub use regression::{update_regression, RegressionBlock};

/// Per-cell latent quantities, stored row-major (`i * m + j`).
#[derive(Debug, Clone, PartialEq)]
pub struct LatentField {
    pub n: usize,
    pub m: usize,
    pub theta: Vec<f64>,
    pub xi: Vec<f64>,
    pub sigma_eps: f64,
    pub offsets_log: Vec<f64>,
}

impl LatentField {
    pub fn new(
        n: usize,
        m: usize,
        theta: Vec<f64>,
        offsets_log: Vec<f64>,
        sigma_eps: f64,
    ) -> Result<Self> {
        if theta.len() != n * m || offsets_log.len() != n * m {
            return Err(Error::DimensionMismatch(format!(
                "latent field {n}x{m} got {} log-means and {} offsets",
                theta.len(),
                offsets_log.len()
            )));
        }
        if !(sigma_eps > 0.0) {
            return Err(Error::InvalidState(format!(
                "noise scale must be positive, got {sigma_eps}"
            )));
        }
        Ok(Self {
            n,
            m,
            theta,
            xi: vec![1.0; n * m],
            sigma_eps,
            offsets_log,
        })
    }

    /// `theta - log E` as an n x m matrix.
    pub fn centered(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.m, |i, j| {
            let c = i * self.m + j;
            self.theta[c] - self.offsets_log[c]
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MgpHypers {
    pub a_mu1: f64,
    pub a_mu2: f64,
    pub a_eta1: f64,
    pub a_eta2: f64,
}

impl Default for MgpHypers {
    fn default() -> Self {
        Self {
            a_mu1: 2.0,
            a_mu2: 2.0,
            a_eta1: 2.0,
            a_eta2: 2.0,
        }
    }
}

/// AR(1) factor coefficients with their shrinkage parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicCoefficients {
    /// n x K coefficients.
    pub beta: DMatrix<f64>,
    pub mu: Vec<f64>,
    pub phi: Vec<f64>,
    /// n x K local precision multipliers of the innovations.
    pub xi_eta: DMatrix<f64>,
    pub nu_eta: f64,
    pub delta_mu: Vec<f64>,
    pub delta_eta: Vec<f64>,
    pub hypers: MgpHypers,
}

impl DynamicCoefficients {
    /// Starting values around given coefficients: `mu` at the column means,
    /// `phi = 0.5`, every shrinkage increment and local scale at 1.
    pub fn from_beta(beta: DMatrix<f64>) -> Self {
        let (n, k) = beta.shape();
        let mu = (0..k).map(|j| beta.column(j).mean()).collect();
        Self {
            beta,
            mu,
            phi: vec![0.5; k],
            xi_eta: DMatrix::from_element(n, k, 1.0),
            nu_eta: 65.0,
            delta_mu: vec![1.0; k],
            delta_eta: vec![1.0; k],
            hypers: MgpHypers::default(),
        }
    }

    pub fn n(&self) -> usize {
        self.beta.nrows()
    }

    pub fn k(&self) -> usize {
        self.beta.ncols()
    }

    /// `sigma_mu_k^2 = 1 / prod_{l <= k} delta_mu_l`.
    pub fn sigma2_mu(&self, k: usize) -> f64 {
        1.0 / self.delta_mu[..=k].iter().product::<f64>()
    }

    /// `sigma_eta_k^2 = 1 / prod_{l <= k} delta_eta_l`.
    pub fn sigma2_eta(&self, k: usize) -> f64 {
        1.0 / self.delta_eta[..=k].iter().product::<f64>()
    }

    pub fn sigma_eta(&self) -> Vec<f64> {
        (0..self.k()).map(|k| self.sigma2_eta(k).sqrt()).collect()
    }

    /// State means `mu_k + x_i' alpha_k` (n x K).
    pub fn state_means(&self, reg: Option<&RegressionBlock>) -> DMatrix<f64> {
        let (n, k) = self.beta.shape();
        let mut means = DMatrix::from_fn(n, k, |_, j| self.mu[j]);
        if let Some(reg) = reg {
            means += &reg.x * &reg.alpha;
        }
        means
    }
}

pub(crate) fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    let g = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::InvalidState(format!("gamma({shape}, {rate}): {e}")))?;
    // Guard against underflow to exactly zero for tiny shapes.
    Ok(g.sample(rng).max(f64::MIN_POSITIVE))
}

pub(crate) fn sample_inv_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    Ok(1.0 / sample_gamma(shape, rate, rng)?)
}
