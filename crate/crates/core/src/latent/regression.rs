//! Function-on-scalars regression for the factor coefficients,
//! `beta_{k,i} = mu_k + x_i' alpha_k + gamma_{k,i}` with AR(1) errors
//! `gamma`, under nested horseshoe shrinkage of `alpha`.
//!
//! Every half-Cauchy scale is carried through the inverse-gamma mixture
//! `s^2 | v ~ IG(1/2, 1/v)`, `v ~ IG(1/2, 1/A^2)`, which gives
//! `s ~ C+(0, A)` and conjugate updates throughout.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{sample_inv_gamma, DynamicCoefficients};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionBlock {
    /// n x p design.
    pub x: DMatrix<f64>,
    /// p x K coefficients.
    pub alpha: DMatrix<f64>,
    /// n x K autoregressive residuals `beta - mu - X alpha`.
    pub gamma: DMatrix<f64>,
    /// p x K local scales `sigma_alpha_{j,k}`.
    pub hs_local: DMatrix<f64>,
    /// Predictor-level scales `lambda_j`.
    pub hs_mid: Vec<f64>,
    /// Global scale `lambda_0`.
    pub hs_global: f64,
    aux_local: DMatrix<f64>,
    aux_mid: Vec<f64>,
    aux_global: f64,
}

impl RegressionBlock {
    /// Zero coefficients with every scale at 1.
    pub fn new(x: DMatrix<f64>, k: usize) -> Result<Self> {
        let (n, p) = x.shape();
        if p == 0 {
            return Err(Error::InvalidInput("design matrix has no columns".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "design matrix has non-finite entries".into(),
            ));
        }
        Ok(Self {
            x,
            alpha: DMatrix::zeros(p, k),
            gamma: DMatrix::zeros(n, k),
            hs_local: DMatrix::from_element(p, k, 1.0),
            hs_mid: vec![1.0; p],
            hs_global: 1.0,
            aux_local: DMatrix::from_element(p, k, 1.0),
            aux_mid: vec![1.0; p],
            aux_global: 1.0,
        })
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Coefficient functions `alpha_j(tau) = sum_k f_k(tau) alpha_{j,k}` (m x p).
    pub fn coefficient_functions(&self, f: &DMatrix<f64>) -> DMatrix<f64> {
        f * self.alpha.transpose()
    }
}

/// Joint Gaussian draw of `(mu_k, alpha_k)` for every factor, recomputation of
/// `gamma`, then the horseshoe scale updates.
pub fn update_regression<R: Rng + ?Sized>(
    dynamics: &mut DynamicCoefficients,
    reg: &mut RegressionBlock,
    rng: &mut R,
) -> Result<()> {
    let (n, k) = dynamics.beta.shape();
    let p = reg.p();
    if reg.x.nrows() != n || reg.alpha.shape() != (p, k) {
        return Err(Error::DimensionMismatch(format!(
            "design {:?} and coefficients {:?} do not fit {n} rows and {k} factors",
            reg.x.shape(),
            reg.alpha.shape()
        )));
    }
    let dim = p + 1;
    for j in 0..k {
        let phi = dynamics.phi[j];
        let s2 = dynamics.sigma2_eta(j);
        let b = dynamics.beta.column(j);
        let xi = dynamics.xi_eta.column(j);
        let mut prec = DMatrix::zeros(dim, dim);
        let mut lin = DVector::zeros(dim);
        let mut row = DVector::zeros(dim);
        for i in 0..n {
            let (w, target) = if i == 0 {
                row[0] = 1.0;
                for c in 0..p {
                    row[c + 1] = reg.x[(0, c)];
                }
                (
                    xi[0] * (1.0 - phi * phi).max(super::ffbs::STATIONARY_FLOOR),
                    b[0],
                )
            } else {
                row[0] = 1.0 - phi;
                for c in 0..p {
                    row[c + 1] = reg.x[(i, c)] - phi * reg.x[(i - 1, c)];
                }
                (xi[i], b[i] - phi * b[i - 1])
            };
            let w = w / s2;
            prec.ger(w, &row, &row, 1.0);
            lin.axpy(w * target, &row, 1.0);
        }
        prec[(0, 0)] += 1.0 / dynamics.sigma2_mu(j);
        for c in 0..p {
            prec[(c + 1, c + 1)] += 1.0 / reg.hs_local[(c, j)].powi(2);
        }
        let chol = prec.cholesky().ok_or_else(|| {
            Error::InvalidState(format!(
                "regression precision for factor {j} is not positive definite"
            ))
        })?;
        let mean = chol.solve(&lin);
        let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        // L' d = z gives d ~ N(0, (L L')^-1).
        let d = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::InvalidState("singular Cholesky factor".into()))?;
        let draw = mean + d;
        dynamics.mu[j] = draw[0];
        for c in 0..p {
            reg.alpha[(c, j)] = draw[c + 1];
        }
    }
    reg.gamma = &dynamics.beta - dynamics.state_means(Some(reg));
    update_horseshoe(reg, rng)
}

fn update_horseshoe<R: Rng + ?Sized>(reg: &mut RegressionBlock, rng: &mut R) -> Result<()> {
    let (p, k) = reg.alpha.shape();
    for c in 0..p {
        let lam2 = reg.hs_mid[c].powi(2);
        for j in 0..k {
            let s2 = sample_inv_gamma(
                1.0,
                1.0 / reg.aux_local[(c, j)] + 0.5 * reg.alpha[(c, j)].powi(2),
                rng,
            )?;
            reg.hs_local[(c, j)] = s2.sqrt();
            reg.aux_local[(c, j)] = sample_inv_gamma(1.0, 1.0 / lam2 + 1.0 / s2, rng)?;
        }
    }
    let g2 = reg.hs_global.powi(2);
    for c in 0..p {
        let inv_aux: f64 = (0..k).map(|j| 1.0 / reg.aux_local[(c, j)]).sum();
        let lam2 = sample_inv_gamma(0.5 * (k as f64 + 1.0), 1.0 / reg.aux_mid[c] + inv_aux, rng)?;
        reg.hs_mid[c] = lam2.sqrt();
        reg.aux_mid[c] = sample_inv_gamma(1.0, 1.0 / g2 + 1.0 / lam2, rng)?;
    }
    let inv_aux: f64 = reg.aux_mid.iter().map(|v| 1.0 / v).sum();
    let g2 = sample_inv_gamma(0.5 * (p as f64 + 1.0), 1.0 / reg.aux_global + inv_aux, rng)?;
    reg.hs_global = g2.sqrt();
    // lambda_0 ~ C+(0, 1/sqrt(p)) so the auxiliary has prior IG(1/2, p).
    reg.aux_global = sample_inv_gamma(1.0, p as f64 + 1.0 / g2, rng)?;
    Ok(())
}
