//! Bayesian backfitting of the spline factors `f_k = B psi_k`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::sample_gamma;
use crate::basis::{orthonormalize, FactorMatrix, SplineBasis};
use crate::error::{Error, Result};

/// Small proper prior precision on every spline coefficient, so that the
/// unpenalised linear directions stay well defined when a factor's
/// coefficients are shrunk to zero.
pub const NULL_SPACE_PRECISION: f64 = 1e-8;

/// Warm start: the leading `k` right singular vectors of `y` (n x m),
/// projected onto the spline space and orthonormalised, with coefficients
/// `beta = y F`. Smoothing parameters start at 1.
pub fn init_factors(
    y: &DMatrix<f64>,
    basis: &SplineBasis,
    k: usize,
) -> Result<(FactorMatrix, DMatrix<f64>)> {
    let (n, m) = y.shape();
    if m != basis.m() {
        return Err(Error::DimensionMismatch(format!(
            "surface has {m} columns, basis has {} rows",
            basis.m()
        )));
    }
    if k == 0 || k > basis.size() || k > n {
        return Err(Error::InvalidParameter(format!(
            "number of factors {k} must be in 1..={}",
            basis.size().min(n)
        )));
    }
    let svd = y.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let mut psi = DMatrix::zeros(basis.size(), k);
    for j in 0..k.min(v_t.nrows()) {
        let v = v_t.row(j).transpose();
        psi.set_column(j, &(basis.b.transpose() * v));
    }
    let fallback = || DMatrix::from_fn(basis.size(), k, |i, j| if i == j { 1.0 } else { 0.0 });
    if k > v_t.nrows() {
        psi = fallback();
    }
    let orth = match orthonormalize(&(&basis.b * &psi)) {
        Ok(o) => o,
        Err(_) => {
            psi = fallback();
            orthonormalize(&(&basis.b * &psi))?
        }
    };
    let t_inv = orth
        .transform
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::DegenerateBasis("singular orthonormalising transform".into()))?;
    let psi = psi * t_inv;
    let f = orth.q;
    let beta = y * &f;
    Ok((
        FactorMatrix {
            f,
            psi,
            lambda_f: vec![1.0; k],
        },
        beta,
    ))
}

/// One backfitting sweep over the factors of `y = beta F' + eps`
/// (`y` is n x m, `beta` n x K), followed by re-orthonormalisation. `beta`
/// is transformed so that `beta F'` is unchanged by the final step.
pub fn backfit_factors<R: Rng + ?Sized>(
    y: &DMatrix<f64>,
    beta: &mut DMatrix<f64>,
    factors: &mut FactorMatrix,
    basis: &SplineBasis,
    sigma_eps: f64,
    rng: &mut R,
) -> Result<()> {
    let (n, m) = y.shape();
    let k = factors.k();
    if beta.shape() != (n, k)
        || factors.f.nrows() != m
        || basis.m() != m
        || factors.psi.nrows() != basis.size()
    {
        return Err(Error::DimensionMismatch(format!(
            "surface {n}x{m}, coefficients {:?}, factors {:?}, basis {}x{}",
            beta.shape(),
            factors.f.shape(),
            basis.m(),
            basis.size()
        )));
    }
    if !(sigma_eps > 0.0) {
        return Err(Error::InvalidState(format!(
            "noise scale must be positive, got {sigma_eps}"
        )));
    }
    let prec_eps = 1.0 / (sigma_eps * sigma_eps);
    let omega = basis.omega_diag();
    let yt_beta = y.transpose() * &*beta;
    let gram = beta.transpose() * &*beta;

    for j in 0..k {
        // F' restricted to the other factors: sum_{l != j} f_l (beta_l' beta_j)
        let mut partial = yt_beta.column(j).into_owned();
        for l in 0..k {
            if l != j {
                partial.axpy(-gram[(l, j)], &factors.f.column(l), 1.0);
            }
        }
        let lin = basis.b.transpose() * partial * prec_eps;
        let data_prec = gram[(j, j)] * prec_eps;
        let lambda = factors.lambda_f[j];
        let mut psi = DVector::zeros(basis.size());
        for i in 0..basis.size() {
            let prec = data_prec + lambda * omega[i] + NULL_SPACE_PRECISION;
            if !(prec > 0.0) {
                return Err(Error::InvalidState(format!(
                    "factor {j} has no information in basis direction {i}"
                )));
            }
            let z: f64 = rng.sample(StandardNormal);
            psi[i] = lin[i] / prec + z / prec.sqrt();
        }
        factors.f.set_column(j, &(&basis.b * &psi));
        factors.psi.set_column(j, &psi);
    }

    reorthonormalize(factors, beta)
}

/// Restores `F'F = I` via `F = Q T`, mapping `Psi -> Psi T^-1` and
/// `beta -> beta T'` so that `beta F'` is unchanged.
pub fn reorthonormalize(factors: &mut FactorMatrix, beta: &mut DMatrix<f64>) -> Result<()> {
    let orth = orthonormalize(&factors.f)?;
    let t_inv = orth
        .transform
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::DegenerateBasis("singular orthonormalising transform".into()))?;
    factors.psi = &factors.psi * t_inv;
    *beta = &*beta * orth.transform.transpose();
    factors.f = orth.q;
    Ok(())
}

/// Conjugate `Gamma(shape + rank/2, rate + psi' Omega psi / 2)` update of
/// every smoothing parameter.
pub fn update_lambda_f<R: Rng + ?Sized>(
    factors: &mut FactorMatrix,
    basis: &SplineBasis,
    shape: f64,
    rate: f64,
    rng: &mut R,
) -> Result<()> {
    for j in 0..factors.k() {
        let psi = factors.psi.column(j).into_owned();
        let q = basis.roughness(&psi);
        factors.lambda_f[j] =
            sample_gamma(shape + 0.5 * basis.penalty_rank as f64, rate + 0.5 * q, rng)?;
    }
    Ok(())
}
