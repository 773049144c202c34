//! Cell-level updates of the augmented negative-binomial layer.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::count::PolyaGammaSampler;
use crate::error::{Error, Result};

/// Working response `(z - r) / (2 xi) + log r` of the augmented likelihood.
pub fn compute_zpg(z: f64, r: f64, xi: f64) -> Result<f64> {
    if !(xi > 0.0) {
        return Err(Error::InvalidState(format!(
            "auxiliary variable must be positive, got {xi}"
        )));
    }
    if !(r > 0.0) {
        return Err(Error::InvalidState(format!(
            "dispersion must be positive, got {r}"
        )));
    }
    Ok((z - r) / (2.0 * xi) + r.ln())
}

/// Conditioning values for one log-mean draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaCell {
    pub z: f64,
    pub r: f64,
    pub xi: f64,
    /// Smooth mean `mu_i(tau)` excluding the offset.
    pub mu: f64,
    pub offset_log: f64,
}

/// Gaussian full conditional of `theta` with precision `xi + sigma_eps^-2`.
/// The returned value includes the offset.
pub fn update_theta<R: Rng + ?Sized>(cell: &ThetaCell, sigma_eps: f64, rng: &mut R) -> Result<f64> {
    if !(sigma_eps > 0.0) {
        return Err(Error::InvalidState(format!(
            "noise scale must be positive, got {sigma_eps}"
        )));
    }
    if !(cell.xi > 0.0) {
        return Err(Error::InvalidState(format!(
            "auxiliary variable must be positive, got {}",
            cell.xi
        )));
    }
    if !(cell.r > 0.0) {
        return Err(Error::InvalidState(format!(
            "dispersion must be positive, got {}",
            cell.r
        )));
    }
    let prior_prec = 1.0 / (sigma_eps * sigma_eps);
    let prec = cell.xi + prior_prec;
    // xi * zpg written out to avoid dividing by a tiny xi.
    let lin =
        0.5 * (cell.z - cell.r) + cell.xi * cell.r.ln() + prior_prec * (cell.mu + cell.offset_log);
    let z: f64 = rng.sample(StandardNormal);
    Ok(lin / prec + z / prec.sqrt())
}

/// `PG(z + r, theta - log r)` draw.
pub fn update_xi<R: Rng + ?Sized>(
    z: f64,
    r: f64,
    theta: f64,
    sampler: &PolyaGammaSampler,
    rng: &mut R,
) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidState(format!(
            "dispersion must be positive, got {r}"
        )));
    }
    sampler.sample(z + r, theta - r.ln(), rng)
}
