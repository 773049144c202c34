//! Updates of the AR(1) coefficient dynamics and the multiplicative gamma
//! process shrinkage parameters.

use libm::lgamma;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{sample_gamma, DynamicCoefficients, RegressionBlock};
use crate::count::SliceSampler;
use crate::error::{Error, Result};

pub const NU_MIN: f64 = 2.0;
pub const NU_MAX: f64 = 128.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsPrior {
    /// `(phi + 1) / 2 ~ Beta(a_phi, b_phi)`.
    pub a_phi: f64,
    pub b_phi: f64,
    /// Gamma(shape, rate) hyperprior on every MGP shape parameter.
    pub hyper_shape: f64,
    pub hyper_rate: f64,
    /// Hold the corresponding MGP shape at its current value
    /// (order: a_mu1, a_mu2, a_eta1, a_eta2).
    pub fixed_hypers: [bool; 4],
}

impl Default for DynamicsPrior {
    fn default() -> Self {
        Self {
            a_phi: 5.0,
            b_phi: 2.0,
            hyper_shape: 2.0,
            hyper_rate: 1.0,
            fixed_hypers: [false; 4],
        }
    }
}

/// Deviations `e_{k,i} = beta_{k,i} - mu_k - x_i' alpha_k`.
fn deviations(dynamics: &DynamicCoefficients, reg: Option<&RegressionBlock>) -> DMatrix<f64> {
    &dynamics.beta - dynamics.state_means(reg)
}

/// Squared standardised innovations `u_{k,i}` such that the AR(1) density of
/// column `k` is `prod_i N(0, sigma_k^2 / (xi_{k,i} c_i))` evaluated at
/// `sqrt(u_{k,i})`; the stationary start contributes `(1 - phi^2) e_1^2`.
fn innovations_sq(e: &DMatrix<f64>, phi: &[f64]) -> DMatrix<f64> {
    let (n, k) = e.shape();
    DMatrix::from_fn(n, k, |i, j| {
        if i == 0 {
            (1.0 - phi[j] * phi[j]).max(super::ffbs::STATIONARY_FLOOR) * e[(0, j)].powi(2)
        } else {
            (e[(i, j)] - phi[j] * e[(i - 1, j)]).powi(2)
        }
    })
}

/// Cumulative-product shrinkage update of `delta[h]` for all h, given
/// per-factor sufficient statistics: `counts[k]` Gaussian terms with weighted
/// sum of squares `ss[k]` at unit precision.
fn update_mgp_deltas<R: Rng + ?Sized>(
    delta: &mut [f64],
    a1: f64,
    a2: f64,
    counts: &[f64],
    ss: &[f64],
    rng: &mut R,
) -> Result<()> {
    let k = delta.len();
    for h in 0..k {
        let mut shape = if h == 0 { a1 } else { a2 };
        let mut rate = 1.0;
        let mut tau: f64 = delta[..h].iter().product();
        for l in h..k {
            if l > h {
                tau *= delta[l];
            }
            shape += 0.5 * counts[l];
            rate += 0.5 * tau * ss[l];
        }
        delta[h] = sample_gamma(shape, rate, rng)?;
    }
    Ok(())
}

fn gamma_hyper_logpost(a: f64, log_deltas: &[f64], prior: &DynamicsPrior) -> f64 {
    let lik: f64 = log_deltas.iter().map(|ld| (a - 1.0) * ld - lgamma(a)).sum();
    lik + (prior.hyper_shape - 1.0) * a.ln() - prior.hyper_rate * a
}

/// One sweep over `mu_k` (skipped when a regression block owns the means),
/// `phi_k`, the local innovation scales, the MGP increments, `nu_eta` and the
/// MGP shape parameters.
pub fn update_ar_params<R: Rng + ?Sized>(
    dynamics: &mut DynamicCoefficients,
    reg: Option<&RegressionBlock>,
    prior: &DynamicsPrior,
    rng: &mut R,
) -> Result<()> {
    let (n, k) = dynamics.beta.shape();
    if dynamics.mu.len() != k || dynamics.phi.len() != k || dynamics.xi_eta.shape() != (n, k) {
        return Err(Error::DimensionMismatch(
            "dynamic coefficient fields disagree on K".into(),
        ));
    }
    if let Some(p) = dynamics.phi.iter().find(|p| !(p.abs() < 1.0)) {
        return Err(Error::InvalidState(format!(
            "autoregressive coefficient {p} outside (-1, 1)"
        )));
    }

    if reg.is_none() {
        for j in 0..k {
            let phi = dynamics.phi[j];
            let s2 = dynamics.sigma2_eta(j);
            let b = dynamics.beta.column(j);
            let xi = dynamics.xi_eta.column(j);
            let w1 = xi[0] * (1.0 - phi * phi).max(super::ffbs::STATIONARY_FLOOR);
            let mut prec = w1;
            let mut lin = w1 * b[0];
            for i in 1..n {
                prec += xi[i] * (1.0 - phi).powi(2);
                lin += xi[i] * (1.0 - phi) * (b[i] - phi * b[i - 1]);
            }
            prec = prec / s2 + 1.0 / dynamics.sigma2_mu(j);
            lin /= s2;
            let z: f64 = rng.sample(StandardNormal);
            dynamics.mu[j] = lin / prec + z / prec.sqrt();
        }
    }

    let e = deviations(dynamics, reg);
    let slice = SliceSampler::new(0.5, 50);
    for j in 0..k {
        let s2 = dynamics.sigma2_eta(j);
        let xi = dynamics.xi_eta.column(j).into_owned();
        let col = e.column(j).into_owned();
        let (a, b) = (prior.a_phi, prior.b_phi);
        let logpost = |phi: f64| {
            let one_m = 1.0 - phi * phi;
            let mut q = xi[0] * one_m * col[0] * col[0];
            for i in 1..n {
                q += xi[i] * (col[i] - phi * col[i - 1]).powi(2);
            }
            (a - 1.0) * (1.0 + phi).ln() + (b - 1.0) * (1.0 - phi).ln() + 0.5 * one_m.ln()
                - 0.5 * q / s2
        };
        dynamics.phi[j] = slice.step_bounded(logpost, dynamics.phi[j], -1.0, 1.0, rng)?;
    }

    let u = innovations_sq(&e, &dynamics.phi);
    let nu = dynamics.nu_eta;
    for j in 0..k {
        let s2 = dynamics.sigma2_eta(j);
        for i in 0..n {
            dynamics.xi_eta[(i, j)] =
                sample_gamma(0.5 * nu + 0.5, 0.5 * nu + 0.5 * u[(i, j)] / s2, rng)?;
        }
    }

    let counts_eta = vec![n as f64; k];
    let ss_eta: Vec<f64> = (0..k)
        .map(|j| (0..n).map(|i| dynamics.xi_eta[(i, j)] * u[(i, j)]).sum())
        .collect();
    let (a1, a2) = (dynamics.hypers.a_eta1, dynamics.hypers.a_eta2);
    update_mgp_deltas(&mut dynamics.delta_eta, a1, a2, &counts_eta, &ss_eta, rng)?;

    let total = (n * k) as f64;
    let sum_xi: f64 = dynamics.xi_eta.iter().sum();
    let sum_log_xi: f64 = dynamics.xi_eta.iter().map(|x| x.ln()).sum();
    let nu_logpost = |nu: f64| {
        let h = 0.5 * nu;
        total * (h * h.ln() - lgamma(h)) + (h - 1.0) * sum_log_xi - h * sum_xi
    };
    dynamics.nu_eta = SliceSampler::new(10.0, 50).step_bounded(
        nu_logpost,
        dynamics.nu_eta,
        NU_MIN,
        NU_MAX,
        rng,
    )?;

    let counts_mu = vec![1.0; k];
    let ss_mu: Vec<f64> = dynamics.mu.iter().map(|m| m * m).collect();
    let (a1, a2) = (dynamics.hypers.a_mu1, dynamics.hypers.a_mu2);
    update_mgp_deltas(&mut dynamics.delta_mu, a1, a2, &counts_mu, &ss_mu, rng)?;

    let log_dmu: Vec<f64> = dynamics.delta_mu.iter().map(|d| d.ln()).collect();
    let log_deta: Vec<f64> = dynamics.delta_eta.iter().map(|d| d.ln()).collect();
    let slice = SliceSampler::new(1.0, 50);
    let targets: [(&[f64], usize); 4] = [
        (&log_dmu[..1], 0),
        (&log_dmu[1..], 1),
        (&log_deta[..1], 2),
        (&log_deta[1..], 3),
    ];
    for (ld, idx) in targets {
        if prior.fixed_hypers[idx] {
            continue;
        }
        let slot = match idx {
            0 => &mut dynamics.hypers.a_mu1,
            1 => &mut dynamics.hypers.a_mu2,
            2 => &mut dynamics.hypers.a_eta1,
            _ => &mut dynamics.hypers.a_eta2,
        };
        *slot = slice.step_positive(|a| gamma_hyper_logpost(a, ld, prior), *slot, rng)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::ffbs::ArStateSpace;
    use crate::rng::RngHandle;

    /// Draw `beta` from its AR(1) prior given the current parameters.
    fn prior_beta<R: Rng>(d: &mut DynamicCoefficients, rng: &mut R) {
        let (n, k) = d.beta.shape();
        let nan = vec![f64::NAN; n];
        for j in 0..k {
            let s2 = d.sigma2_eta(j);
            let w: Vec<f64> = (0..n).map(|i| s2 / d.xi_eta[(i, j)]).collect();
            let mean = vec![d.mu[j]; n];
            let ss = ArStateSpace {
                y: &nan,
                obs_var: f64::INFINITY,
                mean: &mean,
                phi: d.phi[j],
                innov_var: &w,
            };
            let x = ss.sample(rng).unwrap();
            d.beta.column_mut(j).copy_from_slice(&x);
        }
    }

    #[test]
    fn prior_only_phi_mean() {
        let mut d = DynamicCoefficients::from_beta(DMatrix::zeros(4, 2));
        let prior = DynamicsPrior::default();
        let mut rng = RngHandle::new(21, 0).rng();
        let mut sum = 0.0;
        let mut count = 0usize;
        for it in 0..30_000 {
            prior_beta(&mut d, &mut rng);
            update_ar_params(&mut d, None, &prior, &mut rng).unwrap();
            if it >= 1000 {
                sum += d.phi.iter().sum::<f64>();
                count += d.phi.len();
            }
        }
        let mean = sum / count as f64;
        assert!((mean - 3.0 / 7.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn prior_only_mgp_ordering() {
        let k = 4;
        let mut d = DynamicCoefficients::from_beta(DMatrix::zeros(3, k));
        d.hypers.a_eta2 = 3.0;
        let prior = DynamicsPrior {
            fixed_hypers: [false, false, false, true],
            ..DynamicsPrior::default()
        };
        let mut rng = RngHandle::new(22, 0).rng();
        let mut log_sum = vec![0.0; k];
        let draws = 10_000;
        for _ in 0..draws + 500 {
            prior_beta(&mut d, &mut rng);
            update_ar_params(&mut d, None, &prior, &mut rng).unwrap();
        }
        // Restart accumulation after burn-in; compare log-variances, whose
        // Monte Carlo error is far smaller than that of the heavy-tailed
        // variances themselves.
        for _ in 0..draws {
            prior_beta(&mut d, &mut rng);
            update_ar_params(&mut d, None, &prior, &mut rng).unwrap();
            for (j, s) in log_sum.iter_mut().enumerate() {
                *s += d.sigma2_eta(j).ln();
            }
        }
        for j in 1..k {
            assert!(log_sum[j] < log_sum[j - 1], "{log_sum:?}");
        }
    }

    #[test]
    fn recovers_autoregression() {
        let n = 200;
        let mut rng = RngHandle::new(23, 0).rng();
        let phi_true: f64 = 0.8;
        let sd = (1.0 - phi_true * phi_true).sqrt();
        let mut beta = DMatrix::zeros(n, 1);
        let mut x: f64 = rng.sample(StandardNormal);
        for i in 0..n {
            if i > 0 {
                let z: f64 = rng.sample(StandardNormal);
                x = phi_true * x + sd * z;
            }
            beta[(i, 0)] = 2.0 + x;
        }
        let mut d = DynamicCoefficients::from_beta(beta);
        let prior = DynamicsPrior::default();
        let mut sum = 0.0;
        let keep = 3000;
        for it in 0..keep + 500 {
            update_ar_params(&mut d, None, &prior, &mut rng).unwrap();
            if it >= 500 {
                sum += d.phi[0];
            }
        }
        let mean = sum / keep as f64;
        assert!((mean - 0.8).abs() < 0.15, "{mean}");
    }

    #[test]
    fn support_is_respected() {
        let mut rng = RngHandle::new(24, 0).rng();
        let beta = DMatrix::from_fn(20, 3, |i, j| ((i * (j + 1)) as f64).sin() * 5.0);
        let mut d = DynamicCoefficients::from_beta(beta);
        let prior = DynamicsPrior::default();
        for _ in 0..500 {
            update_ar_params(&mut d, None, &prior, &mut rng).unwrap();
            assert!(d.phi.iter().all(|p| p.abs() < 1.0));
            assert!((NU_MIN..=NU_MAX).contains(&d.nu_eta));
            assert!(d.xi_eta.iter().all(|&x| x > 0.0));
            assert!(d.delta_eta.iter().chain(&d.delta_mu).all(|&x| x > 0.0));
            let h = d.hypers;
            assert!([h.a_mu1, h.a_mu2, h.a_eta1, h.a_eta2]
                .iter()
                .all(|&a| a > 0.0));
        }
    }

    #[test]
    fn rejects_nonstationary_state() {
        let mut rng = RngHandle::new(25, 0).rng();
        let mut d = DynamicCoefficients::from_beta(DMatrix::zeros(5, 1));
        d.phi[0] = 1.0;
        let r = update_ar_params(&mut d, None, &DynamicsPrior::default(), &mut rng);
        assert!(matches!(r, Err(Error::InvalidState(_))));
    }
}
