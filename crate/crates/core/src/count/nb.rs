//! Negative-binomial observation kernel parameterised by dispersion `r` and
//! log-mean `theta`, with success probability `exp(theta) / (r + exp(theta))`.

use libm::lgamma;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NBParams {
    r: f64,
    theta: f64,
}

impl NBParams {
    pub fn new(r: f64, theta: f64) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dispersion must be finite and positive, got {r}"
            )));
        }
        if !theta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "log-mean must be finite, got {theta}"
            )));
        }
        Ok(Self { r, theta })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn mean(&self) -> f64 {
        self.theta.exp()
    }

    /// `log pi` and `log(1 - pi)` evaluated without forming `pi` directly.
    pub fn log_probs(&self) -> (f64, f64) {
        let log_denom = log_add_exp(self.r.ln(), self.theta);
        (self.theta - log_denom, self.r.ln() - log_denom)
    }
}

pub(crate) fn log_add_exp(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

/// Log of the negative-binomial probability mass at `z`.
pub fn nb_logpmf(z: u64, p: &NBParams) -> f64 {
    let z = z as f64;
    let (log_pi, log_1m_pi) = p.log_probs();
    let mut lp = lgamma(p.r + z) - lgamma(p.r) - lgamma(z + 1.0) + p.r * log_1m_pi;
    if z > 0.0 {
        lp += z * log_pi;
    }
    lp
}

pub fn nb_pmf(z: u64, p: &NBParams) -> f64 {
    nb_logpmf(z, p).exp()
}

/// Conditional mean and variance: `exp(theta)` and `exp(theta) (1 + exp(theta) / r)`.
pub fn nb_moments(p: &NBParams) -> (f64, f64) {
    let mean = p.mean();
    (mean, mean * (1.0 + mean / p.r))
}

/// Draw via the Poisson-Gamma mixture: `lambda ~ Gamma(r, mean / r)`, `Z ~ Poisson(lambda)`.
pub fn sample_nb<R: Rng + ?Sized>(p: &NBParams, rng: &mut R) -> u64 {
    let scale = p.mean() / p.r;
    let lambda = match Gamma::new(p.r, scale) {
        Ok(g) => g.sample(rng),
        Err(_) => return 0,
    };
    sample_poisson(lambda, rng)
}

pub(crate) fn sample_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if !(lambda > 0.0) {
        return 0;
    }
    // rand_distr rejects means beyond ~1.8e19; such cells are numerically
    // meaningless for count data, so saturate there.
    let lambda = lambda.min(1e18);
    match Poisson::new(lambda) {
        Ok(pois) => {
            let x: f64 = pois.sample(rng);
            x as u64
        }
        Err(_) => 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngHandle;

    #[test]
    fn geometric_case() {
        let p = NBParams::new(1.0, 0.0).unwrap();
        assert!((nb_pmf(0, &p) - 0.5).abs() < 1e-14);
        assert!((nb_pmf(1, &p) - 0.25).abs() < 1e-14);
    }

    #[test]
    fn pmf_sums_to_one() {
        let p = NBParams::new(5.0, 3f64.ln()).unwrap();
        let total: f64 = (0..=2000).map(|z| nb_pmf(z, &p)).sum();
        assert!((total - 1.0).abs() < 1e-10, "{total}");
    }

    #[test]
    fn pmf_is_finite_for_large_counts() {
        let p = NBParams::new(7.3, 8.0).unwrap();
        let v = nb_logpmf(5000, &p);
        assert!(v.is_finite());
    }

    #[test]
    fn moments_plug_in() {
        let (m, v) = nb_moments(&NBParams::new(1.0, 0.0).unwrap());
        assert_eq!((m, v), (1.0, 2.0));
        let (m, v) = nb_moments(&NBParams::new(4.0, 2f64.ln()).unwrap());
        assert!((m - 2.0).abs() < 1e-12 && (v - 3.0).abs() < 1e-12);
        let (m, v) = nb_moments(&NBParams::new(1e6, 2f64.ln()).unwrap());
        assert!((v / m - 1.0).abs() < 1e-5);
    }

    #[test]
    fn invalid_parameters() {
        assert!(matches!(
            NBParams::new(0.0, 1.0),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            NBParams::new(-1.0, 1.0),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            NBParams::new(1.0, f64::NAN),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            NBParams::new(1.0, f64::INFINITY),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn sampler_matches_moments() {
        let p = NBParams::new(5.0, 3f64.ln()).unwrap();
        let mut rng = RngHandle::new(11, 0).rng();
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_nb(&p, &mut rng) as f64).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 3.0).abs() < 0.05, "mean {mean}");
        assert!((var - 4.8).abs() < 0.2, "var {var}");
    }

    #[test]
    fn sampler_is_deterministic() {
        let p = NBParams::new(2.5, 1.0).unwrap();
        let h = RngHandle::new(99, 5);
        let mut a = h.rng();
        let mut b = h.rng();
        let xa: Vec<u64> = (0..100).map(|_| sample_nb(&p, &mut a)).collect();
        let xb: Vec<u64> = (0..100).map(|_| sample_nb(&p, &mut b)).collect();
        assert_eq!(xa, xb);
    }
}
