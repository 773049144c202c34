//! Pólya-Gamma PG(b, c) variates.
//!
//! Three regimes, chosen by the shape `b`:
//!
//! * `b <= exact_up_to`: the integer part is a sum of exact PG(1, c) draws
//!   from Devroye's alternating-series rejection sampler, and the fractional
//!   part comes from the truncated Gamma series below;
//! * `exact_up_to < b <= gaussian_above`: the infinite convolution-of-Gammas
//!   representation `sum_k g_k / (2 pi^2 ((k - 1/2)^2 + c^2 / (4 pi^2)))`,
//!   `g_k ~ Gamma(b, 1)`, truncated after `series_terms` terms with the
//!   remainder replaced by one Gamma variate matching its exact mean and
//!   variance;
//! * `b > gaussian_above`: a moment-matched Gaussian.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use libm::erfc;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};

use crate::error::{Error, Result};

const TRUNC: f64 = 0.64;
const MIN_SHAPE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyaGammaSampler {
    /// Largest shape drawn as a sum of exact PG(1, c) variates.
    pub exact_up_to: f64,
    /// Shapes strictly above this value use the Gaussian approximation.
    pub gaussian_above: f64,
    /// Explicit Gamma terms kept in the truncated series.
    pub series_terms: usize,
}

impl Default for PolyaGammaSampler {
    fn default() -> Self {
        Self {
            exact_up_to: 16.0,
            gaussian_above: 170.0,
            series_terms: 20,
        }
    }
}

impl PolyaGammaSampler {
    pub fn sample<R: Rng + ?Sized>(&self, b: f64, c: f64, rng: &mut R) -> Result<f64> {
        if !(b.is_finite() && b >= MIN_SHAPE) {
            return Err(Error::InvalidParameter(format!(
                "Polya-Gamma shape must be finite and >= {MIN_SHAPE}, got {b}"
            )));
        }
        if !c.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "Polya-Gamma tilt must be finite, got {c}"
            )));
        }
        let c = c.abs();
        if b > self.gaussian_above {
            return Ok(gaussian_approx(b, c, rng));
        }
        if b > self.exact_up_to {
            return Ok(self.series(b, c, rng));
        }
        let whole = b.floor();
        let frac = b - whole;
        let mut total = 0.0;
        if whole >= 1.0 {
            let devroye = Devroye::new(c);
            for _ in 0..whole as u64 {
                total += devroye.draw(rng);
            }
        }
        if frac > 1e-12 {
            total += self.series(frac, c, rng);
        }
        Ok(total)
    }

    fn series<R: Rng + ?Sized>(&self, b: f64, c: f64, rng: &mut R) -> f64 {
        let d2 = (c / (2.0 * PI)).powi(2);
        let two_pi2 = 2.0 * PI * PI;
        let gamma = Gamma::new(b, 1.0).expect("shape validated");
        let mut sum = 0.0;
        let mut head_mean = 0.0;
        let mut head_var = 0.0;
        for k in 1..=self.series_terms {
            let kh = k as f64 - 0.5;
            let w = 1.0 / (two_pi2 * (kh * kh + d2));
            sum += w * gamma.sample(rng);
            head_mean += w;
            head_var += w * w;
        }
        // Remainder of the series, matched in mean and variance.
        let tail_mean = (pg1_mean(c) - head_mean).max(0.0);
        let tail_var = (pg1_var(c) - head_var).max(0.0);
        if tail_mean > 0.0 && tail_var > 0.0 {
            let scale = tail_var / tail_mean;
            let shape = b * tail_mean * tail_mean / tail_var;
            if let Ok(g) = Gamma::new(shape, scale) {
                sum += g.sample(rng);
            } else {
                sum += b * tail_mean;
            }
        }
        sum
    }
}

/// Draw PG(b, c) with the default regime thresholds.
pub fn sample_polya_gamma<R: Rng + ?Sized>(b: f64, c: f64, rng: &mut R) -> Result<f64> {
    PolyaGammaSampler::default().sample(b, c, rng)
}

/// E[PG(1, c)] = tanh(c/2) / (2c), with limit 1/4 at c = 0.
pub fn pg1_mean(c: f64) -> f64 {
    let c = c.abs();
    if c < 1e-4 {
        0.25 - c * c / 48.0
    } else {
        (0.5 * c).tanh() / (2.0 * c)
    }
}

/// Var[PG(1, c)] = (sinh c - c) / (4 c^3 cosh^2(c/2)), with limit 1/24 at c = 0.
pub fn pg1_var(c: f64) -> f64 {
    let c = c.abs();
    if c < 1e-3 {
        let c2 = c * c;
        (1.0 / 6.0 + c2 / 120.0 + c2 * c2 / 5040.0) / (4.0 * (1.0 + c2 / 4.0 + c2 * c2 / 48.0))
    } else {
        let half = 0.5 * c;
        let sech2 = 1.0 / half.cosh().powi(2);
        (2.0 * half.tanh() - c * sech2) / (4.0 * c * c * c)
    }
}

pub fn pg_mean(b: f64, c: f64) -> f64 {
    b * pg1_mean(c)
}

pub fn pg_var(b: f64, c: f64) -> f64 {
    b * pg1_var(c)
}

fn gaussian_approx<R: Rng + ?Sized>(b: f64, c: f64, rng: &mut R) -> f64 {
    let mean = pg_mean(b, c);
    let sd = pg_var(b, c).sqrt();
    let z: f64 = StandardNormal.sample(rng);
    (mean + sd * z).max(1e-12 * mean)
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Devroye-type exact sampler for PG(1, c), following Polson, Scott & Windle.
/// Works on the Jacobi variable J*(1, z) with z = c/2 and returns J*/4.
struct Devroye {
    z: f64,
    fz: f64,
    texp_mass: f64,
}

impl Devroye {
    fn new(c: f64) -> Self {
        let z = 0.5 * c.abs();
        let fz = 0.125 * PI * PI + 0.5 * z * z;
        Self {
            z,
            fz,
            texp_mass: Self::mass_texpon(z, fz),
        }
    }

    fn mass_texpon(z: f64, fz: f64) -> f64 {
        let t = TRUNC;
        let rt = (1.0 / t).sqrt();
        let b = rt * (t * z - 1.0);
        let a = -rt * (t * z + 1.0);
        let x0 = fz.ln() + fz * t;
        let xb = x0 - z + std_normal_cdf(b).ln();
        let xa = x0 + z + std_normal_cdf(a).ln();
        let q_over_p = 4.0 / PI * (xb.exp() + xa.exp());
        1.0 / (1.0 + q_over_p)
    }

    fn coef(n: u32, x: f64) -> f64 {
        let nh = n as f64 + 0.5;
        let k = nh * PI;
        if x > TRUNC {
            k * (-0.5 * k * k * x).exp()
        } else if x > 0.0 {
            let expnt = -1.5 * ((0.5 * PI).ln() + x.ln()) + k.ln() - 2.0 * nh * nh / x;
            expnt.exp()
        } else {
            0.0
        }
    }

    fn truncated_inverse_gauss<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let t = TRUNC;
        let z = self.z;
        if 1.0 / t > z {
            // Mean above the truncation point: propose from the truncated
            // inverse-chi-square and accept with exp(-z^2 x / 2).
            loop {
                let mut e1: f64 = Exp1.sample(rng);
                let mut e2: f64 = Exp1.sample(rng);
                while e1 * e1 > 2.0 * e2 / t {
                    e1 = Exp1.sample(rng);
                    e2 = Exp1.sample(rng);
                }
                let x = t / (1.0 + e1 * t).powi(2);
                let alpha = (-0.5 * z * z * x).exp();
                if rng.random::<f64>() <= alpha {
                    return x;
                }
            }
        } else {
            let mu = 1.0 / z;
            loop {
                let y: f64 = StandardNormal.sample(rng);
                let y = y * y;
                let half_mu = 0.5 * mu;
                let mu_y = mu * y;
                let mut x = mu + half_mu * mu_y - half_mu * (4.0 * mu_y + mu_y * mu_y).sqrt();
                if rng.random::<f64>() > mu / (mu + x) {
                    x = mu * mu / x;
                }
                if x <= t {
                    return x;
                }
            }
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let x = if rng.random::<f64>() < self.texp_mass {
                let e: f64 = Exp1.sample(rng);
                TRUNC + e / self.fz
            } else {
                self.truncated_inverse_gauss(rng)
            };
            let mut s = Self::coef(0, x);
            let y = rng.random::<f64>() * s;
            let mut n = 0u32;
            loop {
                n += 1;
                if n % 2 == 1 {
                    s -= Self::coef(n, x);
                    if y <= s {
                        return 0.25 * x;
                    }
                } else {
                    s += Self::coef(n, x);
                    if y > s {
                        break;
                    }
                }
            }
        }
    }
}
