//! Univariate slice sampling with stepping out and shrinkage (Neal, 2003).

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceSampler {
    /// Initial bracket width, on whatever scale the target is expressed.
    pub width: f64,
    /// Cap on stepping-out expansions, split randomly between the two sides.
    pub max_steps: u32,
}

impl Default for SliceSampler {
    fn default() -> Self {
        Self {
            width: 1.0,
            max_steps: 50,
        }
    }
}

impl SliceSampler {
    pub fn new(width: f64, max_steps: u32) -> Self {
        Self { width, max_steps }
    }

    /// One transition for a target supported on `(lower, upper)`.
    pub fn step_bounded<F, R>(
        &self,
        mut logdensity: F,
        x0: f64,
        lower: f64,
        upper: f64,
        rng: &mut R,
    ) -> Result<f64>
    where
        F: FnMut(f64) -> f64,
        R: Rng + ?Sized,
    {
        if !(x0 > lower && x0 < upper) {
            return Err(Error::InvalidState(format!(
                "slice sampler start {x0} outside ({lower}, {upper})"
            )));
        }
        let f0 = logdensity(x0);
        if !f0.is_finite() {
            return Err(Error::InvalidState(format!(
                "log-density not finite at slice sampler start {x0}: {f0}"
            )));
        }
        let w = if self.width > 0.0 { self.width } else { 1.0 };
        let level = f0 + rng.random::<f64>().ln();

        let mut left = x0 - rng.random::<f64>() * w;
        let mut right = left + w;
        let mut j = (rng.random::<f64>() * self.max_steps as f64).floor() as u32;
        let mut k = self.max_steps.saturating_sub(1).saturating_sub(j);
        left = left.max(lower);
        right = right.min(upper);
        while j > 0 && left > lower && logdensity(left) > level {
            left = (left - w).max(lower);
            j -= 1;
        }
        while k > 0 && right < upper && logdensity(right) > level {
            right = (right + w).min(upper);
            k -= 1;
        }

        loop {
            let x1 = left + rng.random::<f64>() * (right - left);
            if x1 > lower && x1 < upper && logdensity(x1) > level {
                return Ok(x1);
            }
            if x1 < x0 {
                left = x1;
            } else {
                right = x1;
            }
            if right - left <= 1e-14 * (1.0 + x0.abs()) {
                return Ok(x0);
            }
        }
    }

    /// One transition for a target on `(0, inf)`, carried out on `log x`
    /// with the Jacobian added to the log-density.
    pub fn step_positive<F, R>(&self, mut logdensity: F, x0: f64, rng: &mut R) -> Result<f64>
    where
        F: FnMut(f64) -> f64,
        R: Rng + ?Sized,
    {
        if !(x0 > 0.0 && x0.is_finite()) {
            return Err(Error::InvalidState(format!(
                "positive slice sampler start must be in (0, inf), got {x0}"
            )));
        }
        let u = self.step_bounded(
            |u: f64| {
                let x = u.exp();
                if x > 0.0 && x.is_finite() {
                    logdensity(x) + u
                } else {
                    f64::NEG_INFINITY
                }
            },
            x0.ln(),
            f64::NEG_INFINITY,
            f64::INFINITY,
            rng,
        )?;
        Ok(u.exp())
    }
}

/// One slice-sampling transition for a positive target, using log-scale
/// stepping out with initial `width` and at most 50 expansions.
pub fn slice_sample<F, R>(logdensity: F, x0: f64, width: f64, rng: &mut R) -> Result<f64>
where
    F: FnMut(f64) -> f64,
    R: Rng + ?Sized,
{
    SliceSampler::new(width, 50).step_positive(logdensity, x0, rng)
}
