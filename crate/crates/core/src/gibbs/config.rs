use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::count::PolyaGammaSampler;
use crate::error::{Error, Result};

/// Dispersion used by the Poisson-like variant unless overridden.
pub const POIS_DEFAULT_R: f64 = 1000.0;
/// Starting dispersion for the negative-binomial variant.
pub const R_INIT: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Negative binomial with unknown dispersion.
    Nb,
    /// Negative binomial with large fixed dispersion.
    Pois,
    /// Gaussian model for the square-root rates.
    Gauss,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Nb => "nb",
            Variant::Pois => "pois",
            Variant::Gauss => "gauss",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nb" => Ok(Variant::Nb),
            "pois" => Ok(Variant::Pois),
            "gauss" => Ok(Variant::Gauss),
            other => Err(Error::InvalidParameter(format!(
                "unknown variant `{other}` (expected nb, pois or gauss)"
            ))),
        }
    }
}

/// Hyperparameters of the priors that the sampler does not learn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    pub a_phi: f64,
    pub b_phi: f64,
    pub hyper_shape: f64,
    pub hyper_rate: f64,
    /// Half-Cauchy scale of the dispersion prior.
    pub r_scale: f64,
    /// Inverse-gamma prior on the noise variance.
    pub sigma_eps_shape: f64,
    pub sigma_eps_rate: f64,
    /// Gamma prior on the spline smoothing parameters.
    pub lambda_f_shape: f64,
    pub lambda_f_rate: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            a_phi: 5.0,
            b_phi: 2.0,
            hyper_shape: 2.0,
            hyper_rate: 1.0,
            r_scale: 10.0,
            sigma_eps_shape: 0.01,
            sigma_eps_rate: 0.01,
            lambda_f_shape: 0.01,
            lambda_f_rate: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub k: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub variant: Variant,
    pub r_fixed: Option<f64>,
    /// Spline basis size; `None` uses the default rule for the grid length.
    pub l_m: Option<usize>,
    pub seed: u64,
    /// Optional n x p predictor matrix for the factor coefficients.
    pub design: Option<DMatrix<f64>>,
    pub priors: Priors,
    pub pg: PolyaGammaSampler,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            k: 6,
            iterations: 30_000,
            burn_in: 5_000,
            thin: 5,
            variant: Variant::Nb,
            r_fixed: None,
            l_m: None,
            seed: 0,
            design: None,
            priors: Priors::default(),
            pg: PolyaGammaSampler::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParameter(
                "number of factors must be at least 1".into(),
            ));
        }
        if self.thin == 0 {
            return Err(Error::InvalidParameter(
                "thinning interval must be at least 1".into(),
            ));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidParameter(format!(
                "burn-in {} must be smaller than the number of iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if let Some(r) = self.r_fixed {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "fixed dispersion must be positive, got {r}"
                )));
            }
        }
        if let Some(l) = self.l_m {
            if l < 4 {
                return Err(Error::InvalidParameter(format!(
                    "spline basis size must be at least 4, got {l}"
                )));
            }
        }
        if self.n_saved() == 0 {
            return Err(Error::InvalidParameter(
                "configuration keeps no draws".into(),
            ));
        }
        Ok(())
    }

    /// Dispersion held fixed during sampling, if any.
    pub fn fixed_dispersion(&self) -> Option<f64> {
        match self.variant {
            Variant::Nb => self.r_fixed,
            Variant::Pois => Some(self.r_fixed.unwrap_or(POIS_DEFAULT_R)),
            Variant::Gauss => None,
        }
    }

    /// Number of stored draws: iterations `burn_in + thin, burn_in + 2 thin, ...`.
    pub fn n_saved(&self) -> usize {
        if self.thin == 0 {
            return 0;
        }
        self.iterations.saturating_sub(self.burn_in) / self.thin
    }
}
