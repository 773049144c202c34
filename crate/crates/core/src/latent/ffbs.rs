//! Forward filtering, backward sampling for scalar AR(1) state sequences
//! observed with Gaussian noise.
//!
//! State: `x_i - m_i = phi (x_{i-1} - m_{i-1}) + eta_i`, `eta_i ~ N(0, w_i)`,
//! started at the stationary law `x_1 ~ N(m_1, w_1 / (1 - phi^2))`.
//! Observation: `y_i = x_i + v_i`, `v_i ~ N(0, obs_var)`. A NaN observation
//! or an infinite `obs_var` contributes no information.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::DynamicCoefficients;
use crate::error::{Error, Result};

/// Floor applied to `1 - phi^2` in the stationary variance.
pub const STATIONARY_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct ArStateSpace<'a> {
    pub y: &'a [f64],
    pub obs_var: f64,
    pub mean: &'a [f64],
    pub phi: f64,
    pub innov_var: &'a [f64],
}

struct Filtered {
    /// Filtered means and variances.
    c: Vec<f64>,
    cv: Vec<f64>,
    /// One-step predictive means and variances.
    a: Vec<f64>,
    rv: Vec<f64>,
}

impl ArStateSpace<'_> {
    fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if self.mean.len() != n || self.innov_var.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "state space with {n} observations got {} means and {} innovation variances",
                self.mean.len(),
                self.innov_var.len()
            )));
        }
        if n == 0 {
            return Err(Error::InvalidInput("empty state sequence".into()));
        }
        if !(self.phi.abs() < 1.0) {
            return Err(Error::InvalidState(format!(
                "autoregressive coefficient must lie in (-1, 1), got {}",
                self.phi
            )));
        }
        if !(self.obs_var > 0.0) {
            return Err(Error::InvalidState(format!(
                "observation variance must be positive, got {}",
                self.obs_var
            )));
        }
        if let Some(w) = self
            .innov_var
            .iter()
            .find(|w| !(**w > 0.0 && w.is_finite()))
        {
            return Err(Error::InvalidState(format!(
                "innovation variance must be positive and finite, got {w}"
            )));
        }
        Ok(())
    }

    fn filter(&self) -> Filtered {
        let n = self.y.len();
        let phi = self.phi;
        let mut f = Filtered {
            c: vec![0.0; n],
            cv: vec![0.0; n],
            a: vec![0.0; n],
            rv: vec![0.0; n],
        };
        for i in 0..n {
            let (a, r) = if i == 0 {
                let stat = (1.0 - phi * phi).max(STATIONARY_FLOOR);
                (self.mean[0], self.innov_var[0] / stat)
            } else {
                (
                    self.mean[i] + phi * (f.c[i - 1] - self.mean[i - 1]),
                    phi * phi * f.cv[i - 1] + self.innov_var[i],
                )
            };
            f.a[i] = a;
            f.rv[i] = r;
            let y = self.y[i];
            if y.is_nan() || self.obs_var.is_infinite() {
                f.c[i] = a;
                f.cv[i] = r;
            } else {
                let gain = r / (r + self.obs_var);
                f.c[i] = a + gain * (y - a);
                f.cv[i] = r * self.obs_var / (r + self.obs_var);
            }
        }
        f
    }

    /// One joint draw of `x_1..x_n` from the full conditional.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        self.validate()?;
        let n = self.y.len();
        let f = self.filter();
        let mut x = vec![0.0; n];
        let z: f64 = rng.sample(StandardNormal);
        x[n - 1] = f.c[n - 1] + f.cv[n - 1].sqrt() * z;
        for i in (0..n - 1).rev() {
            let w = self.innov_var[i + 1];
            let prec = 1.0 / f.cv[i] + self.phi * self.phi / w;
            let target = x[i + 1] - self.mean[i + 1] + self.phi * self.mean[i];
            let mean = (f.c[i] / f.cv[i] + self.phi * target / w) / prec;
            let z: f64 = rng.sample(StandardNormal);
            x[i] = mean + z / prec.sqrt();
        }
        Ok(x)
    }

    /// Marginal posterior means and variances (Rauch-Tung-Striebel smoother).
    pub fn smooth(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        self.validate()?;
        let n = self.y.len();
        let f = self.filter();
        let mut s = f.c.clone();
        let mut sv = f.cv.clone();
        for i in (0..n - 1).rev() {
            let j = self.phi * f.cv[i] / f.rv[i + 1];
            s[i] = f.c[i] + j * (s[i + 1] - f.a[i + 1]);
            sv[i] = f.cv[i] + j * j * (sv[i + 1] - f.rv[i + 1]);
        }
        Ok((s, sv))
    }
}

/// Draws every coefficient series `beta_k` (columns of the result) given the
/// projected observations `y_proj` (n x K), the state means (n x K) and the
/// current dynamic parameters.
pub fn ffbs_coefficients<R: Rng + ?Sized>(
    y_proj: &DMatrix<f64>,
    means: &DMatrix<f64>,
    dynamics: &DynamicCoefficients,
    sigma_eps: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let (n, k) = y_proj.shape();
    if means.shape() != (n, k) || dynamics.beta.shape() != (n, k) {
        return Err(Error::DimensionMismatch(format!(
            "projected observations {n}x{k}, means {:?}, coefficients {:?}",
            means.shape(),
            dynamics.beta.shape()
        )));
    }
    if !(sigma_eps > 0.0) {
        return Err(Error::InvalidState(format!(
            "noise scale must be positive, got {sigma_eps}"
        )));
    }
    let mut out = DMatrix::zeros(n, k);
    for j in 0..k {
        let s2 = dynamics.sigma2_eta(j);
        let w: Vec<f64> = (0..n).map(|i| s2 / dynamics.xi_eta[(i, j)]).collect();
        let y: Vec<f64> = y_proj.column(j).iter().copied().collect();
        let m: Vec<f64> = means.column(j).iter().copied().collect();
        let ss = ArStateSpace {
            y: &y,
            obs_var: sigma_eps * sigma_eps,
            mean: &m,
            phi: dynamics.phi[j],
            innov_var: &w,
        };
        let draw = ss.sample(rng)?;
        out.column_mut(j).copy_from_slice(&draw);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngHandle;
    use nalgebra::DVector;

    /// Joint precision and linear term of the states, assembled directly.
    fn brute_force(ss: &ArStateSpace) -> (DVector<f64>, DMatrix<f64>) {
        let n = ss.y.len();
        let mut q = DMatrix::zeros(n, n);
        let mut l = DVector::zeros(n);
        let phi = ss.phi;
        // x_1 - m_1 ~ N(0, w_1/(1-phi^2))
        let p1 = (1.0 - phi * phi) / ss.innov_var[0];
        q[(0, 0)] += p1;
        l[0] += p1 * ss.mean[0];
        // x_i - phi x_{i-1} - (m_i - phi m_{i-1}) ~ N(0, w_i)
        for i in 1..n {
            let p = 1.0 / ss.innov_var[i];
            let c = ss.mean[i] - phi * ss.mean[i - 1];
            q[(i, i)] += p;
            q[(i - 1, i - 1)] += p * phi * phi;
            q[(i, i - 1)] -= p * phi;
            q[(i - 1, i)] -= p * phi;
            l[i] += p * c;
            l[i - 1] -= p * phi * c;
        }
        for i in 0..n {
            if ss.obs_var.is_finite() && !ss.y[i].is_nan() {
                q[(i, i)] += 1.0 / ss.obs_var;
                l[i] += ss.y[i] / ss.obs_var;
            }
        }
        let cov = q.try_inverse().unwrap();
        (&cov * l, cov)
    }

    #[test]
    fn smoother_matches_dense_solution() {
        let y = [0.3, f64::NAN, -1.2, 0.8, 2.0];
        let mean = [0.1, 0.2, 0.0, -0.3, 0.5];
        let w = [0.5, 0.7, 0.4, 1.1, 0.6];
        let ss = ArStateSpace {
            y: &y,
            obs_var: 0.3,
            mean: &mean,
            phi: 0.65,
            innov_var: &w,
        };
        let (s, sv) = ss.smooth().unwrap();
        let (bm, bc) = brute_force(&ss);
        for i in 0..5 {
            assert!((s[i] - bm[i]).abs() < 1e-10);
            assert!((sv[i] - bc[(i, i)]).abs() < 1e-10);
        }
    }

    #[test]
    fn independent_case_is_conjugate() {
        let y = [1.0, -2.0, 0.5];
        let mean = [0.2, 0.4, -0.1];
        let w = [2.0, 0.5, 1.5];
        let v = 0.8;
        let ss = ArStateSpace {
            y: &y,
            obs_var: v,
            mean: &mean,
            phi: 0.0,
            innov_var: &w,
        };
        let (s, sv) = ss.smooth().unwrap();
        for i in 0..3 {
            let prec = 1.0 / w[i] + 1.0 / v;
            let m = (mean[i] / w[i] + y[i] / v) / prec;
            assert!((s[i] - m).abs() < 1e-8);
            assert!((sv[i] - 1.0 / prec).abs() < 1e-8);
        }
    }

    #[test]
    fn infinite_noise_gives_prior() {
        let n = 4;
        let y = vec![5.0; n];
        let mean = vec![1.0; n];
        let w = vec![0.36; n];
        let ss = ArStateSpace {
            y: &y,
            obs_var: f64::INFINITY,
            mean: &mean,
            phi: 0.8,
            innov_var: &w,
        };
        let mut rng = RngHandle::new(3, 0).rng();
        let reps = 40_000;
        let mut sum = vec![0.0; n];
        let mut sq = vec![0.0; n];
        for _ in 0..reps {
            let x = ss.sample(&mut rng).unwrap();
            for i in 0..n {
                sum[i] += x[i];
                sq[i] += x[i] * x[i];
            }
        }
        for i in 0..n {
            let m = sum[i] / reps as f64;
            let var = sq[i] / reps as f64 - m * m;
            // stationary variance 0.36 / (1 - 0.64) = 1
            let se = (1.0 / reps as f64).sqrt();
            assert!((m - 1.0).abs() < 4.0 * se, "{i}: {m}");
            assert!((var - 1.0).abs() < 0.05, "{i}: {var}");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let y = [0.0; 2];
        let ok = [1.0; 2];
        let mut rng = RngHandle::new(0, 0).rng();
        let bad_phi = ArStateSpace {
            y: &y,
            obs_var: 1.0,
            mean: &ok,
            phi: 1.0,
            innov_var: &ok,
        };
        assert!(matches!(
            bad_phi.sample(&mut rng),
            Err(Error::InvalidState(_))
        ));
        let bad_w = [1.0, 0.0];
        let s = ArStateSpace {
            y: &y,
            obs_var: 1.0,
            mean: &ok,
            phi: 0.2,
            innov_var: &bad_w,
        };
        assert!(matches!(s.sample(&mut rng), Err(Error::InvalidState(_))));
        let s = ArStateSpace {
            y: &y,
            obs_var: 0.0,
            mean: &ok,
            phi: 0.2,
            innov_var: &ok,
        };
        assert!(matches!(s.sample(&mut rng), Err(Error::InvalidState(_))));
    }

    #[test]
    fn same_stream_same_draw() {
        let y = [0.1, 0.2, 0.3];
        let ones = [1.0; 3];
        let ss = ArStateSpace {
            y: &y,
            obs_var: 0.5,
            mean: &ones,
            phi: 0.4,
            innov_var: &ones,
        };
        let h = RngHandle::new(10, 2);
        assert_eq!(
            ss.sample(&mut h.rng()).unwrap(),
            ss.sample(&mut h.rng()).unwrap()
        );
    }
}
