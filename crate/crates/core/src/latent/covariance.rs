//! Implied covariance functions of the log-mean process given the factors.

use nalgebra::DMatrix;

/// `f(tau)' Cov(beta) f(u) + 1{tau = u} sigma_eps^2`.
pub fn contemporaneous_cov(
    f: &DMatrix<f64>,
    cov_beta: &DMatrix<f64>,
    sigma_eps: f64,
    tau: usize,
    u: usize,
) -> f64 {
    let ft = f.row(tau);
    let fu = f.row(u);
    let mut v = (ft * cov_beta * fu.transpose())[(0, 0)];
    if tau == u {
        v += sigma_eps * sigma_eps;
    }
    v
}

/// Lag-`ell` autocovariance under independent AR(1) coefficients,
/// `sum_k f_k(tau) f_k(u) phi_k^ell sigma2_eta_k / (1 - phi_k^2)`.
pub fn lag_cov_ar(
    f: &DMatrix<f64>,
    phi: &[f64],
    sigma2_eta: &[f64],
    ell: u32,
    tau: usize,
    u: usize,
) -> f64 {
    (0..f.ncols())
        .map(|k| {
            f[(tau, k)] * f[(u, k)] * phi[k].powi(ell as i32) * sigma2_eta[k]
                / (1.0 - phi[k] * phi[k])
        })
        .sum()
}

/// The full m x m lag-`ell` autocovariance matrix.
pub fn lag_cov_matrix(f: &DMatrix<f64>, phi: &[f64], sigma2_eta: &[f64], ell: u32) -> DMatrix<f64> {
    let m = f.nrows();
    DMatrix::from_fn(m, m, |i, j| lag_cov_ar(f, phi, sigma2_eta, ell, i, j))
}

/// Number of singular values above `rel_tol` times the largest.
pub fn numerical_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = a.singular_values();
    let top = sv.max();
    if top <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_factor_examples() {
        let m = 8;
        let f = DMatrix::from_element(m, 1, 1.0 / (m as f64).sqrt());
        let cov = DMatrix::from_element(1, 1, 1.0);
        assert!((contemporaneous_cov(&f, &cov, 0.0, 1, 3) - 1.0 / m as f64).abs() < 1e-15);
        let off =
            contemporaneous_cov(&f, &cov, 0.7, 2, 2) - contemporaneous_cov(&f, &cov, 0.0, 2, 2);
        assert!((off - 0.49).abs() < 1e-15);
        let v = lag_cov_ar(&f, &[0.8], &[0.36], 1, 4, 4);
        assert!((v - 0.8 / m as f64).abs() < 1e-12);
    }

    #[test]
    fn geometric_decay() {
        let f = DMatrix::from_fn(5, 2, |i, j| ((i + 1) * (j + 1)) as f64 * 0.1);
        let v1 = lag_cov_ar(&f, &[0.6, 0.6], &[1.0, 0.5], 1, 0, 3);
        for ell in 2..30 {
            let v = lag_cov_ar(&f, &[0.6, 0.6], &[1.0, 0.5], ell, 0, 3);
            assert!((v / v1 - 0.6f64.powi(ell as i32 - 1)).abs() < 1e-12);
        }
        assert!(lag_cov_ar(&f, &[0.6, 0.6], &[1.0, 0.5], 200, 0, 3).abs() < 1e-40);
    }

    #[test]
    fn lag_matrix_has_rank_k() {
        let m = 10;
        let f = DMatrix::from_fn(m, 3, |i, j| ((i as f64 + 0.5) * (j as f64 + 1.0)).cos());
        let a = lag_cov_matrix(&f, &[0.5, -0.3, 0.9], &[1.0, 0.4, 0.2], 2);
        assert_eq!(numerical_rank(&a, 1e-10), 3);
    }
}
