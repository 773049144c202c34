//! Low-rank thin plate spline basis on a one-dimensional grid, its roughness
//! penalty, and the orthonormal factor matrix built from it.
//!
//! The raw basis `[1, t, |t - k_1|^3, ..., |t - k_q|^3]` is mapped to the
//! mixed-model parameterisation in which the penalty is the identity on the
//! radial block, then orthonormalised (`B'B = I`) and finally rotated by the
//! eigenvectors of the induced penalty. The result has orthonormal columns
//! and a diagonal penalty whose two leading entries are exactly zero (the
//! linear null space), so Gaussian full conditionals for spline
//! coefficients have diagonal precision.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Default number of basis columns for `m` grid points.
pub fn default_basis_size(m: usize) -> usize {
    m.div_ceil(4).clamp(4, 25).min(m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    /// Grid rescaled to [0, 1].
    pub grid: Vec<f64>,
    /// m x L evaluation matrix with orthonormal columns.
    pub b: DMatrix<f64>,
    /// L x L diagonal roughness penalty.
    pub omega: DMatrix<f64>,
    /// Interior knots on the rescaled grid.
    pub knots: Vec<f64>,
    /// Rank of `omega` (L - 2).
    pub penalty_rank: usize,
}

impl SplineBasis {
    pub fn m(&self) -> usize {
        self.b.nrows()
    }

    pub fn size(&self) -> usize {
        self.b.ncols()
    }

    pub fn omega_diag(&self) -> DVector<f64> {
        self.omega.diagonal()
    }

    /// Quadratic form `psi' Omega psi`.
    pub fn roughness(&self, psi: &DVector<f64>) -> f64 {
        psi.dot(&(&self.omega * psi))
    }
}

/// Type-7 sample quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn build_spline_basis(grid: &[f64], size: usize) -> Result<SplineBasis> {
    let m = grid.len();
    if size < 4 {
        return Err(Error::InvalidInput(format!(
            "spline basis needs at least 4 columns, got {size}"
        )));
    }
    if m < size {
        return Err(Error::InvalidInput(format!(
            "spline basis with {size} columns needs at least as many grid points, got {m}"
        )));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(
            "grid contains non-finite values".into(),
        ));
    }
    for (i, w) in grid.windows(2).enumerate() {
        if w[1] == w[0] {
            return Err(Error::InvalidInput(format!(
                "duplicate grid point {} at positions {} and {}",
                w[0],
                i,
                i + 1
            )));
        }
        if w[1] < w[0] {
            return Err(Error::InvalidInput(format!(
                "grid is not increasing at position {}",
                i + 1
            )));
        }
    }

    let lo = grid[0];
    let span = grid[m - 1] - lo;
    let tau: Vec<f64> = grid.iter().map(|x| (x - lo) / span).collect();

    let n_knots = size - 2;
    let knots: Vec<f64> = (1..=n_knots)
        .map(|j| quantile_sorted(&tau, j as f64 / (n_knots + 1) as f64))
        .collect();

    let z_k = DMatrix::from_fn(m, n_knots, |i, j| (tau[i] - knots[j]).abs().powi(3));
    let omega_k = DMatrix::from_fn(n_knots, n_knots, |i, j| (knots[i] - knots[j]).abs().powi(3));

    // Z = Z_K Omega_K^{-T/2} with the SVD square root Omega_K = U D V'.
    let svd = omega_k.svd(true, true);
    let (u, v_t) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let d = svd.singular_values;
    let d_max = d.max();
    if d.iter().any(|&s| s <= 1e-12 * d_max) {
        return Err(Error::DegenerateBasis(
            "knot penalty matrix is numerically singular".into(),
        ));
    }
    let inv_sqrt_d = DMatrix::from_diagonal(&d.map(|s| 1.0 / s.sqrt()));
    let z = &z_k * &u * inv_sqrt_d * v_t;

    let mut raw = DMatrix::zeros(m, size);
    for i in 0..m {
        raw[(i, 0)] = 1.0;
        raw[(i, 1)] = tau[i];
        for j in 0..n_knots {
            raw[(i, j + 2)] = z[(i, j)];
        }
    }

    let qr = raw.qr();
    let q = qr.q();
    let r = qr.r();
    let r_max = r.diagonal().amax();
    if r.diagonal().iter().any(|x| x.abs() <= 1e-10 * r_max) {
        return Err(Error::DegenerateBasis(
            "raw spline basis is rank deficient".into(),
        ));
    }
    let r_inv = r
        .try_inverse()
        .ok_or_else(|| Error::DegenerateBasis("cannot invert spline R factor".into()))?;
    let mut penalty_raw = DMatrix::zeros(size, size);
    for j in 2..size {
        penalty_raw[(j, j)] = 1.0;
    }
    let omega_q = r_inv.transpose() * penalty_raw * &r_inv;
    let omega_q = (&omega_q + omega_q.transpose()) * 0.5;

    let eig = SymmetricEigen::new(omega_q);
    let mut order: Vec<usize> = (0..size).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let ev_max = eig.eigenvalues.amax();

    let mut rot = DMatrix::zeros(size, size);
    let mut omega = DMatrix::zeros(size, size);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        let lead = col.iamax();
        if col[lead] < 0.0 {
            col.neg_mut();
        }
        rot.set_column(dst, &col);
        let val = eig.eigenvalues[src];
        omega[(dst, dst)] = if dst < 2 || val.abs() <= 1e-10 * ev_max {
            0.0
        } else {
            val
        };
    }
    let penalty_rank = omega.diagonal().iter().filter(|&&x| x > 0.0).count();
    if penalty_rank != size - 2 {
        return Err(Error::DegenerateBasis(format!(
            "penalty rank {penalty_rank}, expected {}",
            size - 2
        )));
    }
    let b = q * rot;

    Ok(SplineBasis {
        grid: tau,
        b,
        omega,
        knots,
        penalty_rank,
    })
}

/// Unknown smooth factors `F = B Psi` with their smoothing parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorMatrix {
    pub f: DMatrix<f64>,
    pub psi: DMatrix<f64>,
    pub lambda_f: Vec<f64>,
}

impl FactorMatrix {
    pub fn k(&self) -> usize {
        self.f.ncols()
    }
}

/// Orthonormal factor `q` and upper-triangular `transform` with
/// `input = q * transform`.
#[derive(Debug, Clone)]
pub struct Orthonormalized {
    pub q: DMatrix<f64>,
    pub transform: DMatrix<f64>,
}

/// QR-based orthonormalisation with the convention that the entry of largest
/// magnitude in every output column is positive.
pub fn orthonormalize(f_raw: &DMatrix<f64>) -> Result<Orthonormalized> {
    let (m, k) = f_raw.shape();
    if k == 0 || m < k {
        return Err(Error::DegenerateBasis(format!(
            "cannot orthonormalise a {m}x{k} matrix"
        )));
    }
    if f_raw.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateBasis("non-finite factor entries".into()));
    }
    let qr = f_raw.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    let scale = f_raw.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    for j in 0..k {
        if r[(j, j)].abs() <= 1e-10 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::DegenerateBasis(format!(
                "factor matrix is rank deficient at column {j}"
            )));
        }
        let lead = q.column(j).iamax();
        if q[(lead, j)] < 0.0 {
            q.column_mut(j).neg_mut();
            r.row_mut(j).neg_mut();
        }
    }
    Ok(Orthonormalized { q, transform: r })
}

/// `(rank/2) log(lambda) - (lambda/2) psi' Omega psi`, dropping constants.
pub fn smoothness_logprior(psi: &DVector<f64>, lambda: f64, basis: &SplineBasis) -> f64 {
    0.5 * basis.penalty_rank as f64 * lambda.ln() - 0.5 * lambda * basis.roughness(psi)
}

/// Gradient of [`smoothness_logprior`] with respect to `psi`.
pub fn smoothness_logprior_grad(
    psi: &DVector<f64>,
    lambda: f64,
    basis: &SplineBasis,
) -> DVector<f64> {
    -(&basis.omega * psi) * lambda
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(m: usize) -> Vec<f64> {
        (0..m).map(|i| i as f64).collect()
    }

    #[test]
    fn shape_and_rank() {
        let sb = build_spline_basis(&grid(50), 10).unwrap();
        assert_eq!(sb.b.shape(), (50, 10));
        assert_eq!(sb.b.clone().svd(false, false).rank(1e-10), 10);
        let btb = sb.b.transpose() * &sb.b;
        assert!((btb - DMatrix::identity(10, 10)).amax() < 1e-10);
    }

    #[test]
    fn straight_lines_are_unpenalised() {
        let sb = build_spline_basis(&grid(50), 10).unwrap();
        for (a, c) in [(1.0, 0.0), (0.0, 1.0), (-2.0, 3.5)] {
            let line = DVector::from_iterator(50, sb.grid.iter().map(|t| a + c * t));
            let psi = sb.b.transpose() * &line;
            assert!((&sb.b * &psi - &line).amax() < 1e-10);
            assert!(sb.roughness(&psi).abs() < 1e-10);
        }
    }

    #[test]
    fn penalty_is_psd_and_diagonal() {
        let sb = build_spline_basis(&grid(52), 13).unwrap();
        let eig = SymmetricEigen::new(sb.omega.clone());
        assert!(eig.eigenvalues.iter().all(|&e| e >= -1e-10));
        for i in 0..13 {
            for j in 0..13 {
                if i != j {
                    assert_eq!(sb.omega[(i, j)], 0.0);
                }
            }
        }
        assert_eq!(sb.penalty_rank, 11);
    }

    #[test]
    fn deterministic_construction() {
        let a = build_spline_basis(&grid(37), 9).unwrap();
        let b = build_spline_basis(&grid(37), 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn default_size_rule() {
        assert_eq!(default_basis_size(52), 13);
        assert_eq!(default_basis_size(50), 13);
        assert_eq!(default_basis_size(200), 25);
        assert_eq!(default_basis_size(8), 4);
    }

    #[test]
    fn invalid_grids() {
        assert!(matches!(
            build_spline_basis(&[0.0, 1.0, 1.0, 2.0, 3.0], 4),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            build_spline_basis(&[0.0, 2.0, 1.0, 3.0, 4.0], 4),
            Err(Error::InvalidInput(_))
        ));
        assert!(build_spline_basis(&grid(3), 4).is_err());
        assert!(build_spline_basis(&grid(10), 3).is_err());
    }

    #[test]
    fn orthonormalize_identity_block() {
        let m = DMatrix::<f64>::identity(7, 3);
        let o = orthonormalize(&m).unwrap();
        assert!((o.q - m).amax() < 1e-14);
    }

    #[test]
    fn orthonormalize_sign_and_span() {
        let raw = DMatrix::from_fn(9, 3, |i, j| {
            ((i * 7 + j * 3) % 5) as f64 - 1.7 + j as f64 * 0.1
        });
        let o = orthonormalize(&raw).unwrap();
        let qtq = o.q.transpose() * &o.q;
        assert!((qtq - DMatrix::identity(3, 3)).amax() < 1e-10);
        assert!((&o.q * &o.transform - &raw).amax() < 1e-10);
        for col in o.q.column_iter() {
            assert!(col[col.iamax()] > 0.0);
        }
    }

    #[test]
    fn orthonormalize_rejects_rank_deficiency() {
        let mut raw = DMatrix::from_fn(6, 2, |i, _| i as f64 + 1.0);
        raw[(0, 1)] = 5.0;
        assert!(orthonormalize(&raw).is_ok());
        let dup = DMatrix::from_fn(6, 2, |i, _| i as f64 + 1.0);
        assert!(matches!(
            orthonormalize(&dup),
            Err(Error::DegenerateBasis(_))
        ));
    }

    #[test]
    fn logprior_algebra() {
        let sb = build_spline_basis(&grid(30), 8).unwrap();
        let psi = DVector::from_fn(8, |i, _| (i as f64 * 0.37).sin());
        let lam = 2.5;
        let d = smoothness_logprior(&psi, 2.0 * lam, &sb) - smoothness_logprior(&psi, lam, &sb);
        let expect = 0.5 * sb.penalty_rank as f64 * 2f64.ln() - 0.5 * lam * sb.roughness(&psi);
        assert!((d - expect).abs() < 1e-12);

        let mut null = DVector::zeros(8);
        null[0] = 3.0;
        null[1] = -1.0;
        assert_eq!(sb.roughness(&null), 0.0);
    }

    #[test]
    fn logprior_gradient_matches_finite_differences() {
        let sb = build_spline_basis(&grid(30), 8).unwrap();
        let psi = DVector::from_fn(8, |i, _| 1.0 + (i as f64 * 0.91).cos());
        let lam = 0.7;
        let g = smoothness_logprior_grad(&psi, lam, &sb);
        let h = 1e-5;
        for i in 0..8 {
            let mut up = psi.clone();
            let mut dn = psi.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (smoothness_logprior(&up, lam, &sb) - smoothness_logprior(&dn, lam, &sb))
                / (2.0 * h);
            let denom = g[i].abs().max(1e-8);
            assert!(
                (fd - g[i]).abs() / denom < 1e-6 || (fd - g[i]).abs() < 1e-10,
                "{i}: {fd} vs {}",
                g[i]
            );
        }
    }
}
