use nalgebra::DMatrix;

use crate::error::{GmdError, Result};
use crate::linalg::{cholesky_jittered, SymEigen};

/// Eigenvalues of a distance-derived Gram matrix are floored at this
/// fraction of the largest one before inversion.
pub const DISTANCE_EIGEN_FLOOR: f64 = 1e-6;

/// `C K C` with `C = I − 11ᵀ/m`.
pub fn gower_center(k: &DMatrix<f64>) -> DMatrix<f64> {
    let m = k.nrows();
    let row_means: Vec<f64> = (0..m).map(|i| k.row(i).sum() / m as f64).collect();
    let col_means: Vec<f64> = (0..m).map(|j| k.column(j).sum() / m as f64).collect();
    let grand = row_means.iter().sum::<f64>() / m as f64;
    DMatrix::from_fn(m, m, |i, j| k[(i, j)] - row_means[i] - col_means[j] + grand)
}

/// `−½ C D2 C`
pub fn gram_from_sq_distance(d2: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !d2.is_square() {
        return Err(GmdError::dims("squared distances", d2.nrows(), d2.ncols()));
    }
    if d2.iter().any(|v| !v.is_finite()) {
        return Err(GmdError::param("squared distances", "must be finite"));
    }
    Ok(gower_center(d2) * -0.5)
}

/// `(−½ C D2 C)⁻¹`, with eigenvalues floored so the Gram matrix is SPD.
pub fn kernel_from_sq_distance(d2: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let g = gram_from_sq_distance(d2)?;
    let eig = SymEigen::new(&g);
    let top = eig.values[0];
    if !(top > 0.0) {
        return Err(GmdError::DegenerateDistances);
    }
    let floor = DISTANCE_EIGEN_FLOOR * top;
    Ok(eig.reconstruct(|v| 1.0 / v.max(floor)))
}

/// `n (Z Zᵀ)⁻¹`
pub fn inverse_euclidean_kernel(z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = z.nrows();
    let gram = z * z.transpose();
    let chol = cholesky_jittered(&gram, "Z Zᵀ")?;
    Ok(chol.inverse() * n as f64)
}

/// Row-wise centered log-ratio of `counts + pseudocount`.
pub fn clr_transform(counts: &DMatrix<f64>, pseudocount: f64) -> Result<DMatrix<f64>> {
    if !(pseudocount >= 0.0) {
        return Err(GmdError::param("pseudocount", "must be nonnegative"));
    }
    let mut out = counts.map(|c| c + pseudocount);
    if out.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(GmdError::param(
            "counts",
            "entries plus pseudocount must be positive and finite",
        ));
    }
    out.apply(|v| *v = v.ln());
    for i in 0..out.nrows() {
        let mean = out.row(i).mean();
        out.row_mut(i).add_scalar_mut(-mean);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_matrix, rng};

    #[test]
    fn centering_basics() {
        let ones = DMatrix::from_element(4, 4, 1.0);
        assert!(gower_center(&ones).amax() < 1e-15);
        let mut r = rng(41);
        let a = random_matrix(5, 5, &mut r);
        let k = &a * a.transpose();
        let c = gower_center(&k);
        for i in 0..5 {
            assert!(c.row(i).sum().abs() < 1e-12);
            assert!(c.column(i).sum().abs() < 1e-12);
        }
        assert!((gower_center(&c) - &c).amax() < 1e-12);
    }

    fn sq_dist(pts: &DMatrix<f64>) -> DMatrix<f64> {
        let m = pts.nrows();
        DMatrix::from_fn(m, m, |i, j| (pts.row(i) - pts.row(j)).norm_squared())
    }

    #[test]
    fn mds_recovers_centered_gram() {
        let line = DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 3.0, 7.0]);
        let g = gram_from_sq_distance(&sq_dist(&line)).unwrap();
        let c = DMatrix::from_fn(4, 1, |i, _| line[i] - 2.75);
        assert!((g - &c * c.transpose()).amax() < 1e-12);

        let mut r = rng(42);
        let pts = random_matrix(7, 3, &mut r);
        let g = gram_from_sq_distance(&sq_dist(&pts)).unwrap();
        let mut cp = pts.clone();
        for j in 0..3 {
            let m = cp.column(j).mean();
            cp.column_mut(j).add_scalar_mut(-m);
        }
        assert!((g - &cp * cp.transpose()).amax() < 1e-12);
    }

    #[test]
    fn distance_kernel_is_spd_and_rejects_zero() {
        let mut r = rng(43);
        let pts = random_matrix(6, 4, &mut r);
        let k = kernel_from_sq_distance(&sq_dist(&pts)).unwrap();
        crate::linalg::check_spd(&k, "K").unwrap();
        assert_eq!(
            kernel_from_sq_distance(&DMatrix::zeros(3, 3)),
            Err(GmdError::DegenerateDistances)
        );
    }

    #[test]
    fn inverse_euclidean_identities() {
        let z = DMatrix::from_row_slice(2, 4, &[1.0, 1.0, 1.0, 1.0, 1.0, -1.0, 1.0, -1.0]);
        let h = inverse_euclidean_kernel(&z).unwrap();
        assert!((h - DMatrix::identity(2, 2) * 0.5).amax() < 1e-12);
        let mut r = rng(44);
        let z = random_matrix(5, 9, &mut r);
        let h = inverse_euclidean_kernel(&z).unwrap();
        let g = &z * z.transpose() / 5.0;
        assert!((&h * g - DMatrix::identity(5, 5)).amax() < 1e-8);
        let h3 = inverse_euclidean_kernel(&(z * 3.0)).unwrap();
        assert!((h3 * 9.0 - h).amax() < 1e-8);
    }

    #[test]
    fn clr_examples() {
        let c = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 4.0, 5.0, 5.0, 5.0]);
        let out = clr_transform(&c, 0.0).unwrap();
        let l2 = 2f64.ln();
        assert!((out[(0, 0)] + l2).abs() < 1e-15 && out[(0, 1)].abs() < 1e-15);
        assert!((out[(0, 2)] - l2).abs() < 1e-15);
        assert!(out.row(1).amax() < 1e-15);
        let mut r = rng(45);
        let counts = random_matrix(4, 6, &mut r).map(|v| (v * 10.0).abs().floor());
        let out = clr_transform(&counts, 1.0).unwrap();
        assert!((0..4).all(|i| out.row(i).sum().abs() < 1e-12));
        assert!(clr_transform(&counts, 0.0).is_err() || counts.iter().all(|&v| v > 0.0));
    }
}
