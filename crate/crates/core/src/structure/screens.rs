use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::kernels::gower_center;
use crate::error::{GmdError, Result};
use crate::linalg::{check_square, inverse_spd};

pub const DEFAULT_PERMUTATIONS: usize = 999;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_permutations: usize,
    pub seed: u64,
}

impl KernelTestResult {
    pub fn significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

/// `Q` is flagged informative when its KRV test is significant.
pub fn column_structure_informative(krv: &KernelTestResult, alpha: f64) -> bool {
    krv.significant(alpha)
}

/// `H` is flagged informative when both KRV and MiRKAT are significant.
pub fn row_structure_informative(krv: &KernelTestResult, mirkat: &KernelTestResult, alpha: f64) -> bool {
    krv.significant(alpha) && mirkat.significant(alpha)
}

fn permutation(seed: u64, b: usize, m: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b as u64 + 1);
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(&mut rng);
    idx
}

fn check_b(b: usize) -> Result<()> {
    if b == 0 {
        return Err(GmdError::param("permutations", "must be at least 1"));
    }
    Ok(())
}

/// `tr(A B) / √(tr(A²) tr(B²))` for centered symmetric kernels.
pub fn rv_coefficient(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    let (aa, bb) = (a.norm_squared(), b.norm_squared());
    if aa == 0.0 || bb == 0.0 {
        return Err(GmdError::ZeroCenteredKernel);
    }
    Ok(a.dot(b) / (aa * bb).sqrt())
}

/// Association between a data kernel `Kx` and the inverse of a structure
/// kernel `Ks`, with a permutation p-value from relabelling the rows and
/// columns of the centered data kernel.
pub fn krv(kx: &DMatrix<f64>, kstruct: &DMatrix<f64>, b: usize, seed: u64) -> Result<KernelTestResult> {
    check_b(b)?;
    let m = kx.nrows();
    check_square(kx, "Kx", m)?;
    check_square(kstruct, "Kstruct", m)?;
    let ax = gower_center(kx);
    let as_ = gower_center(&inverse_spd(kstruct, "Kstruct")?);
    let statistic = rv_coefficient(&ax, &as_)?;
    let denom = (ax.norm_squared() * as_.norm_squared()).sqrt();
    let tol = 1e-12 * statistic.abs().max(1e-300);
    let exceed: usize = (0..b)
        .into_par_iter()
        .map(|i| {
            let pi = permutation(seed, i, m);
            let mut tr = 0.0;
            for j in 0..m {
                let pj = pi[j];
                for k in 0..m {
                    tr += ax[(k, j)] * as_[(pi[k], pj)];
                }
            }
            usize::from(tr / denom >= statistic - tol)
        })
        .sum();
    Ok(KernelTestResult {
        statistic,
        p_value: (1 + exceed) as f64 / (1 + b) as f64,
        n_permutations: b,
        seed,
    })
}

/// Kernel association score `ỹᵀ K̃ ỹ / ỹᵀỹ` with `K̃ = C Ks⁻¹ C`, tested by
/// permuting the entries of `ỹ`.
pub fn mirkat(y: &DVector<f64>, kstruct: &DMatrix<f64>, b: usize, seed: u64) -> Result<KernelTestResult> {
    check_b(b)?;
    let n = y.len();
    check_square(kstruct, "Kstruct", n)?;
    let yc = y.add_scalar(-y.mean());
    let yy = yc.norm_squared();
    if !(yy > 1e-24 * y.norm_squared().max(f64::MIN_POSITIVE)) || yy == 0.0 {
        return Err(GmdError::ConstantResponse);
    }
    let k = gower_center(&inverse_spd(kstruct, "Kstruct")?);
    let statistic = yc.dot(&(&k * &yc)) / yy;
    let tol = 1e-12 * statistic.abs().max(1e-300);
    let exceed: usize = (0..b)
        .into_par_iter()
        .map(|i| {
            let pi = permutation(seed, i, n);
            let yp = DVector::from_fn(n, |r, _| yc[pi[r]]);
            usize::from(yp.dot(&(&k * &yp)) / yy >= statistic - tol)
        })
        .sum();
    Ok(KernelTestResult {
        statistic,
        p_value: (1 + exceed) as f64 / (1 + b) as f64,
        n_permutations: b,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SymEigen;
    use crate::testutil::{random_matrix, random_spd, random_vector, rng};

    #[test]
    fn krv_of_matching_kernels_is_one() {
        let mut r = rng(51);
        let ks = random_spd(8, &mut r);
        let kx = ks.clone().try_inverse().unwrap();
        let res = krv(&kx, &ks, 99, 1).unwrap();
        assert!((res.statistic - 1.0).abs() < 1e-10);
        assert!((res.p_value - 0.01).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_ranges_give_zero() {
        let a = DVector::from_vec(vec![1.0, -1.0, 0.0, 0.0]);
        let b = DVector::from_vec(vec![0.0, 0.0, 1.0, -1.0]);
        let rv = rv_coefficient(&(&a * a.transpose()), &(&b * b.transpose())).unwrap();
        assert!(rv.abs() < 1e-15);
        let ones = DMatrix::from_element(4, 4, 1.0);
        assert_eq!(
            rv_coefficient(&gower_center(&ones), &(&a * a.transpose())),
            Err(GmdError::ZeroCenteredKernel)
        );
    }

    #[test]
    fn krv_is_scale_invariant_and_reproducible() {
        let mut r = rng(52);
        let x = random_matrix(10, 4, &mut r);
        let kx = &x * x.transpose();
        let ks = random_spd(10, &mut r);
        let a = krv(&kx, &ks, 199, 7).unwrap();
        let b = krv(&(&kx * 3.0), &(&ks * 0.2), 199, 7).unwrap();
        assert!((a.statistic - b.statistic).abs() < 1e-12);
        assert_eq!(a.p_value, b.p_value);
        assert_eq!(a, krv(&kx, &ks, 199, 7).unwrap());
    }

    #[test]
    fn krv_permutation_matches_explicit_relabelling() {
        let mut r = rng(53);
        let x = random_matrix(6, 3, &mut r);
        let kx = &x * x.transpose();
        let ks = random_spd(6, &mut r);
        let ax = gower_center(&kx);
        let as_ = gower_center(&ks.clone().try_inverse().unwrap());
        let t = rv_coefficient(&ax, &as_).unwrap();
        let mut exceed = 0;
        for i in 0..50 {
            let pi = permutation(3, i, 6);
            let permuted = DMatrix::from_fn(6, 6, |a, b| as_[(pi[a], pi[b])]);
            if rv_coefficient(&ax, &permuted).unwrap() >= t - 1e-12 * t.abs() {
                exceed += 1;
            }
        }
        let res = krv(&kx, &ks, 50, 3).unwrap();
        assert_eq!(res.p_value, (1 + exceed) as f64 / 51.0);
    }

    #[test]
    fn mirkat_eigen_alignment() {
        let mut r = rng(54);
        let ks = random_spd(100, &mut r);
        let k = gower_center(&ks.clone().try_inverse().unwrap());
        let eig = SymEigen::new(&k);
        let y = eig.vectors.column(0).into_owned();
        let res = mirkat(&y, &ks, 999, 5).unwrap();
        assert!((res.statistic - eig.values[0]).abs() < 1e-8 * eig.values[0]);
        assert!((res.p_value - 1.0 / 1000.0).abs() < 1e-15);
    }

    #[test]
    fn mirkat_rejects_bad_input() {
        let mut r = rng(55);
        let ks = random_spd(5, &mut r);
        let y = random_vector(5, &mut r);
        assert!(mirkat(&y, &ks, 0, 1).is_err());
        assert_eq!(
            mirkat(&DVector::from_element(5, 2.0), &ks, 10, 1),
            Err(GmdError::ConstantResponse)
        );
    }

    #[test]
    fn decision_rules() {
        let sig = KernelTestResult { statistic: 1.0, p_value: 0.01, n_permutations: 99, seed: 0 };
        let not = KernelTestResult { p_value: 0.2, ..sig.clone() };
        assert!(column_structure_informative(&sig, 0.05));
        assert!(row_structure_informative(&sig, &sig, 0.05));
        assert!(!row_structure_informative(&sig, &not, 0.05));
    }
}
