//! Sample-space (n×n) form of the GMD used when the same design is refit
//! on many row subsets (cross-validation, leave-one-out).
//!
//! With `M = X Q Xᵀ` and `H_T = L Lᵀ` on the training rows, the whitened
//! Gram `Lᵀ M_c L = Ũ Λ Ũᵀ` gives `U = L^{-T} Ũ` and `σ² = Λ`. Any family
//! member then predicts a row `k` as
//! `ȳ + M_c[k, T] L Ũ diag(w / λ) Ũᵀ Lᵀ y_c`.

use nalgebra::{DMatrix, DVector};

use crate::dataset::centering_weights;
use crate::error::{GmdError, Result};
use crate::linalg::{principal_submatrix, select_entries, SymEigen, Whitener};

/// Relative eigenvalue cutoff on `σ²` for the sample-space decomposition.
pub const DUAL_RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct DualFit {
    train: Vec<usize>,
    /// `σ_j²`, nonincreasing.
    lambda: Vec<f64>,
    /// `Ũᵀ Lᵀ y_c`, i.e. `u_jᵀ H y_c`.
    proj: DVector<f64>,
    /// `L Ũ` (|T|×K).
    lu: DMatrix<f64>,
    /// Centering pieces of `M`: `a = M w`, `b = wᵀ M w`.
    a: DVector<f64>,
    b: f64,
    y_mean: f64,
    y_h2: f64,
}

impl DualFit {
    /// `gram` is the full `X Q Xᵀ`, `h` the full row kernel and `y` the
    /// full response; only rows in `train` are used for fitting.
    pub fn new(
        gram: &DMatrix<f64>,
        h: &DMatrix<f64>,
        y: &DVector<f64>,
        train: &[usize],
    ) -> Result<Self> {
        if train.len() < 2 {
            return Err(GmdError::param("train", "need at least two training rows"));
        }
        let h_t = principal_submatrix(h, train);
        let w = centering_weights(&h_t)?;
        let y_t = select_entries(y, train);
        let y_mean = w.dot(&y_t);
        let y_c = y_t.add_scalar(-y_mean);

        let n = gram.nrows();
        let a = DVector::from_fn(n, |k, _| {
            train.iter().zip(w.iter()).map(|(&l, wl)| gram[(k, l)] * wl).sum()
        });
        let b: f64 = train.iter().zip(w.iter()).map(|(&l, wl)| a[l] * wl).sum();
        let m_c = DMatrix::from_fn(train.len(), train.len(), |r, c| {
            let (k, l) = (train[r], train[c]);
            gram[(k, l)] - a[k] - a[l] + b
        });

        let wh = Whitener::new(&h_t, "H")?;
        let eig = SymEigen::new(&wh.congruence(&m_c));
        let top = eig.values[0];
        if !(top > 0.0) {
            return Err(GmdError::param("X", "training design has rank zero"));
        }
        let k = eig
            .values
            .iter()
            .take_while(|&&v| v > DUAL_RANK_TOL * top)
            .count();
        let ut = eig.vectors.columns(0, k).into_owned();
        let lty = wh.lt_mul_vec(&y_c);
        let proj = ut.tr_mul(&lty);
        let lu = wh.l_mul(&ut);
        Ok(DualFit {
            train: train.to_vec(),
            lambda: eig.values.iter().take(k).copied().collect(),
            proj,
            lu,
            a,
            b,
            y_mean,
            y_h2: lty.norm_squared(),
        })
    }

    pub fn rank(&self) -> usize {
        self.lambda.len()
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.lambda.iter().map(|l| l.sqrt()).collect()
    }

    pub fn gamma(&self) -> Vec<f64> {
        self.lambda
            .iter()
            .zip(self.proj.iter())
            .map(|(l, p)| p / l.sqrt())
            .collect()
    }

    /// `‖y_c‖²_H` on the training rows.
    pub fn y_h2(&self) -> f64 {
        self.y_h2
    }

    pub fn n_train(&self) -> usize {
        self.train.len()
    }

    /// Per-component contributions `r_kj` such that the centered prediction
    /// at row `k` is `Σ_j r_kj · w_j`.
    pub fn contributions(&self, gram: &DMatrix<f64>, row: usize) -> DVector<f64> {
        let mrow = DVector::from_fn(self.train.len(), |c, _| {
            let l = self.train[c];
            gram[(row, l)] - self.a[row] - self.a[l] + self.b
        });
        let r = self.lu.tr_mul(&mrow);
        DVector::from_fn(self.rank(), |j, _| r[j] * self.proj[j] / self.lambda[j])
    }

    pub fn predict(&self, gram: &DMatrix<f64>, row: usize, weights: &[f64]) -> f64 {
        let c = self.contributions(gram, row);
        self.y_mean + c.iter().zip(weights).map(|(c, w)| c * w).sum::<f64>()
    }

    pub fn y_mean(&self) -> f64 {
        self.y_mean
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{center_hq, TwoWayDataset};
    use crate::estimators::{fit_gmdr, fit_kpr, EtaChoice};
    use crate::linalg::select_rows;
    use crate::testutil::{random_matrix, random_spd, random_vector, rng};

    #[test]
    fn matches_primal_decomposition_on_all_rows() {
        let mut r = rng(31);
        let (n, p) = (9, 14);
        let data = center_hq(
            &TwoWayDataset::new(
                random_matrix(n, p, &mut r),
                random_spd(n, &mut r),
                random_spd(p, &mut r),
                Some(random_vector(n, &mut r)),
            )
            .unwrap(),
        )
        .unwrap();
        let gram = &data.x * &data.q * data.x.transpose();
        let all: Vec<usize> = (0..n).collect();
        let fit = DualFit::new(&gram, &data.h, data.y.as_ref().unwrap(), &all).unwrap();
        let est = fit_gmdr(&data, Some(&[0, 1, 2])).unwrap();
        assert_eq!(fit.rank(), est.factors.rank());
        for (a, b) in fit.sigma().iter().zip(&est.factors.sigma) {
            assert!((a - b).abs() < 1e-8 * b);
        }
        for (a, b) in fit.gamma().iter().zip(&est.gamma_hat) {
            assert!((a.abs() - b.abs()).abs() < 1e-8 * (1.0 + b.abs()));
        }
        let w = est.weight.weights.clone();
        for i in 0..n {
            let pred = fit.predict(&gram, i, &w);
            assert!((pred - est.fitted[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn subset_prediction_matches_refit() {
        let mut r = rng(32);
        let (n, p) = (10, 6);
        let x = random_matrix(n, p, &mut r);
        let h = random_spd(n, &mut r);
        let q = random_spd(p, &mut r);
        let y = random_vector(n, &mut r);
        let gram = &x * &q * x.transpose();
        let train: Vec<usize> = (0..n).filter(|&i| i != 3).collect();
        let fit = DualFit::new(&gram, &h, &y, &train).unwrap();
        let eta = 0.7;
        let w: Vec<f64> = fit.lambda().iter().map(|l| l / (l + eta)).collect();
        let pred = fit.predict(&gram, 3, &w);

        let sub = TwoWayDataset::new(
            select_rows(&x, &train),
            principal_submatrix(&h, &train),
            q.clone(),
            Some(select_entries(&y, &train)),
        )
        .unwrap();
        let wts = centering_weights(&sub.h).unwrap();
        let means = sub.x.tr_mul(&wts);
        let c = center_hq(&sub).unwrap();
        let est = fit_kpr(&c, EtaChoice::Fixed(eta)).unwrap();
        let xi = x.row(3).transpose() - means;
        let direct = wts.dot(sub.y.as_ref().unwrap()) + xi.dot(&est.beta_vec());
        assert!((pred - direct).abs() < 1e-9);
    }
}
