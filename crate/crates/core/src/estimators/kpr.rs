use nalgebra::{Cholesky, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dual::DualFit;
use super::weights::{estimate_from_weights, GmdEstimate, WeightSpec};
use crate::dataset::TwoWayDataset;
use crate::error::{GmdError, Result};
use crate::gmd::{gmd, GmdFactors};
use crate::linalg::{principal_submatrix, Whitener};

pub const DEFAULT_CV_FOLDS: usize = 10;
pub const ETA_GRID_POINTS: usize = 50;

/// Shrinkage parameter of kernel penalized regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaChoice {
    Fixed(f64),
    /// k-fold cross-validation over [`eta_grid`].
    Cv { folds: usize, seed: u64 },
}

impl Default for EtaChoice {
    fn default() -> Self {
        EtaChoice::Cv {
            folds: DEFAULT_CV_FOLDS,
            seed: 0,
        }
    }
}

/// 50 log-spaced values in `[1e-4·σ₁², 1e2·σ₁²]`.
pub fn eta_grid(sigma1: f64) -> Vec<f64> {
    let s2 = sigma1 * sigma1;
    let (lo, hi) = ((1e-4 * s2).ln(), (1e2 * s2).ln());
    (0..ETA_GRID_POINTS)
        .map(|i| (lo + (hi - lo) * i as f64 / (ETA_GRID_POINTS - 1) as f64).exp())
        .collect()
}

/// `β = Q Xᵀ (X Q Xᵀ + η H⁻¹)⁻¹ y`, computed as
/// `α = L (Lᵀ X Q Xᵀ L + η I)⁻¹ Lᵀ y` with `H = L Lᵀ`.
pub fn kpr_dual_solve(data: &TwoWayDataset, eta: f64) -> Result<DVector<f64>> {
    let y = data.response()?;
    let wh = Whitener::new(&data.h, "H")?;
    let xq = &data.x * &data.q;
    let gram = &xq * data.x.transpose();
    let mut sys = wh.congruence(&gram);
    for i in 0..sys.nrows() {
        sys[(i, i)] += eta;
    }
    let rhs = wh.lt_mul_vec(y);
    let inner = Cholesky::new((&sys + sys.transpose()) * 0.5)
        .map(|c| c.solve(&rhs))
        .ok_or(GmdError::SingularDualSystem { eta })?;
    let alpha = match &wh {
        Whitener::Identity(_) => inner,
        Whitener::Factor(l) => l * inner,
    };
    Ok(xq.tr_mul(&alpha))
}

pub fn fit_kpr(data: &TwoWayDataset, eta: EtaChoice) -> Result<GmdEstimate> {
    let factors = gmd(data, None)?;
    fit_kpr_with(data, &factors, eta)
}

/// KPR with precomputed factors. The coefficients come from the dual solve;
/// at `η = 0` with full column rank the dual system is singular whenever
/// `p < n`, so the `η → 0⁺` limit (all weights one) is used instead.
pub fn fit_kpr_with(
    data: &TwoWayDataset,
    factors: &GmdFactors,
    eta: EtaChoice,
) -> Result<GmdEstimate> {
    let eta = match eta {
        EtaChoice::Fixed(e) => e,
        EtaChoice::Cv { folds, seed } => cv_eta(data, factors.sigma[0], folds, seed)?,
    };
    let weight = WeightSpec::ridge(&factors.sigma, eta)?;
    if eta == 0.0 && factors.rank() == data.p() {
        return estimate_from_weights(data, factors, weight, None);
    }
    if eta == 0.0 && factors.rank() < data.n() {
        return Err(GmdError::SingularDualSystem { eta });
    }
    let beta = kpr_dual_solve(data, eta)?;
    let mut est = estimate_from_weights(data, factors, weight, None)?;
    est.fitted = (&data.x * &beta).as_slice().to_vec();
    est.beta = beta.as_slice().to_vec();
    Ok(est)
}

/// Contiguous folds over a seeded shuffle of `0..n`.
pub(crate) fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = n / folds;
    let extra = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        out.push(idx[start..start + len].to_vec());
        start += len;
    }
    out
}

/// Held-out H-norm prediction error summed over folds, minimized over the
/// grid (first minimum wins).
fn cv_eta(data: &TwoWayDataset, sigma1: f64, folds: usize, seed: u64) -> Result<f64> {
    let n = data.n();
    if folds < 2 || folds > n {
        return Err(GmdError::param("folds", format!("must lie in 2..={n}")));
    }
    let y = data.response()?;
    let grid = eta_grid(sigma1);
    let gram = &data.x * &data.q * data.x.transpose();
    let mut err = vec![0.0; grid.len()];
    for test in fold_assignment(n, folds, seed) {
        let mut is_test = vec![false; n];
        for &i in &test {
            is_test[i] = true;
        }
        let train: Vec<usize> = (0..n).filter(|&i| !is_test[i]).collect();
        let fit = DualFit::new(&gram, &data.h, y, &train)?;
        let h_te = principal_submatrix(&data.h, &test);
        let contrib: Vec<DVector<f64>> =
            test.iter().map(|&i| fit.contributions(&gram, i)).collect();
        for (g, &eta) in grid.iter().enumerate() {
            let resid = DVector::from_fn(test.len(), |t, _| {
                let pred: f64 = contrib[t]
                    .iter()
                    .zip(fit.lambda())
                    .map(|(c, l)| c * l / (l + eta))
                    .sum();
                y[test[t]] - fit.y_mean() - pred
            });
            err[g] += resid.dot(&(&h_te * &resid));
        }
    }
    let mut best = 0;
    for g in 1..grid.len() {
        if err[g] < err[best] {
            best = g;
        }
    }
    Ok(grid[best])
}
