//! Noise variance via the organic lasso,
//! `min_β (1/n)‖ỹ − X̌β‖² + 2λ_o‖β‖₁²`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::initial::RotatedDesign;
use super::lasso;
use crate::dataset::TwoWayDataset;
use crate::error::{GmdError, Result};
use crate::estimators::fold_assignment;
use crate::linalg::{select_entries, select_rows};

const BISECTION_RTOL: f64 = 1e-8;
const MAX_BISECTIONS: usize = 200;
const CV_GRID_POINTS: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum SigmaMethod {
    /// `λ_o = log p / n`
    FixedRate,
    /// Averages σ̂² over `fits` cross-validated choices of `λ_o`.
    CvAverage { fits: usize, folds: usize, seed: u64 },
}

impl Default for SigmaMethod {
    fn default() -> Self {
        SigmaMethod::FixedRate
    }
}

pub fn organic_rate(n: usize, p: usize) -> f64 {
    (p as f64).ln().max(0.0) / n as f64
}

#[derive(Debug, Clone)]
pub struct OrganicFit {
    pub beta: DVector<f64>,
    pub objective: f64,
}

pub fn organic_objective(x: &DMatrix<f64>, y: &DVector<f64>, lambda_o: f64, beta: &DVector<f64>) -> f64 {
    let n = x.nrows() as f64;
    let l1 = beta.iter().map(|b| b.abs()).sum::<f64>();
    (y - x * beta).norm_squared() / n + 2.0 * lambda_o * l1 * l1
}

/// Stationarity of the squared-ℓ1 problem is that of an ordinary lasso
/// `(1/n)‖r‖² + μ‖β‖₁` at the fixed point `μ = 4λ_o‖β(μ)‖₁`. The map
/// `μ ↦ μ − 4λ_o‖β(μ)‖₁` is increasing, so the root is bracketed and
/// bisected on a log scale.
pub fn organic_lasso(x: &DMatrix<f64>, y: &DVector<f64>, lambda_o: f64) -> Result<OrganicFit> {
    let (n, p) = (x.nrows(), x.ncols());
    if !(lambda_o > 0.0) || !lambda_o.is_finite() {
        return Err(GmdError::param("lambda_o", "must be positive and finite"));
    }
    let mu_max = 2.0 / n as f64 * x.tr_mul(y).amax();
    let zero = DVector::zeros(p);
    if mu_max == 0.0 {
        return Ok(OrganicFit {
            objective: organic_objective(x, y, lambda_o, &zero),
            beta: zero,
        });
    }
    let half_n = 0.5 * n as f64;
    let solve_at = |mu: f64, warm: &DVector<f64>| -> Result<DVector<f64>> {
        let pen = vec![half_n * mu; p];
        Ok(lasso::solve(x, y, &pen, Some(warm), 1e-10, lasso::DEFAULT_MAX_SWEEPS)?.coef)
    };
    let gap = |mu: f64, b: &DVector<f64>| mu - 4.0 * lambda_o * b.lp_norm(1);

    // walk down from μ_max along a warm-started path until the gap turns
    // negative, which brackets the root
    let mut hi = mu_max;
    let mut b_hi = zero.clone();
    let mut lo = mu_max * 0.5;
    let mut b_lo = solve_at(lo, &zero)?;
    while gap(lo, &b_lo) >= 0.0 {
        if lo < mu_max * 1e-12 {
            return Ok(OrganicFit {
                objective: organic_objective(x, y, lambda_o, &b_lo),
                beta: b_lo,
            });
        }
        hi = lo;
        b_hi = b_lo.clone();
        lo *= 0.5;
        b_lo = solve_at(lo, &b_hi)?;
    }
    let mut iters = 0;
    while hi - lo > BISECTION_RTOL * hi && iters < MAX_BISECTIONS {
        let mid = (lo * hi).sqrt();
        let b = solve_at(mid, &b_lo)?;
        if gap(mid, &b) < 0.0 {
            lo = mid;
            b_lo = b;
        } else {
            hi = mid;
            b_hi = b;
        }
        iters += 1;
    }
    let (f_lo, f_hi) = (
        organic_objective(x, y, lambda_o, &b_lo),
        organic_objective(x, y, lambda_o, &b_hi),
    );
    let (beta, objective) = if f_lo <= f_hi { (b_lo, f_lo) } else { (b_hi, f_hi) };
    Ok(OrganicFit { beta, objective })
}

pub fn estimate_sigma2(data: &TwoWayDataset) -> Result<f64> {
    estimate_sigma2_with(data, SigmaMethod::FixedRate)
}

pub fn estimate_sigma2_with(data: &TwoWayDataset, method: SigmaMethod) -> Result<f64> {
    let rd = RotatedDesign::new(data)?;
    sigma2_from_rotated(&rd, method)
}

pub fn sigma2_from_rotated(rd: &RotatedDesign, method: SigmaMethod) -> Result<f64> {
    if rd.y.iter().all(|&v| v == 0.0) {
        return Err(GmdError::DegenerateNoise);
    }
    let x = rd.organic_design();
    let (n, p) = (rd.n(), rd.p());
    let base = organic_rate(n, p);
    let sigma2 = match method {
        SigmaMethod::FixedRate => organic_lasso(&x, &rd.y, base)?.objective,
        SigmaMethod::CvAverage { fits, folds, seed } => {
            if fits == 0 || folds < 2 || folds > n {
                return Err(GmdError::param("sigma cv", "need fits ≥ 1 and 2 ≤ folds ≤ n"));
            }
            let mut total = 0.0;
            for m in 0..fits {
                let lam = cv_lambda(&x, &rd.y, base, folds, seed.wrapping_add(m as u64))?;
                total += organic_lasso(&x, &rd.y, lam)?.objective;
            }
            total / fits as f64
        }
    };
    if !(sigma2 > 0.0) {
        return Err(GmdError::DegenerateNoise);
    }
    Ok(sigma2)
}

fn cv_lambda(x: &DMatrix<f64>, y: &DVector<f64>, base: f64, folds: usize, seed: u64) -> Result<f64> {
    let grid: Vec<f64> = (0..CV_GRID_POINTS)
        .map(|i| base * 10f64.powf(-2.0 + 3.0 * i as f64 / (CV_GRID_POINTS - 1) as f64))
        .collect();
    let parts = fold_assignment(x.nrows(), folds, seed);
    let mut err = vec![0.0; grid.len()];
    for test in &parts {
        let train: Vec<usize> = (0..x.nrows()).filter(|i| !test.contains(i)).collect();
        let (xt, yt) = (select_rows(x, &train), select_entries(y, &train));
        let (xv, yv) = (select_rows(x, test), select_entries(y, test));
        for (g, lam) in grid.iter().enumerate() {
            let fit = organic_lasso(&xt, &yt, *lam)?;
            err[g] += (&yv - &xv * &fit.beta).norm_squared();
        }
    }
    let best = (0..grid.len())
        .fold(0, |b, g| if err[g] < err[b] { g } else { b });
    Ok(grid[best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_matrix, random_vector, rng};
    use rand_distr::{Distribution, StandardNormal};

    fn brute_force(x: &DMatrix<f64>, y: &DVector<f64>, lambda_o: f64) -> f64 {
        // proximal gradient on the squared-ℓ1 problem using the prox of t‖·‖₁²
        let n = x.nrows() as f64;
        let l = 2.0 / n * crate::linalg::SymEigen::new(&(x.transpose() * x)).values[0];
        let step = 1.0 / l;
        let mut b = DVector::zeros(x.ncols());
        for _ in 0..200_000 {
            let g = x.tr_mul(&(x * &b - y)) * (2.0 / n);
            let v = &b - g * step;
            b = prox_sq_l1(&v, 2.0 * lambda_o * step);
        }
        organic_objective(x, y, lambda_o, &b)
    }

    /// argmin ½‖b − v‖² + t‖b‖₁²: soft threshold at 2t‖b‖₁, solved by
    /// scanning the sorted magnitudes.
    fn prox_sq_l1(v: &DVector<f64>, t: f64) -> DVector<f64> {
        let mut a: Vec<f64> = v.iter().map(|x| x.abs()).collect();
        a.sort_by(|x, y| y.partial_cmp(x).unwrap());
        let mut thr = 0.0;
        let mut cum = 0.0;
        for (k, ak) in a.iter().enumerate() {
            cum += ak;
            let cand = 2.0 * t * cum / (1.0 + 2.0 * t * (k + 1) as f64);
            if *ak > cand {
                thr = cand;
            }
        }
        v.map(|x| x.signum() * (x.abs() - thr).max(0.0))
    }

    #[test]
    fn matches_brute_force_objective() {
        let mut r = rng(21);
        let x = random_matrix(30, 6, &mut r);
        let y = random_vector(30, &mut r) + &x.column(0) * 2.0;
        let lam = 0.05;
        let fit = organic_lasso(&x, &y, lam).unwrap();
        let slow = brute_force(&x, &y, lam);
        assert!(fit.objective <= slow + 1e-9, "{} vs {slow}", fit.objective);
        assert!((fit.objective - slow).abs() < 1e-7 * slow);
    }

    #[test]
    fn orthogonal_columns_give_mean_square() {
        let x = DMatrix::from_row_slice(4, 1, &[1.0, -1.0, 0.0, 0.0]);
        let y = DVector::from_vec(vec![0.0, 0.0, 1.0, 2.0]);
        let fit = organic_lasso(&x, &y, 0.1).unwrap();
        assert!((fit.objective - 5.0 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn zero_response_is_an_error() {
        let mut r = rng(22);
        let data = TwoWayDataset::plain(random_matrix(10, 3, &mut r), Some(DVector::zeros(10))).unwrap();
        assert_eq!(estimate_sigma2(&data), Err(GmdError::DegenerateNoise));
    }

    #[test]
    fn scale_equivariance() {
        let mut r = rng(23);
        let x = random_matrix(40, 8, &mut r);
        let y = random_vector(40, &mut r) + &x.column(1);
        let a = TwoWayDataset::plain(x.clone(), Some(y.clone())).unwrap();
        let b = TwoWayDataset::plain(x, Some(y * 3.0)).unwrap();
        let (sa, sb) = (estimate_sigma2(&a).unwrap(), estimate_sigma2(&b).unwrap());
        assert!((sb / sa - 9.0).abs() < 1e-6);
    }

    #[test]
    fn pure_noise_accuracy() {
        let mut good = 0;
        for seed in 0..40 {
            let mut r = rng(1000 + seed);
            let x = random_matrix(500, 10, &mut r);
            let y = DVector::from_fn(500, |_, _| StandardNormal.sample(&mut r));
            let data = TwoWayDataset::plain(x, Some(y)).unwrap();
            let s = estimate_sigma2(&data).unwrap();
            good += usize::from((s - 1.0).abs() < 0.2);
        }
        assert!(good >= 36);
    }

    #[test]
    fn cv_average_is_deterministic() {
        let mut r = rng(24);
        let x = random_matrix(30, 5, &mut r);
        let y = random_vector(30, &mut r);
        let data = TwoWayDataset::plain(x, Some(y)).unwrap();
        let m = SigmaMethod::CvAverage { fits: 3, folds: 5, seed: 9 };
        let a = estimate_sigma2_with(&data, m).unwrap();
        assert_eq!(a, estimate_sigma2_with(&data, m).unwrap());
        assert!(a > 0.0);
    }
}
