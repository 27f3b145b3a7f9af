use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::weights::{estimate_from_weights, GmdEstimate, WeightSpec};
use crate::dataset::TwoWayDataset;
use crate::error::{GmdError, Result};
use crate::gmd::{gmd, GmdFactors};
use crate::linalg::h_norm2;

/// Components explaining less than this share of `Σσ²` are never selected.
pub const DEFAULT_MIN_VAR_FRAC: f64 = 0.001;

/// `γ̂ = S⁻¹ Uᵀ H y`, the H-weighted least-squares coefficients of `y` on
/// the components `ν_j = u_j σ_j`.
pub fn fit_gamma(factors: &GmdFactors, h: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if y.len() != factors.u.nrows() {
        return Err(GmdError::dims("y", factors.u.nrows(), y.len()));
    }
    let proj = factors.u.tr_mul(&(h * y));
    Ok(DVector::from_fn(factors.rank(), |j, _| proj[j] / factors.sigma[j]))
}

/// `VI_j = σ_j² γ̂_j²`
pub fn vi_scores(factors: &GmdFactors, gamma: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(factors.rank(), |j, _| {
        let s = factors.sigma[j];
        s * s * gamma[j] * gamma[j]
    })
}

/// How the index set `I` of a GMD regression is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum ComponentSelection {
    /// Explicit zero-based component indices.
    Given(Vec<usize>),
    /// Order by VI score, choose the prefix length by GCV.
    Vi { min_var_frac: f64 },
    /// Order by GMD value, choose the prefix length by GCV.
    Top { min_var_frac: f64 },
    /// The first `k` components, no data-driven choice.
    FixedTopK(usize),
}

impl Default for ComponentSelection {
    fn default() -> Self {
        ComponentSelection::Vi {
            min_var_frac: DEFAULT_MIN_VAR_FRAC,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    /// Selected components, zero-based, in selection order.
    pub selected: Vec<usize>,
    /// Candidate order the GCV path was evaluated along.
    pub order: Vec<usize>,
    /// `GCV(k)` for `k = 1..=path.len()`.
    pub gcv_path: Vec<f64>,
}

/// Drops low-variance components, orders the survivors by VI (or by σ when
/// `by_vi` is false) and picks the GCV-minimizing prefix.
///
/// `y_h2` is `‖y‖²_H` and `n` the number of samples. Ties in VI fall back to
/// the larger σ, then the lower index; ties in GCV to the smaller `k`.
pub fn select_from_scores(
    sigma: &[f64],
    gamma: &[f64],
    y_h2: f64,
    n: usize,
    min_var_frac: f64,
    by_vi: bool,
) -> Result<Selection> {
    if sigma.is_empty() {
        return Err(GmdError::param("rank", "no components to select from"));
    }
    if !(0.0..1.0).contains(&min_var_frac) {
        return Err(GmdError::param("min_var_frac", "must lie in [0, 1)"));
    }
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    let vi: Vec<f64> = sigma
        .iter()
        .zip(gamma)
        .map(|(s, g)| s * s * g * g)
        .collect();
    let mut order: Vec<usize> = (0..sigma.len())
        .filter(|&j| sigma[j] * sigma[j] / total >= min_var_frac)
        .collect();
    if order.is_empty() {
        return Err(GmdError::param(
            "min_var_frac",
            "every component falls below the variance cutoff",
        ));
    }
    if by_vi {
        order.sort_by(|&a, &b| {
            vi[b]
                .partial_cmp(&vi[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(sigma[b].partial_cmp(&sigma[a]).unwrap_or(std::cmp::Ordering::Equal))
                .then(a.cmp(&b))
        });
    }
    let gcv_path = gcv_path_for_order(&vi, &order, y_h2, n);
    if gcv_path.is_empty() {
        return Err(GmdError::param("n", "need at least two samples for GCV"));
    }
    let mut best = 0;
    for k in 1..gcv_path.len() {
        if gcv_path[k] < gcv_path[best] {
            best = k;
        }
    }
    Ok(Selection {
        selected: order[..=best].to_vec(),
        order,
        gcv_path,
    })
}

/// `GCV(k) = ‖(I − G(k)) y‖²_H / (n − k)²` along a candidate order, using
/// `‖(I − G(k)) y‖²_H = ‖y‖²_H − Σ_{i≤k} VI_{j_i}`. The path stops at
/// `k = n − 1`.
pub fn gcv_path_for_order(vi: &[f64], order: &[usize], y_h2: f64, n: usize) -> Vec<f64> {
    let kmax = order.len().min(n.saturating_sub(1));
    let mut explained = 0.0;
    (1..=kmax)
        .map(|k| {
            explained += vi[order[k - 1]];
            let rss = (y_h2 - explained).max(0.0);
            let dof = (n - k) as f64;
            rss / (dof * dof)
        })
        .collect()
}

/// Index set for `factors` under the default VI rule.
pub fn select_components(
    factors: &GmdFactors,
    h: &DMatrix<f64>,
    y: &DVector<f64>,
    min_var_frac: f64,
) -> Result<Selection> {
    let gamma = fit_gamma(factors, h, y)?;
    select_from_scores(
        &factors.sigma,
        gamma.as_slice(),
        h_norm2(y, h),
        y.len(),
        min_var_frac,
        true,
    )
}

/// GMD regression. With `selected = None` the index set is chosen by the
/// VI + GCV rule.
pub fn fit_gmdr(data: &TwoWayDataset, selected: Option<&[usize]>) -> Result<GmdEstimate> {
    let factors = gmd(data, None)?;
    let selection = match selected {
        Some(idx) => ComponentSelection::Given(idx.to_vec()),
        None => ComponentSelection::default(),
    };
    fit_gmdr_with(data, &factors, &selection)
}

pub fn fit_gmdr_with(
    data: &TwoWayDataset,
    factors: &GmdFactors,
    selection: &ComponentSelection,
) -> Result<GmdEstimate> {
    let y = data.response()?;
    let rank = factors.rank();
    let (weight, path) = match selection {
        ComponentSelection::Given(idx) => (WeightSpec::index_set(rank, idx)?, None),
        ComponentSelection::FixedTopK(k) => {
            if *k == 0 || *k > rank {
                return Err(GmdError::InvalidIndexSet {
                    index: *k,
                    rank,
                });
            }
            let idx: Vec<usize> = (0..*k).collect();
            (WeightSpec::index_set(rank, &idx)?, None)
        }
        ComponentSelection::Vi { min_var_frac } | ComponentSelection::Top { min_var_frac } => {
            let gamma = fit_gamma(factors, &data.h, y)?;
            let sel = select_from_scores(
                &factors.sigma,
                gamma.as_slice(),
                h_norm2(y, &data.h),
                y.len(),
                *min_var_frac,
                matches!(selection, ComponentSelection::Vi { .. }),
            )?;
            (WeightSpec::index_set(rank, &sel.selected)?, Some(sel.gcv_path))
        }
    };
    estimate_from_weights(data, factors, weight, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::center_hq;
    use crate::testutil::{random_matrix, random_spd, random_vector, rng};

    fn random_data(n: usize, p: usize, seed: u64) -> TwoWayDataset {
        let mut r = rng(seed);
        let x = random_matrix(n, p, &mut r);
        let h = random_spd(n, &mut r);
        let q = random_spd(p, &mut r);
        let y = random_vector(n, &mut r);
        center_hq(&TwoWayDataset::new(x, h, q, Some(y)).unwrap()).unwrap()
    }

    #[test]
    fn gamma_of_single_component_is_unit_vector() {
        let data = random_data(8, 5, 1);
        let f = gmd(&data, None).unwrap();
        let y = f.u.column(1) * f.sigma[1];
        let g = fit_gamma(&f, &data.h, &y).unwrap();
        for j in 0..f.rank() {
            let expect = if j == 1 { 1.0 } else { 0.0 };
            assert!((g[j] - expect).abs() < 1e-10);
        }
        let vi = vi_scores(&f, &g);
        assert!((vi[1] - f.sigma[1].powi(2)).abs() < 1e-9);
        assert!(vi.iter().enumerate().all(|(j, v)| j == 1 || v.abs() < 1e-12));
    }

    #[test]
    fn gamma_zero_for_h_orthogonal_response() {
        let data = random_data(8, 3, 2);
        let f = gmd(&data, None).unwrap();
        // remove the H-projection onto span(U)
        let mut r = rng(99);
        let y0 = random_vector(8, &mut r);
        let y = &y0 - &f.u * f.u.tr_mul(&(&data.h * &y0));
        let g = fit_gamma(&f, &data.h, &y).unwrap();
        assert!(g.amax() < 1e-10);
        assert!(vi_scores(&f, &g).amax() < 1e-18);
    }

    #[test]
    fn gamma_matches_weighted_normal_equations() {
        let data = random_data(9, 4, 3);
        let f = gmd(&data, None).unwrap();
        let y = data.y.clone().unwrap();
        let ups = f.components();
        let lhs = ups.transpose() * &data.h * &ups;
        let rhs = ups.transpose() * &data.h * &y;
        let direct = lhs.lu().solve(&rhs).unwrap();
        let g = fit_gamma(&f, &data.h, &y).unwrap();
        assert!((g - direct).norm() < 1e-9);
    }

    #[test]
    fn vi_sum_is_r_squared() {
        let data = random_data(10, 6, 4);
        let f = gmd(&data, None).unwrap();
        let y = data.y.clone().unwrap();
        let g = fit_gamma(&f, &data.h, &y).unwrap();
        let vi = vi_scores(&f, &g);
        let fitted = f.components() * &g;
        let r2 = h_norm2(&fitted, &data.h) / h_norm2(&y, &data.h);
        assert!((vi.sum() / h_norm2(&y, &data.h) - r2).abs() < 1e-10);
    }

    #[test]
    fn perfect_single_component_fit() {
        let data = random_data(12, 3, 5);
        let f = gmd(&data, None).unwrap();
        let y = f.u.column(1) * f.sigma[1];
        let sel = select_components(&f, &data.h, &y, 0.0).unwrap();
        assert_eq!(sel.selected, vec![1]);
        assert!(sel.gcv_path[0].abs() < 1e-12 * h_norm2(&y, &data.h));
    }

    #[test]
    fn gcv_minimum_and_brute_force_hat_matrices() {
        for seed in 0..10 {
            let data = random_data(14, 6, 100 + seed);
            let f = gmd(&data, None).unwrap();
            let y = data.y.clone().unwrap();
            let sel = select_components(&f, &data.h, &y, 0.0).unwrap();
            let best = sel.gcv_path[sel.selected.len() - 1];
            assert!(sel.gcv_path.iter().all(|&g| best <= g));
            // explicit G(k) = Υ_I (Υ_Iᵀ H Υ_I)⁻¹ Υ_Iᵀ H
            let ups = f.components();
            let n = y.len();
            for k in 1..=sel.gcv_path.len() {
                let cols: Vec<usize> = sel.order[..k].to_vec();
                let sub = DMatrix::from_fn(n, k, |i, c| ups[(i, cols[c])]);
                let inner = (sub.transpose() * &data.h * &sub).try_inverse().unwrap();
                let g = &sub * inner * sub.transpose() * &data.h;
                let resid = (DMatrix::identity(n, n) - g) * &y;
                let gcv = h_norm2(&resid, &data.h) / ((n - k) as f64).powi(2);
                assert!((gcv - sel.gcv_path[k - 1]).abs() < 1e-9 * gcv.max(1e-12));
            }
        }
    }

    #[test]
    fn full_estimator_is_unbiased_noiseless() {
        let mut r = rng(6);
        let (n, p) = (15, 5);
        let x = random_matrix(n, p, &mut r);
        let h = random_spd(n, &mut r);
        let q = random_spd(p, &mut r);
        let beta = random_vector(p, &mut r);
        let y = &x * &beta;
        let data = TwoWayDataset::new(x, h, q, Some(y)).unwrap();
        let all: Vec<usize> = (0..p).collect();
        let est = fit_gmdr(&data, Some(&all)).unwrap();
        assert!((est.beta_vec() - beta).norm() < 1e-6);
    }

    #[test]
    fn identity_kernels_match_two_step_pcr() {
        let mut r = rng(7);
        let (n, p, k) = (12, 7, 3);
        let x = random_matrix(n, p, &mut r);
        let y = random_vector(n, &mut r);
        let data = TwoWayDataset::plain(x.clone(), Some(y.clone())).unwrap();
        let idx: Vec<usize> = (0..k).collect();
        let est = fit_gmdr(&data, Some(&idx)).unwrap();
        // PCR: scores Z = X V_k, regress y on Z, map back with V_k
        let svd = x.clone().svd(true, true);
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap());
        let vt = svd.v_t.unwrap();
        let vk = DMatrix::from_fn(p, k, |i, c| vt[(order[c], i)]);
        let z = &x * &vk;
        let coef = (z.transpose() * &z).try_inverse().unwrap() * z.transpose() * &y;
        let pcr = &vk * coef;
        assert!((est.beta_vec() - pcr).norm() < 1e-10);
    }

    #[test]
    fn kernel_scale_invariance() {
        let data = random_data(10, 6, 8);
        let scaled = TwoWayDataset::new(
            data.x.clone(),
            &data.h * 3.0,
            &data.q * 0.5,
            data.y.clone(),
        )
        .unwrap();
        let a = fit_gmdr(&data, Some(&[0, 2])).unwrap();
        let b = fit_gmdr(&scaled, Some(&[0, 2])).unwrap();
        assert!((a.beta_vec() - b.beta_vec()).norm() < 1e-8 * a.beta_vec().norm());
        let a = fit_gmdr(&data, None).unwrap();
        let b = fit_gmdr(&scaled, None).unwrap();
        assert_eq!(a.weight.selected, b.weight.selected);
        assert!((a.beta_vec() - b.beta_vec()).norm() < 1e-8 * a.beta_vec().norm());
    }

    #[test]
    fn membership_and_column_space() {
        let data = random_data(8, 12, 9);
        let est = fit_gmdr(&data, None).unwrap();
        let f = &est.factors;
        let w = DMatrix::from_diagonal(&est.weight.diag());
        let sinv = DMatrix::from_diagonal(&f.sigma_vec().map(|s| 1.0 / s));
        let direct = &data.q * &f.v * w * sinv * f.u.transpose() * &data.h * data.y.as_ref().unwrap();
        assert!((direct - est.beta_vec()).norm() < 1e-10 * est.beta_vec().norm().max(1.0));
    }

    #[test]
    fn rejects_out_of_range_index() {
        let data = random_data(6, 3, 10);
        assert!(matches!(
            fit_gmdr(&data, Some(&[5])),
            Err(GmdError::InvalidIndexSet { .. })
        ));
    }

    #[test]
    fn gcv_path_truncates_at_n_minus_one() {
        let vi = vec![3.0, 2.0, 1.0, 0.5];
        let path = gcv_path_for_order(&vi, &[0, 1, 2, 3], 10.0, 3);
        assert_eq!(path.len(), 2);
    }
}
