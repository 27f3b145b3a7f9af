use nalgebra::DMatrix;
use rayon::prelude::*;

use super::dual::DualFit;
use super::gmdr::{select_from_scores, ComponentSelection};
use super::kpr::{fit_kpr, EtaChoice};
use crate::dataset::TwoWayDataset;
use crate::error::{GmdError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum LoocvMethod {
    Gmdr(ComponentSelection),
    /// A cross-validated η is resolved once on the full data and then held
    /// fixed across the held-out samples.
    Kpr(EtaChoice),
}

/// Relative prediction error `‖y − ŷ‖² / ‖y‖²` of leave-one-out refits.
pub fn loocv_rmse(data: &TwoWayDataset, method: &LoocvMethod) -> Result<f64> {
    Ok(loocv_rmse_many(data, std::slice::from_ref(method))?[0])
}

/// Several methods evaluated on shared leave-one-out decompositions. Each
/// refit re-centers the training rows under the principal submatrix of `H`.
pub fn loocv_rmse_many(data: &TwoWayDataset, methods: &[LoocvMethod]) -> Result<Vec<f64>> {
    let n = data.n();
    if n < 3 {
        return Err(GmdError::param("n", "leave-one-out needs at least three samples"));
    }
    let y = data.response()?;
    let denom = y.norm_squared();
    if !(denom > 0.0) {
        return Err(GmdError::ZeroResponseNorm);
    }
    let etas: Vec<Option<f64>> = methods
        .iter()
        .map(|m| match m {
            LoocvMethod::Kpr(EtaChoice::Fixed(e)) => Ok(Some(*e)),
            LoocvMethod::Kpr(choice) => Ok(fit_kpr(data, *choice)?.weight.eta),
            LoocvMethod::Gmdr(_) => Ok(None),
        })
        .collect::<Result<_>>()?;
    let gram: DMatrix<f64> = &data.x * &data.q * data.x.transpose();

    let preds: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let train: Vec<usize> = (0..n).filter(|&k| k != i).collect();
            let fit = DualFit::new(&gram, &data.h, y, &train)?;
            let contrib = fit.contributions(&gram, i);
            let sigma = fit.sigma();
            let gamma = fit.gamma();
            methods
                .iter()
                .zip(&etas)
                .map(|(m, eta)| {
                    let weights = match (m, eta) {
                        (LoocvMethod::Kpr(_), Some(e)) => {
                            fit.lambda().iter().map(|l| l / (l + e)).collect()
                        }
                        (LoocvMethod::Gmdr(sel), _) => gmdr_weights(&fit, &sigma, &gamma, sel)?,
                        _ => unreachable!("kpr eta resolved above"),
                    };
                    let w: &Vec<f64> = &weights;
                    Ok(fit.y_mean() + contrib.iter().zip(w).map(|(c, w)| c * w).sum::<f64>())
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    Ok((0..methods.len())
        .map(|m| {
            let sse: f64 = (0..n).map(|i| (y[i] - preds[i][m]).powi(2)).sum();
            sse / denom
        })
        .collect())
}

fn gmdr_weights(
    fit: &DualFit,
    sigma: &[f64],
    gamma: &[f64],
    sel: &ComponentSelection,
) -> Result<Vec<f64>> {
    let rank = fit.rank();
    let mut w = vec![0.0; rank];
    let chosen: Vec<usize> = match sel {
        ComponentSelection::Given(idx) => idx.iter().copied().filter(|&j| j < rank).collect(),
        ComponentSelection::FixedTopK(k) => (0..(*k).min(rank)).collect(),
        ComponentSelection::Vi { min_var_frac } | ComponentSelection::Top { min_var_frac } => {
            select_from_scores(
                sigma,
                gamma,
                fit.y_h2(),
                fit.n_train(),
                *min_var_frac,
                matches!(sel, ComponentSelection::Vi { .. }),
            )?
            .selected
        }
    };
    for j in chosen {
        w[j] = 1.0;
    }
    Ok(w)
}
