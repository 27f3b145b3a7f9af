use nalgebra::DVector;
use serde::Serialize;

use crate::dataset::TwoWayDataset;
use crate::error::{GmdError, Result};
use crate::gmd::GmdFactors;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    IndexSet,
    Ridge,
}

/// Diagonal of `W`. Component indices are zero-based.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightSpec {
    pub kind: WeightKind,
    pub weights: Vec<f64>,
    pub selected: Option<Vec<usize>>,
    pub eta: Option<f64>,
}

impl WeightSpec {
    pub fn index_set(rank: usize, selected: &[usize]) -> Result<Self> {
        let mut weights = vec![0.0; rank];
        for &j in selected {
            if j >= rank {
                return Err(GmdError::InvalidIndexSet { index: j + 1, rank });
            }
            weights[j] = 1.0;
        }
        let mut sel = selected.to_vec();
        sel.sort_unstable();
        sel.dedup();
        Ok(WeightSpec {
            kind: WeightKind::IndexSet,
            weights,
            selected: Some(sel),
            eta: None,
        })
    }

    pub fn all(rank: usize) -> Self {
        let all: Vec<usize> = (0..rank).collect();
        Self::index_set(rank, &all).expect("indices in range")
    }

    /// `w_j = σ_j² / (σ_j² + η)`
    pub fn ridge(sigma: &[f64], eta: f64) -> Result<Self> {
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(GmdError::param("eta", "must be a finite nonnegative number"));
        }
        Ok(WeightSpec {
            kind: WeightKind::Ridge,
            weights: sigma.iter().map(|s| s * s / (s * s + eta)).collect(),
            selected: None,
            eta: Some(eta),
        })
    }

    pub fn diag(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.weights)
    }

    pub fn is_empty(&self) -> bool {
        self.weights.iter().all(|&w| w == 0.0)
    }
}

/// A fitted member of the estimator family.
#[derive(Debug, Clone, Serialize)]
pub struct GmdEstimate {
    pub beta: Vec<f64>,
    pub weight: WeightSpec,
    #[serde(skip)]
    pub factors: GmdFactors,
    pub gamma_hat: Vec<f64>,
    pub vi_scores: Vec<f64>,
    pub gcv_path: Option<Vec<f64>>,
    pub fitted: Vec<f64>,
}

impl GmdEstimate {
    pub fn beta_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.beta)
    }
}

/// `β = Q V diag(w) γ̂`, which equals `Q V W S⁻¹ Uᵀ H y`.
pub fn estimate_from_weights(
    data: &TwoWayDataset,
    factors: &GmdFactors,
    weight: WeightSpec,
    gcv_path: Option<Vec<f64>>,
) -> Result<GmdEstimate> {
    let y = data.response()?;
    if weight.weights.len() != factors.rank() {
        return Err(GmdError::dims("weights", factors.rank(), weight.weights.len()));
    }
    let gamma = super::fit_gamma(factors, &data.h, y)?;
    let vi = super::vi_scores(factors, &gamma);
    let coef = gamma.component_mul(&weight.diag());
    let beta = &data.q * (&factors.v * coef);
    let fitted = &data.x * &beta;
    Ok(GmdEstimate {
        beta: beta.as_slice().to_vec(),
        weight,
        factors: factors.clone(),
        gamma_hat: gamma.as_slice().to_vec(),
        vi_scores: vi.as_slice().to_vec(),
        gcv_path,
        fitted: fitted.as_slice().to_vec(),
    })
}
