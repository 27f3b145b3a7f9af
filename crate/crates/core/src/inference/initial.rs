use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::lasso;
use crate::dataset::TwoWayDataset;
use crate::error::{GmdError, Result};
use crate::linalg::{check_spd, SymEigen, Whitener};

/// The design rotated into the eigenbasis of `Q` and whitened by `H`:
/// `Z = H^{1/2} X D`, `ỹ = H^{1/2} y`. `delta` holds the eigenvalues of `Q`
/// divided by the largest one.
#[derive(Debug, Clone)]
pub struct RotatedDesign {
    pub d: DMatrix<f64>,
    pub delta: Vec<f64>,
    pub q_scale: f64,
    pub z: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl RotatedDesign {
    pub fn new(data: &TwoWayDataset) -> Result<Self> {
        let y = data.response()?;
        check_spd(&data.q, "Q")?;
        let eig = SymEigen::new(&data.q);
        let q_scale = eig.values[0];
        let delta: Vec<f64> = eig.values.iter().map(|v| v / q_scale).collect();
        let wh = Whitener::new(&data.h, "H")?;
        let z = wh.lt_mul(&(&data.x * &eig.vectors));
        let y = wh.lt_mul_vec(y);
        Ok(RotatedDesign {
            d: eig.vectors,
            delta,
            q_scale,
            z,
            y,
        })
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn p(&self) -> usize {
        self.z.ncols()
    }

    /// `X̌ = H^{1/2} X D Δ^{1/2}`
    pub fn organic_design(&self) -> DMatrix<f64> {
        let mut x = self.z.clone();
        for (j, d) in self.delta.iter().enumerate() {
            x.column_mut(j).scale_mut(d.sqrt());
        }
        x
    }
}

/// Weighted lasso fit in the eigenbasis of `Q`.
#[derive(Debug, Clone, Serialize)]
pub struct InitialEstimate {
    pub beta_init: Vec<f64>,
    pub beta_tilde: Vec<f64>,
    pub lambda: f64,
    #[serde(skip)]
    pub eigen_basis: DMatrix<f64>,
    pub delta: Vec<f64>,
    pub sweeps: usize,
    pub kkt_violation: f64,
}

impl InitialEstimate {
    pub fn beta_init_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.beta_init)
    }
}

/// `2 √(3 n log p)`
pub fn default_lambda(n: usize, p: usize) -> f64 {
    2.0 * (3.0 * n as f64 * (p as f64).ln().max(0.0)).sqrt()
}

pub fn initial_estimator(data: &TwoWayDataset, lambda: Option<f64>) -> Result<InitialEstimate> {
    let rd = RotatedDesign::new(data)?;
    initial_from_rotated(&rd, lambda)
}

/// Solves `min ½‖ỹ − Zβ̃‖² + λ Σ_j δ_j^{-1/2} |β̃_j|` with the columns of `Z`
/// rescaled to squared norm `n` during the solve.
pub fn initial_from_rotated(rd: &RotatedDesign, lambda: Option<f64>) -> Result<InitialEstimate> {
    let (n, p) = (rd.n(), rd.p());
    let lambda = lambda.unwrap_or_else(|| default_lambda(n, p));
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(GmdError::param("lambda", "must be a finite nonnegative number"));
    }
    let mut zs = rd.z.clone();
    let mut scales = Vec::with_capacity(p);
    for j in 0..p {
        let norm2 = zs.column(j).norm_squared();
        if !(norm2 > 0.0) {
            return Err(GmdError::ZeroNormColumn(j));
        }
        let c = (norm2 / n as f64).sqrt();
        zs.column_mut(j).scale_mut(1.0 / c);
        scales.push(c);
    }
    let penalty: Vec<f64> = (0..p)
        .map(|j| lambda / rd.delta[j].sqrt() / scales[j])
        .collect();
    let sol = lasso::solve(
        &zs,
        &rd.y,
        &penalty,
        None,
        lasso::DEFAULT_TOL,
        lasso::DEFAULT_MAX_SWEEPS,
    )?;
    let kkt = lasso::kkt_violation(&zs, &rd.y, &penalty, &sol.coef);
    let beta_tilde = DVector::from_iterator(p, (0..p).map(|j| sol.coef[j] / scales[j]));
    let beta_init = &rd.d * &beta_tilde;
    Ok(InitialEstimate {
        beta_init: beta_init.as_slice().to_vec(),
        beta_tilde: beta_tilde.as_slice().to_vec(),
        lambda,
        eigen_basis: rd.d.clone(),
        delta: rd.delta.clone(),
        sweeps: sol.sweeps,
        kkt_violation: kkt,
    })
}

/// Value of the weighted lasso objective at `beta_tilde`, in the unscaled
/// coordinates.
pub fn initial_objective(rd: &RotatedDesign, lambda: f64, beta_tilde: &DVector<f64>) -> f64 {
    let penalty: Vec<f64> = rd.delta.iter().map(|d| lambda / d.sqrt()).collect();
    lasso::objective(&rd.z, &rd.y, &penalty, beta_tilde)
}
