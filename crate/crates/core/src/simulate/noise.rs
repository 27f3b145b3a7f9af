use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{GmdError, Result};
use crate::linalg::{cholesky_jittered, is_identity, SymEigen};

/// Gaussian noise with covariance `Ψ = L_ψᵀ L_ψ`.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    pub psi: DMatrix<f64>,
    pub l_psi: DMatrix<f64>,
}

impl NoiseModel {
    pub fn new(psi: DMatrix<f64>) -> Result<Self> {
        let l_psi = if is_identity(&psi) {
            psi.clone()
        } else {
            cholesky_jittered(&psi, "Psi")?.unpack().transpose()
        };
        Ok(NoiseModel { psi, l_psi })
    }

    pub fn isotropic(n: usize, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) {
            return Err(GmdError::param("sigma2", "must be positive"));
        }
        Ok(NoiseModel {
            psi: DMatrix::identity(n, n) * sigma2,
            l_psi: DMatrix::identity(n, n) * sigma2.sqrt(),
        })
    }

    pub fn dim(&self) -> usize {
        self.psi.nrows()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        self.l_psi.tr_mul(&z)
    }
}

/// `Ψ = Σ_j (λ_j⁻¹ + δ λ_1⁻¹) d_j d_jᵀ` from the eigenpairs of `H`, so that
/// `‖L_ψ H L_ψᵀ − I‖₂ = δ`.
pub fn perturbed_noise(h: &DMatrix<f64>, delta: f64) -> Result<NoiseModel> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(GmdError::param("delta", "must be a finite nonnegative number"));
    }
    crate::linalg::check_spd(h, "H")?;
    let eig = SymEigen::new(h);
    let top = eig.values[0];
    let psi = eig.reconstruct(|l| 1.0 / l + delta / top);
    let model = NoiseModel::new(psi)?;
    let got = whitened_deviation(&model, h);
    if (got - delta).abs() > 1e-6 * delta.max(1.0) {
        return Err(GmdError::param(
            "delta",
            format!("realized deviation {got} does not match {delta}"),
        ));
    }
    Ok(model)
}

/// `‖L_ψ H L_ψᵀ − I‖₂`
pub fn whitened_deviation(model: &NoiseModel, h: &DMatrix<f64>) -> f64 {
    let n = h.nrows();
    let m = &model.l_psi * h * model.l_psi.transpose() - DMatrix::identity(n, n);
    SymEigen::new(&m).values.iter().fold(0.0, |a: f64, v| a.max(v.abs()))
}
