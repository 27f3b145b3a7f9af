//! Mixing weight `τ` for a partially informative row kernel,
//! `H(τ) = τH + (1 − τ)I`, estimated by maximizing the marginal likelihood
//! of `y ~ N(0, c_Q XQXᵀ + c_H H(τ)⁻¹)` with `c_Q` profiled out.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{center_hq, standardize_columns, TwoWayDataset};
use crate::error::{GmdError, Result};
use crate::inference::{run_gmdi, GmdiOptions, InferenceReport};
use crate::linalg::{spectral_norm_spd, SymEigen};

pub const TAU_MIN: f64 = 0.001;
pub const TAU_MAX: f64 = 0.999;
const MAX_ITERS: usize = 300;
const GRAD_TOL: f64 = 1e-7;
const LOG_LAMBDA_BOUND: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustWeights {
    pub tau_hat: f64,
    pub lambda_hq_hat: f64,
    pub neg_loglik: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// The likelihood in the eigenbasis of the normalized `H`, where `H(τ)⁻¹`
/// is diagonal.
#[derive(Debug, Clone)]
pub struct TauProblem {
    m: DMatrix<f64>,
    y: DVector<f64>,
    e: Vec<f64>,
}

pub fn tau_from_t(t: f64) -> f64 {
    TAU_MIN + (TAU_MAX - TAU_MIN) / (1.0 + (-t).exp())
}

pub fn t_from_tau(tau: f64) -> f64 {
    let s = (tau - TAU_MIN) / (TAU_MAX - TAU_MIN);
    (s / (1.0 - s)).ln()
}

impl TauProblem {
    /// Expects data already centered.
    pub fn new(data: &TwoWayDataset) -> Result<Self> {
        let y = data.response()?;
        let hn = &data.h / spectral_norm_spd(&data.h);
        let eig = SymEigen::new(&hn);
        let xq = &data.x * &data.q * data.x.transpose();
        let m = eig.vectors.tr_mul(&(xq * &eig.vectors));
        let y = eig.vectors.tr_mul(y);
        if y.norm_squared() == 0.0 {
            return Err(GmdError::ZeroResponseNorm);
        }
        Ok(TauProblem {
            m: crate::linalg::symmetrize(&m),
            y,
            e: eig.values.iter().map(|v| v.max(0.0)).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    fn inv_diag(&self, tau: f64) -> Vec<f64> {
        self.e.iter().map(|e| 1.0 / (tau * e + 1.0 - tau)).collect()
    }

    /// `n + n log(yᵀA⁻¹y / n) + log|A|`, `A = XQXᵀ + λ H(τ)⁻¹`.
    pub fn objective(&self, lambda: f64, tau: f64) -> Result<f64> {
        Ok(self.evaluate(lambda, tau, false)?.0)
    }

    /// Objective and its gradient in `(log λ, t)`.
    fn evaluate(&self, lambda: f64, tau: f64, grad: bool) -> Result<(f64, [f64; 2])> {
        let n = self.n();
        let d = self.inv_diag(tau);
        let mut a = self.m.clone();
        for i in 0..n {
            a[(i, i)] += lambda * d[i];
        }
        let chol = a.cholesky().ok_or_else(|| {
            GmdError::KernelNotPositiveDefinite(format!(
                "marginal covariance at lambda = {lambda}, tau = {tau}"
            ))
        })?;
        let l = chol.l();
        let logdet = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let alpha = chol.solve(&self.y);
        let s = self.y.dot(&alpha);
        let nf = n as f64;
        let f = nf + nf * (s / nf).ln() + logdet;
        if !f.is_finite() {
            return Err(GmdError::param("objective", "non-finite value"));
        }
        if !grad {
            return Ok((f, [0.0; 2]));
        }
        let linv = l
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .expect("positive diagonal");
        let ainv_diag: Vec<f64> = (0..n).map(|i| linv.column(i).norm_squared()).collect();
        let dd: Vec<f64> = self
            .e
            .iter()
            .zip(&d)
            .map(|(e, di)| -(e - 1.0) * di * di)
            .collect();
        let mut g_lambda = 0.0;
        let mut g_tau = 0.0;
        for i in 0..n {
            let a2 = alpha[i] * alpha[i];
            g_lambda += -nf * d[i] * a2 / s + d[i] * ainv_diag[i];
            g_tau += lambda * (-nf * dd[i] * a2 / s + dd[i] * ainv_diag[i]);
        }
        let sig = (tau - TAU_MIN) / (TAU_MAX - TAU_MIN);
        let dtau_dt = (TAU_MAX - TAU_MIN) * sig * (1.0 - sig);
        Ok((f, [g_lambda * lambda, g_tau * dtau_dt]))
    }

    fn eval_z(&self, z: [f64; 2], grad: bool) -> Result<(f64, [f64; 2])> {
        self.evaluate(z[0].exp(), tau_from_t(z[1]), grad)
    }

    /// BFGS with Armijo backtracking in `(log λ, logit-like τ)`.
    fn minimize_from(&self, start: [f64; 2]) -> Result<(f64, [f64; 2], usize, bool)> {
        let mut z = start;
        let (mut f, mut g) = self.eval_z(z, true)?;
        let mut hinv = [[1.0, 0.0], [0.0, 1.0]];
        for it in 0..MAX_ITERS {
            if g[0].hypot(g[1]) < GRAD_TOL {
                return Ok((f, z, it, true));
            }
            let mut dir = [
                -(hinv[0][0] * g[0] + hinv[0][1] * g[1]),
                -(hinv[1][0] * g[0] + hinv[1][1] * g[1]),
            ];
            let mut slope = dir[0] * g[0] + dir[1] * g[1];
            if slope >= 0.0 {
                hinv = [[1.0, 0.0], [0.0, 1.0]];
                dir = [-g[0], -g[1]];
                slope = -(g[0] * g[0] + g[1] * g[1]);
            }
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let cand = [z[0] + step * dir[0], z[1] + step * dir[1]];
                if cand[0].abs() <= LOG_LAMBDA_BOUND {
                    if let Ok((fc, gc)) = self.eval_z(cand, true) {
                        if fc <= f + 1e-4 * step * slope {
                            accepted = Some((cand, fc, gc));
                            break;
                        }
                    }
                }
                step *= 0.5;
            }
            let Some((zn, fnew, gn)) = accepted else {
                return Ok((f, z, it, g[0].hypot(g[1]) < 1e-4));
            };
            let sv = [zn[0] - z[0], zn[1] - z[1]];
            let yv = [gn[0] - g[0], gn[1] - g[1]];
            let sy = sv[0] * yv[0] + sv[1] * yv[1];
            if sy > 1e-12 {
                let hy = [
                    hinv[0][0] * yv[0] + hinv[0][1] * yv[1],
                    hinv[1][0] * yv[0] + hinv[1][1] * yv[1],
                ];
                let yhy = yv[0] * hy[0] + yv[1] * hy[1];
                for r in 0..2 {
                    for c in 0..2 {
                        hinv[r][c] += (sy + yhy) * sv[r] * sv[c] / (sy * sy)
                            - (hy[r] * sv[c] + sv[r] * hy[c]) / sy;
                    }
                }
            }
            let done = (f - fnew).abs() <= 1e-14 * f.abs().max(1.0);
            z = zn;
            f = fnew;
            g = gn;
            if done {
                return Ok((f, z, it + 1, true));
            }
        }
        Ok((f, z, MAX_ITERS, false))
    }

    pub fn estimate(&self) -> Result<RobustWeights> {
        let mut starts = Vec::with_capacity(9);
        for ll in [-3.0, 0.0, 3.0] {
            for tau in [0.1, 0.5, 0.9] {
                starts.push([ll, t_from_tau(tau)]);
            }
        }
        let runs: Vec<Result<(f64, [f64; 2], usize, bool)>> =
            starts.par_iter().map(|s| self.minimize_from(*s)).collect();
        let mut best: Option<(f64, [f64; 2], usize, bool)> = None;
        let mut any_converged = false;
        let mut first_err = None;
        for run in runs {
            match run {
                Ok(r) => {
                    any_converged |= r.3;
                    if best.map_or(true, |b| r.0 < b.0) {
                        best = Some(r);
                    }
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        let (f, z, iterations, _) = match best {
            Some(b) => b,
            None => return Err(first_err.expect("at least one start")),
        };
        Ok(RobustWeights {
            tau_hat: tau_from_t(z[1]),
            lambda_hq_hat: z[0].exp(),
            neg_loglik: f,
            iterations,
            converged: any_converged,
        })
    }
}

/// Centers and standardizes as the inference pipeline does, then estimates
/// `(λ_HQ, τ)`.
pub fn estimate_tau(data: &TwoWayDataset) -> Result<RobustWeights> {
    let (prepared, _) = standardize_columns(&center_hq(data)?)?;
    TauProblem::new(&prepared)?.estimate()
}

/// `τH + (1 − τ)‖H‖₂ I`, which equals `H` at `τ = 1`.
pub fn mixed_row_kernel(h: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    let scale = spectral_norm_spd(h);
    let n = h.nrows();
    h * tau + DMatrix::identity(n, n) * ((1.0 - tau) * scale)
}

pub fn run_robust_gmdi(
    data: &TwoWayDataset,
    options: &GmdiOptions,
) -> Result<(RobustWeights, InferenceReport)> {
    let weights = estimate_tau(data)?;
    let mixed = data.with_h(mixed_row_kernel(&data.h, weights.tau_hat))?;
    Ok((weights, run_gmdi(&mixed, options)?))
}
