//! Generalized matrix decomposition `X = U S Vᵀ` under the (H, Q)-norm,
//! computed by Cholesky whitening followed by a thin SVD.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dataset::TwoWayDataset;
use crate::error::{GmdError, Result};
use crate::linalg::{canonical_sign, Whitener};

/// Relative cutoff below which singular values are treated as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmdOptions {
    pub rank_request: Option<usize>,
    pub rank_tol: f64,
}

impl Default for GmdOptions {
    fn default() -> Self {
        GmdOptions {
            rank_request: None,
            rank_tol: DEFAULT_RANK_TOL,
        }
    }
}

/// `U` is n×K with `UᵀHU = I`, `V` is p×K with `VᵀQV = I`, `sigma` is
/// nonincreasing and strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GmdFactors {
    #[serde(skip)]
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    #[serde(skip)]
    pub v: DMatrix<f64>,
}

impl GmdFactors {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn sigma_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.sigma)
    }

    /// `U S Vᵀ`
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }

    /// Components `ν_j = u_j σ_j` as the columns of an n×K matrix.
    pub fn components(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us
    }
}

pub fn gmd(data: &TwoWayDataset, rank_request: Option<usize>) -> Result<GmdFactors> {
    gmd_with(
        data,
        GmdOptions {
            rank_request,
            ..GmdOptions::default()
        },
    )
}

pub fn gmd_with(data: &TwoWayDataset, opts: GmdOptions) -> Result<GmdFactors> {
    let (n, p) = (data.n(), data.p());
    if n == 0 || p == 0 {
        return Err(GmdError::EmptyDesign);
    }
    if let Some(k) = opts.rank_request {
        if k == 0 || k > n.min(p) {
            return Err(GmdError::param(
                "rank_request",
                format!("must lie in 1..={}", n.min(p)),
            ));
        }
    }
    let wh = Whitener::new(&data.h, "H")?;
    let wq = Whitener::new(&data.q, "Q")?;
    decompose_whitened(&data.x, &wh, &wq, opts)
}

/// GMD given precomputed whitening factors of H and Q.
pub fn decompose_whitened(
    x: &DMatrix<f64>,
    wh: &Whitener,
    wq: &Whitener,
    opts: GmdOptions,
) -> Result<GmdFactors> {
    // Y = L_Hᵀ X L_Q, so that ‖X‖_{H,Q} = ‖Y‖_F
    let y = wq.mul_l(&wh.lt_mul(x));
    let svd = y.svd(true, true);
    let su = svd.u.expect("requested U");
    let svt = svd.v_t.expect("requested Vᵀ");
    let sv = &svd.singular_values;

    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap().then(a.cmp(&b)));
    let top = sv[order[0]];
    if !(top > 0.0) {
        return Err(GmdError::param("X", "design has rank zero under (H, Q)"));
    }
    let mut k = order
        .iter()
        .take_while(|&&i| sv[i] > opts.rank_tol * top)
        .count();
    if let Some(req) = opts.rank_request {
        k = k.min(req);
    }

    let mut ut = DMatrix::zeros(x.nrows(), k);
    let mut vt = DMatrix::zeros(x.ncols(), k);
    let mut sigma = Vec::with_capacity(k);
    for (dst, &src) in order.iter().take(k).enumerate() {
        let mut vcol: DVector<f64> = svt.row(src).transpose();
        let mut ucol: DVector<f64> = su.column(src).into_owned();
        if canonical_sign(&mut vcol) {
            ucol.neg_mut();
        }
        ut.set_column(dst, &ucol);
        vt.set_column(dst, &vcol);
        sigma.push(sv[src]);
    }
    Ok(GmdFactors {
        u: wh.lt_solve(&ut),
        sigma,
        v: wq.lt_solve(&vt),
    })
}
