//! Dense linear-algebra helpers shared by every module: kernel validation,
//! Cholesky whitening with a single jitter retry, sorted symmetric
//! eigendecompositions and the (H, Q)-norm.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{GmdError, Result};

/// Relative entrywise tolerance for kernel symmetry.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Smallest admissible eigenvalue ratio for a positive definite kernel.
pub const PD_RATIO: f64 = 1e-12;
/// Ridge added once (times `tr(K)/dim`) when a Cholesky factorization fails.
pub const JITTER: f64 = 1e-10;

pub fn check_square(k: &DMatrix<f64>, name: &str, dim: usize) -> Result<()> {
    if k.nrows() != dim || k.ncols() != dim {
        return Err(GmdError::dims(
            name,
            format!("{dim}x{dim}"),
            format!("{}x{}", k.nrows(), k.ncols()),
        ));
    }
    Ok(())
}

pub fn check_symmetric(k: &DMatrix<f64>, name: &str) -> Result<()> {
    let scale = k.amax();
    for j in 0..k.ncols() {
        for i in (j + 1)..k.nrows() {
            let (a, b) = (k[(i, j)], k[(j, i)]);
            if !a.is_finite() || !b.is_finite() {
                return Err(GmdError::param(name, "non-finite entry"));
            }
            let tol = SYMMETRY_TOL * a.abs().max(b.abs()) + 1e-14 * scale;
            if (a - b).abs() > tol {
                return Err(GmdError::KernelNotSymmetric {
                    name: name.to_string(),
                    row: i,
                    col: j,
                });
            }
        }
    }
    Ok(())
}

/// Full eigenvalue-based check: symmetric and `λ_min > 1e-12 · λ_max`.
pub fn check_spd(k: &DMatrix<f64>, name: &str) -> Result<()> {
    check_symmetric(k, name)?;
    let eig = SymEigen::new(k);
    let top = eig.values[0];
    let bottom = eig.values[eig.values.len() - 1];
    if top <= 0.0 || bottom <= PD_RATIO * top {
        return Err(GmdError::KernelNotPositiveDefinite(format!(
            "{name}: eigenvalue range [{bottom:.3e}, {top:.3e}]"
        )));
    }
    Ok(())
}

pub fn symmetrize(k: &DMatrix<f64>) -> DMatrix<f64> {
    (k + k.transpose()) * 0.5
}

/// Cholesky factor `K = L Lᵀ`, retrying once with a `1e-10·tr(K)/dim` ridge.
pub fn cholesky_jittered(k: &DMatrix<f64>, name: &str) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(symmetrize(k)) {
        return Ok(c);
    }
    let dim = k.nrows().max(1);
    let ridge = JITTER * k.trace() / dim as f64;
    if ridge > 0.0 {
        let mut kj = symmetrize(k);
        for i in 0..kj.nrows() {
            kj[(i, i)] += ridge;
        }
        if let Some(c) = Cholesky::new(kj) {
            return Ok(c);
        }
    }
    Err(GmdError::KernelNotPositiveDefinite(format!(
        "{name}: Cholesky failed after ridge jitter"
    )))
}

pub fn is_identity(k: &DMatrix<f64>) -> bool {
    k.is_square()
        && k.iter()
            .enumerate()
            .all(|(idx, &v)| v == if idx % (k.nrows() + 1) == 0 { 1.0 } else { 0.0 })
}

/// Square-root factor `L` of an SPD kernel, `K = L Lᵀ`. Norms are computed
/// as `‖v‖_K = ‖Lᵀ v‖`.
#[derive(Debug, Clone)]
pub enum Whitener {
    Identity(usize),
    Factor(DMatrix<f64>),
}

impl Whitener {
    pub fn new(k: &DMatrix<f64>, name: &str) -> Result<Self> {
        if is_identity(k) {
            return Ok(Whitener::Identity(k.nrows()));
        }
        Ok(Whitener::Factor(cholesky_jittered(k, name)?.unpack()))
    }

    pub fn dim(&self) -> usize {
        match self {
            Whitener::Identity(n) => *n,
            Whitener::Factor(l) => l.nrows(),
        }
    }

    /// `Lᵀ M`
    pub fn lt_mul(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Whitener::Identity(_) => m.clone(),
            Whitener::Factor(l) => l.tr_mul(m),
        }
    }

    pub fn lt_mul_vec(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Whitener::Identity(_) => v.clone(),
            Whitener::Factor(l) => l.tr_mul(v),
        }
    }

    /// `L M`
    pub fn l_mul(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Whitener::Identity(_) => m.clone(),
            Whitener::Factor(l) => l * m,
        }
    }

    /// `M L`
    pub fn mul_l(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Whitener::Identity(_) => m.clone(),
            Whitener::Factor(l) => m * l,
        }
    }

    /// `L^{-T} M`
    pub fn lt_solve(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Whitener::Identity(_) => m.clone(),
            Whitener::Factor(l) => l
                .tr_solve_lower_triangular(m)
                .expect("Cholesky factor has a positive diagonal"),
        }
    }

    /// `Lᵀ M L`
    pub fn congruence(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Whitener::Identity(_) => m.clone(),
            Whitener::Factor(l) => l.tr_mul(&(m * l)),
        }
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted nonincreasing.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn new(k: &DMatrix<f64>) -> Self {
        let eig = symmetrize(k).symmetric_eigen();
        let n = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut vectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            let mut col = eig.eigenvectors.column(src).into_owned();
            canonical_sign(&mut col);
            vectors.set_column(dst, &col);
        }
        SymEigen { values, vectors }
    }

    /// `V f(Λ) Vᵀ`
    pub fn reconstruct(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let scaled = DMatrix::from_fn(self.vectors.nrows(), self.vectors.ncols(), |i, j| {
            self.vectors[(i, j)] * f(self.values[j])
        });
        &scaled * self.vectors.transpose()
    }
}

/// Relative slack under which two magnitudes count as tied in
/// [`canonical_sign`].
const SIGN_TIE_RTOL: f64 = 1e-6;

/// Flips `v` so that its largest-magnitude entry is positive. Entries within
/// a relative `1e-6` of the maximum count as tied and the first one decides,
/// which keeps the sign stable for symmetric and antisymmetric vectors.
/// Returns whether a flip happened.
pub fn canonical_sign(v: &mut DVector<f64>) -> bool {
    let max = v.amax();
    let Some(best) = v.iter().position(|x| x.abs() >= max * (1.0 - SIGN_TIE_RTOL)) else {
        return false;
    };
    if v[best] < 0.0 {
        v.neg_mut();
        return true;
    }
    false
}

pub fn spectral_norm_spd(k: &DMatrix<f64>) -> f64 {
    SymEigen::new(k).values[0]
}

pub fn inverse_spd(k: &DMatrix<f64>, name: &str) -> Result<DMatrix<f64>> {
    Ok(symmetrize(&cholesky_jittered(k, name)?.inverse()))
}

/// `‖M‖_{H,Q} = sqrt(tr(Mᵀ H M Q))`.
pub fn hq_norm(m: &DMatrix<f64>, h: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<f64> {
    check_square(h, "H", m.nrows())?;
    check_square(q, "Q", m.ncols())?;
    let hm = h * m;
    let mq = m * q;
    // tr(Mᵀ H M Q) = Σ_ij (H M)_ij (M Q)_ij
    let value = hm.component_mul(&mq).sum();
    Ok(value.max(0.0).sqrt())
}

/// `‖v‖²_H = vᵀ H v`
pub fn h_norm2(v: &DVector<f64>, h: &DMatrix<f64>) -> f64 {
    v.dot(&(h * v))
}

pub fn principal_submatrix(k: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |a, b| k[(idx[a], idx[b])])
}

pub fn select_rows(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), m.ncols(), |a, j| m[(idx[a], j)])
}

pub fn select_entries(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}
