use nalgebra::{DMatrix, DVector};

use crate::error::{GmdError, Result};
use crate::linalg::{self, check_spd, check_square, h_norm2};

/// Design matrix with its row kernel `H` (n×n), column kernel `Q` (p×p) and
/// an optional response.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoWayDataset {
    pub x: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub y: Option<DVector<f64>>,
}

impl TwoWayDataset {
    /// Builds a dataset after checking shapes. Kernels are not eigen-checked
    /// here; call [`TwoWayDataset::validate`] for the full SPD check.
    pub fn new(
        x: DMatrix<f64>,
        h: DMatrix<f64>,
        q: DMatrix<f64>,
        y: Option<DVector<f64>>,
    ) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(GmdError::EmptyDesign);
        }
        check_square(&h, "H", x.nrows())?;
        check_square(&q, "Q", x.ncols())?;
        if let Some(y) = &y {
            if y.len() != x.nrows() {
                return Err(GmdError::dims("y", x.nrows(), y.len()));
            }
        }
        Ok(TwoWayDataset { x, h, q, y })
    }

    /// Dataset with identity kernels.
    pub fn plain(x: DMatrix<f64>, y: Option<DVector<f64>>) -> Result<Self> {
        let (n, p) = x.shape();
        Self::new(x, DMatrix::identity(n, n), DMatrix::identity(p, p), y)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn response(&self) -> Result<&DVector<f64>> {
        self.y.as_ref().ok_or(GmdError::MissingResponse)
    }

    pub fn with_h(&self, h: DMatrix<f64>) -> Result<Self> {
        Self::new(self.x.clone(), h, self.q.clone(), self.y.clone())
    }

    pub fn with_response(&self, y: DVector<f64>) -> Result<Self> {
        Self::new(self.x.clone(), self.h.clone(), self.q.clone(), Some(y))
    }

    /// Symmetry and positive definiteness of both kernels.
    pub fn validate(&self) -> Result<()> {
        check_spd(&self.h, "H")?;
        check_spd(&self.q, "Q")?;
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(GmdError::param("X", "non-finite entry"));
        }
        Ok(())
    }

    /// `‖1ᵀ H y‖` and `‖1ᵀ H X‖_∞` relative to the centering tolerance scale.
    pub fn centering_residuals(&self) -> (f64, f64) {
        let ones = DVector::from_element(self.n(), 1.0);
        let w = &self.h * &ones;
        let hf = self.h.norm();
        let ry = match &self.y {
            Some(y) => w.dot(y).abs() / (hf * y.norm()).max(f64::MIN_POSITIVE),
            None => 0.0,
        };
        let max_col = (0..self.p())
            .map(|j| self.x.column(j).norm())
            .fold(0.0, f64::max);
        let rx = (self.x.tr_mul(&w)).amax() / (hf * max_col).max(f64::MIN_POSITIVE);
        (ry, rx)
    }
}

/// Weights `w = H1 / (1ᵀH1)` so that `v - (wᵀv)·1` is H-centered.
pub fn centering_weights(h: &DMatrix<f64>) -> Result<DVector<f64>> {
    let ones = DVector::from_element(h.nrows(), 1.0);
    let h1 = h * &ones;
    let total = h1.sum();
    if !(total > 0.0) {
        return Err(GmdError::KernelNotPositiveDefinite(
            "H: 1ᵀH1 is not positive".into(),
        ));
    }
    Ok(h1 / total)
}

/// Centers `y` and every column of `X` so that `1ᵀHy = 0` and `1ᵀHX = 0`.
pub fn center_hq(data: &TwoWayDataset) -> Result<TwoWayDataset> {
    linalg::cholesky_jittered(&data.h, "H")?;
    let w = centering_weights(&data.h)?;
    let means = data.x.tr_mul(&w);
    let mut x = data.x.clone();
    for j in 0..x.ncols() {
        let m = means[j];
        x.column_mut(j).add_scalar_mut(-m);
    }
    let y = data.y.as_ref().map(|y| y.add_scalar(-w.dot(y)));
    TwoWayDataset::new(x, data.h.clone(), data.q.clone(), y)
}

/// Rescales each column to `‖x_j‖²_H = n`. Returns the new dataset and the
/// scale factors `s_j = ‖x_j‖_H / √n` that were divided out.
pub fn standardize_columns(data: &TwoWayDataset) -> Result<(TwoWayDataset, Vec<f64>)> {
    let n = data.n() as f64;
    let hx = &data.h * &data.x;
    let mut x = data.x.clone();
    let mut scales = Vec::with_capacity(data.p());
    for j in 0..data.p() {
        let norm2 = data.x.column(j).dot(&hx.column(j));
        if !(norm2 > 0.0) || !norm2.is_finite() {
            return Err(GmdError::ZeroNormColumn(j));
        }
        let s = (norm2 / n).sqrt();
        x.column_mut(j).scale_mut(1.0 / s);
        scales.push(s);
    }
    Ok((
        TwoWayDataset::new(x, data.h.clone(), data.q.clone(), data.y.clone())?,
        scales,
    ))
}

/// Column scales of an already rotated design `Z` (e.g. `XD`) such that
/// `‖z_j / c_j‖²_H = n`.
pub fn rotated_column_scales(z: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = z.nrows() as f64;
    (0..z.ncols())
        .map(|j| {
            let col = z.column(j).into_owned();
            let norm2 = h_norm2(&col, h);
            if norm2 > 0.0 && norm2.is_finite() {
                Ok((norm2 / n).sqrt())
            } else {
                Err(GmdError::ZeroNormColumn(j))
            }
        })
        .collect()
}
