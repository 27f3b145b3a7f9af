use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::noise::{perturbed_noise, NoiseModel};
use crate::dataset::TwoWayDataset;
use crate::error::{GmdError, Result};
use crate::linalg::{canonical_sign, cholesky_jittered, inverse_spd, is_identity, SymEigen};
use crate::structure::kernel_from_sq_distance;

/// Relative ridge added to the rank-deficient truncated kernel `H(θ)`.
pub const TRUNCATED_KERNEL_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QVariant {
    /// The true precision `Σ⁻¹`.
    True,
    /// `Σ⁻¹` with cross-block entries `0.1^|i−j|`.
    Q1,
    /// `0.9 I + 0.1 11ᵀ`
    Q2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HVariant {
    H1,
    H2,
    H3,
    H4,
    H5,
    H6,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "setting", rename_all = "snake_case")]
pub enum Scenario {
    /// Independent rows, block AR column precision, noise level set by `R²`.
    SettingI { r_squared: f64 },
    /// As `SettingI`, analysed with a perturbed column kernel.
    SettingII { q: QVariant, r_squared: f64 },
    /// Correlated rows, analysed with one of six row kernels.
    SettingIII { h: HVariant },
    /// Correlated rows, analysed with a truncated row kernel `H(θ)`.
    SettingIV { theta: f64 },
    /// Distance-derived kernels with noise covariance perturbed by `δ`.
    Perturbed { delta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingSpec {
    pub scenario: Scenario,
    pub n: usize,
    pub p: usize,
    pub replicates: usize,
    pub seed: u64,
}

impl SettingSpec {
    /// Full-size dimensions for the scenario with 100 replicates.
    pub fn new(scenario: Scenario, seed: u64) -> Self {
        let (n, p) = match scenario {
            Scenario::Perturbed { .. } => (174, 114),
            _ => (200, 300),
        };
        SettingSpec {
            scenario,
            n,
            p,
            replicates: 100,
            seed,
        }
    }
}

/// Diagonal one; `rho1^|i−j|` within the leading block of size `split`,
/// `rho2^|i−j|` within the trailing block, `cross(i, j)` elsewhere
/// (zero-based indices).
pub fn block_kernel(
    dim: usize,
    split: usize,
    rho1: f64,
    rho2: f64,
    cross: impl Fn(usize, usize) -> f64,
) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |i, j| {
        let d = i.abs_diff(j) as i32;
        if i == j {
            1.0
        } else if i < split && j < split {
            rho1.powi(d)
        } else if i >= split && j >= split {
            rho2.powi(d)
        } else {
            cross(i, j)
        }
    })
}

/// Entries `(a, b)` (one-based) with `(a − split)(b − split) < 0`.
fn strictly_across(i: usize, j: usize, split: usize) -> bool {
    let (a, b, s) = (i as i64 + 1, j as i64 + 1, split as i64);
    (a - s) * (b - s) < 0
}

/// Column precision `Σ⁻¹`: `0.9^|i−j|` on the first half, `0.5^|i−j|` on
/// the second, zero across.
pub fn column_precision(p: usize) -> DMatrix<f64> {
    block_kernel(p, p / 2, 0.9, 0.5, |_, _| 0.0)
}

/// Row precision `R⁻¹`, same pattern as the column precision.
pub fn row_precision(n: usize) -> DMatrix<f64> {
    column_precision(n)
}

pub fn q_variant(p: usize, v: QVariant) -> DMatrix<f64> {
    let split = p / 2;
    match v {
        QVariant::True => column_precision(p),
        QVariant::Q1 => block_kernel(p, split, 0.9, 0.5, |i, j| {
            if strictly_across(i, j, split) {
                0.1f64.powi(i.abs_diff(j) as i32)
            } else {
                0.0
            }
        }),
        QVariant::Q2 => DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { 0.1 }),
    }
}

pub fn h_variant(n: usize, v: HVariant) -> DMatrix<f64> {
    let split = n / 2;
    let alternating = |c: f64| move |i: usize, j: usize| if i.abs_diff(j) % 2 == 0 { c } else { -c };
    match v {
        HVariant::H1 => row_precision(n),
        HVariant::H2 => block_kernel(n, split, 0.9, 0.5, |i, j| {
            if strictly_across(i, j, split) {
                0.1f64.powi(i.abs_diff(j) as i32)
            } else {
                0.0
            }
        }),
        HVariant::H3 => block_kernel(n, split, -0.4, -0.8, |_, _| 0.0),
        HVariant::H4 => {
            let f = alternating(0.002);
            DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    1.0
                } else if i < split && j < split {
                    0.9f64.powi(i.abs_diff(j) as i32)
                } else {
                    f(i, j)
                }
            })
        }
        HVariant::H5 => {
            let head = n / 10;
            let f = alternating(0.005);
            DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    1.0
                } else if i < head && j < head {
                    0.9f64.powi(i.abs_diff(j) as i32)
                } else {
                    f(i, j)
                }
            })
        }
        HVariant::H6 => DMatrix::from_fn(n, n, |i, j| (-0.5f64).powi(i.abs_diff(j) as i32)),
    }
}

/// `H(θ) = Σ_{i ≤ k(θ)} d_i⁻¹ v_i v_iᵀ` from the eigenpairs of the row
/// covariance `R` (eigenvalues nonincreasing), where `k(θ)` is the smallest
/// `k` whose leading eigenvalue mass reaches `θ`. A ridge of
/// `TRUNCATED_KERNEL_RIDGE ‖H(θ)‖₂` keeps the result positive definite
/// when `k(θ) < n`.
pub fn truncated_kernel(r: &DMatrix<f64>, theta: f64) -> Result<(DMatrix<f64>, usize)> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(GmdError::param("theta", "must lie in (0, 1]"));
    }
    let eig = SymEigen::new(r);
    let n = r.nrows();
    let total: f64 = eig.values.iter().sum();
    let mut cum = 0.0;
    let mut k = n;
    for (i, d) in eig.values.iter().enumerate() {
        cum += d;
        if cum / total >= theta - 1e-12 {
            k = i + 1;
            break;
        }
    }
    let mut h = DMatrix::zeros(n, n);
    for i in 0..k {
        let v = eig.vectors.column(i);
        h += (v * v.transpose()) / eig.values[i];
    }
    if k < n {
        let top = 1.0 / eig.values[k - 1];
        for i in 0..n {
            h[(i, i)] += TRUNCATED_KERNEL_RIDGE * top;
        }
    }
    Ok((h, k))
}

/// `s(x, τ) = x 1(|x| > τ)`
pub fn hard_threshold(x: f64, tau: f64) -> f64 {
    if x.abs() > tau {
        x
    } else {
        0.0
    }
}

/// `s(Σ_j c_j d_j, τ)` with `d_j` the leading eigenvectors of `Q`.
pub fn eigvec_signal(q: &DMatrix<f64>, coefficients: &[f64], threshold: f64) -> Result<DVector<f64>> {
    if coefficients.len() > q.nrows() {
        return Err(GmdError::dims("coefficients", q.nrows(), coefficients.len()));
    }
    let eig = SymEigen::new(q);
    let mut beta = DVector::zeros(q.nrows());
    for (j, c) in coefficients.iter().enumerate() {
        beta.axpy(*c, &eig.vectors.column(j), 1.0);
    }
    Ok(beta.map(|x| hard_threshold(x, threshold)))
}

/// `β* = Σ_{j ≤ 10} j^{-1/2} f_j` over the leading eigenvectors of the column
/// precision. Those eigenvectors live on the first block, so they are
/// computed there and zero-padded.
pub fn setting_signal(p: usize) -> DVector<f64> {
    let split = p / 2;
    let block = column_precision(p).view((0, 0), (split, split)).into_owned();
    let eig = SymEigen::new(&block);
    let mut beta = DVector::zeros(p);
    for j in 0..10.min(split) {
        let mut f = eig.vectors.column(j).into_owned();
        canonical_sign(&mut f);
        for i in 0..split {
            beta[i] += f[i] / ((j + 1) as f64).sqrt();
        }
    }
    beta
}

/// `X = L_Rᵀ Z L_Σ` with `Z` iid standard normal, given lower Cholesky
/// factors `R = C_R C_Rᵀ` and `Σ = C_Σ C_Σᵀ` (`None` for identity).
pub fn matrix_variate_normal_factored<G: Rng + ?Sized>(
    n: usize,
    p: usize,
    row_chol: Option<&DMatrix<f64>>,
    col_chol: Option<&DMatrix<f64>>,
    rng: &mut G,
) -> DMatrix<f64> {
    let mut x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    if let Some(c) = row_chol {
        x = c * x;
    }
    if let Some(c) = col_chol {
        x *= c.transpose();
    }
    x
}

pub fn matrix_variate_normal<G: Rng + ?Sized>(
    n: usize,
    p: usize,
    r: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    rng: &mut G,
) -> Result<DMatrix<f64>> {
    let factor = |k: &DMatrix<f64>, name: &str| -> Result<Option<DMatrix<f64>>> {
        if is_identity(k) {
            Ok(None)
        } else {
            Ok(Some(cholesky_jittered(k, name)?.unpack()))
        }
    };
    let (cr, cs) = (factor(r, "R")?, factor(sigma, "Sigma")?);
    Ok(matrix_variate_normal_factored(n, p, cr.as_ref(), cs.as_ref(), rng))
}

/// Fixed matrices of a scenario, built once and reused across replicates.
#[derive(Debug, Clone)]
pub struct SettingMatrices {
    pub spec: SettingSpec,
    /// Row kernel given to the analysis.
    pub h: DMatrix<f64>,
    /// Column kernel given to the analysis.
    pub q: DMatrix<f64>,
    pub beta_star: DVector<f64>,
    pub truth_mask: Vec<bool>,
    row_chol: Option<DMatrix<f64>>,
    col_chol: Option<DMatrix<f64>>,
    signal_scale: f64,
    noise: Option<NoiseModel>,
    r_squared: Option<f64>,
}

/// One generated replicate.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub data: TwoWayDataset,
    pub beta_star: DVector<f64>,
    pub truth_mask: Vec<bool>,
    /// Empirical `Var(Xβ) / (Var(Xβ) + Var(ε))` of the draw.
    pub realized_r_squared: f64,
}

fn point_cloud_kernel<G: Rng + ?Sized>(m: usize, dim: usize, rng: &mut G) -> Result<DMatrix<f64>> {
    let pts = DMatrix::from_fn(m, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let d2 = DMatrix::from_fn(m, m, |i, j| (pts.row(i) - pts.row(j)).norm_squared());
    let k = kernel_from_sq_distance(&d2)?;
    let scale = crate::linalg::spectral_norm_spd(&k);
    Ok(k / scale)
}

impl SettingMatrices {
    pub fn build(spec: &SettingSpec) -> Result<Self> {
        let (n, p) = (spec.n, spec.p);
        if n < 4 || p < 4 {
            return Err(GmdError::param("dimensions", "n and p must be at least 4"));
        }
        let lower = |k: &DMatrix<f64>, name: &str| -> Result<DMatrix<f64>> {
            Ok(cholesky_jittered(k, name)?.unpack())
        };
        match spec.scenario {
            Scenario::SettingI { r_squared } | Scenario::SettingII { r_squared, .. } => {
                if !(r_squared > 0.0 && r_squared < 1.0) {
                    return Err(GmdError::param("r_squared", "must lie in (0, 1)"));
                }
                let qv = match spec.scenario {
                    Scenario::SettingII { q, .. } => q,
                    _ => QVariant::True,
                };
                let prec = column_precision(p);
                let sigma = inverse_spd(&prec, "Sigma^-1")?;
                let beta = setting_signal(p);
                Ok(SettingMatrices {
                    spec: spec.clone(),
                    h: DMatrix::identity(n, n),
                    q: q_variant(p, qv),
                    truth_mask: beta.iter().map(|b| *b != 0.0).collect(),
                    beta_star: beta,
                    row_chol: None,
                    col_chol: Some(lower(&sigma, "Sigma")?),
                    signal_scale: 1.0,
                    noise: None,
                    r_squared: Some(r_squared),
                })
            }
            Scenario::SettingIII { .. } | Scenario::SettingIV { .. } => {
                let rprec = row_precision(n);
                let r = inverse_spd(&rprec, "R^-1")?;
                let sigma = inverse_spd(&column_precision(p), "Sigma^-1")?;
                let (h, scale) = match spec.scenario {
                    Scenario::SettingIII { h } => (h_variant(n, h), 5.0),
                    Scenario::SettingIV { theta } => (truncated_kernel(&r, theta)?.0, 10.0),
                    _ => unreachable!(),
                };
                let beta = setting_signal(p);
                Ok(SettingMatrices {
                    spec: spec.clone(),
                    h,
                    q: column_precision(p),
                    truth_mask: beta.iter().map(|b| *b != 0.0).collect(),
                    beta_star: beta,
                    row_chol: Some(lower(&r, "R")?),
                    col_chol: Some(lower(&sigma, "Sigma")?),
                    signal_scale: scale,
                    noise: Some(NoiseModel::new(r)?),
                    r_squared: None,
                })
            }
            Scenario::Perturbed { delta } => {
                // The fixed kernels come from a dedicated stream so that they
                // do not depend on the replicate count.
                let mut rng = replicate_rng(spec.seed, u64::MAX);
                let h = point_cloud_kernel(n, 5, &mut rng)?;
                let q = point_cloud_kernel(p, 5, &mut rng)?;
                let coefs: Vec<f64> = (0..10)
                    .map(|j| 5.0 / (2.0 + 3.0 * j as f64).sqrt())
                    .collect();
                let beta = eigvec_signal(&q, &coefs, 0.1)?;
                let noise = perturbed_noise(&h, delta)?;
                Ok(SettingMatrices {
                    spec: spec.clone(),
                    row_chol: Some(lower(&inverse_spd(&h, "H")?, "H^-1")?),
                    col_chol: Some(lower(&inverse_spd(&q, "Q")?, "Q^-1")?),
                    h,
                    q,
                    truth_mask: beta.iter().map(|b| *b != 0.0).collect(),
                    beta_star: beta,
                    signal_scale: 1.0,
                    noise: Some(noise),
                    r_squared: None,
                })
            }
        }
    }

    /// Draws replicate `index` from its own RNG stream.
    pub fn generate(&self, index: usize) -> Result<SimulatedData> {
        let mut rng = replicate_rng(self.spec.seed, index as u64);
        let (n, p) = (self.spec.n, self.spec.p);
        let x = matrix_variate_normal_factored(
            n,
            p,
            self.row_chol.as_ref(),
            self.col_chol.as_ref(),
            &mut rng,
        );
        let beta = &self.beta_star * self.signal_scale;
        let signal = &x * &beta;
        let vs = centered_var(&signal);
        let eps = match (&self.noise, self.r_squared) {
            (Some(model), _) => model.sample(&mut rng),
            (None, Some(r2)) => {
                if !(vs > 0.0) {
                    return Err(GmdError::param("signal", "zero variance"));
                }
                let sigma2 = vs * (1.0 - r2) / r2;
                NoiseModel::isotropic(n, sigma2)?.sample(&mut rng)
            }
            (None, None) => unreachable!("every scenario defines its noise"),
        };
        let ve = centered_var(&eps);
        let y = signal + eps;
        Ok(SimulatedData {
            data: TwoWayDataset::new(x, self.h.clone(), self.q.clone(), Some(y))?,
            beta_star: beta,
            truth_mask: self.truth_mask.clone(),
            realized_r_squared: vs / (vs + ve),
        })
    }
}

fn centered_var(v: &DVector<f64>) -> f64 {
    let m = v.mean();
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

/// ChaCha8 seeded by `seed` on stream `index`.
pub fn replicate_rng(seed: u64, index: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn build_setting(spec: &SettingSpec, replicate: usize) -> Result<SimulatedData> {
    SettingMatrices::build(spec)?.generate(replicate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::check_spd;
    use crate::testutil::rng;

    #[test]
    fn column_precision_entries() {
        let q = column_precision(300);
        assert!((q[(2, 4)] - 0.81).abs() < 1e-15);
        assert!((q[(150, 199)] - 0.5f64.powi(49)).abs() < 1e-30);
        assert_eq!(q[(99, 199)], 0.0);
        assert_eq!(q[(149, 150)], 0.0);
        assert!((q[(149, 148)] - 0.9).abs() < 1e-15);
        assert_eq!(q, q.transpose());
    }

    #[test]
    fn perturbed_column_kernels() {
        let q1 = q_variant(300, QVariant::Q1);
        assert!((q1[(148, 150)] - 0.01).abs() < 1e-15);
        assert!((q1[(0, 299)] - 0.1f64.powi(299)).abs() < 1e-300);
        // one-based index 150 sits on the boundary and is not "across"
        assert_eq!(q1[(149, 151)], 0.0);
        assert!((q1[(10, 12)] - 0.81).abs() < 1e-15);
        let q2 = q_variant(300, QVariant::Q2);
        assert_eq!((q2[(0, 0)], q2[(3, 7)]), (1.0, 0.1));
        check_spd(&q1, "Q1").unwrap();
        check_spd(&q2, "Q2").unwrap();
    }

    #[test]
    fn row_kernel_variants() {
        let h3 = h_variant(200, HVariant::H3);
        assert!((h3[(0, 2)] - 0.16).abs() < 1e-15 && (h3[(0, 1)] + 0.4).abs() < 1e-15);
        assert!((h3[(100, 101)] + 0.8).abs() < 1e-15 && h3[(0, 150)] == 0.0);
        let h4 = h_variant(200, HVariant::H4);
        assert!((h4[(0, 1)] - 0.9).abs() < 1e-15);
        assert!((h4[(100, 101)] + 0.002).abs() < 1e-15 && (h4[(100, 102)] - 0.002).abs() < 1e-15);
        assert!((h4[(0, 151)] + 0.002).abs() < 1e-15 && (h4[(0, 150)] - 0.002).abs() < 1e-15);
        let h5 = h_variant(200, HVariant::H5);
        assert!((h5[(18, 19)] - 0.9).abs() < 1e-15 && (h5[(19, 20)] + 0.005).abs() < 1e-15);
        let h6 = h_variant(200, HVariant::H6);
        assert!((h6[(5, 8)] + 0.125).abs() < 1e-15);
        for v in [HVariant::H1, HVariant::H2, HVariant::H3, HVariant::H4, HVariant::H5, HVariant::H6] {
            let h = h_variant(200, v);
            assert_eq!(h, h.transpose());
            check_spd(&h, "H").unwrap();
        }
        // the literal entries put the smallest eigenvalues below 0.05
        let min4 = SymEigen::new(&h4).values[199];
        let min5 = SymEigen::new(&h5).values[199];
        assert!((0.015..0.025).contains(&min4) && (0.005..0.01).contains(&min5), "{min4} {min5}");
    }

    #[test]
    fn signal_lives_on_first_block() {
        let beta = setting_signal(300);
        assert!(beta.rows(150, 150).iter().all(|&b| b == 0.0));
        assert!(beta.rows(0, 150).iter().all(|&b| b != 0.0));
        let eig = SymEigen::new(&column_precision(300));
        let mut full = DVector::zeros(300);
        for j in 0..10 {
            full.axpy(1.0 / ((j + 1) as f64).sqrt(), &eig.vectors.column(j), 1.0);
        }
        assert!((full - &beta).amax() < 1e-8);
    }

    #[test]
    fn full_truncation_is_true_precision() {
        let rprec = row_precision(200);
        let r = inverse_spd(&rprec, "R").unwrap();
        let (h, k) = truncated_kernel(&r, 1.0).unwrap();
        assert_eq!(k, 200);
        assert!((h - &rprec).amax() < 1e-8);
        let (h5, k5) = truncated_kernel(&r, 0.5).unwrap();
        assert!(k5 < 200);
        check_spd(&h5, "H(0.5)").unwrap();
        assert!(truncated_kernel(&r, 0.0).is_err());
    }

    #[test]
    fn threshold_and_coefficients() {
        assert_eq!(hard_threshold(0.05, 0.1), 0.0);
        assert_eq!(hard_threshold(0.2, 0.1), 0.2);
        assert_eq!(hard_threshold(-0.3, 0.1), -0.3);
        let coefs: Vec<f64> = (1..=10).map(|j| 1.0 / (2.0 + 3.0 * (j as f64 - 1.0)).sqrt()).collect();
        assert!((coefs[0] - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((coefs[1] - 0.2f64.sqrt()).abs() < 1e-15);
        assert!((coefs[2] - 0.125f64.sqrt()).abs() < 1e-15);
        let mut r = rng(81);
        let q = crate::testutil::random_spd(12, &mut r);
        let raw = eigvec_signal(&q, &coefs, 0.0).unwrap();
        let cut = eigvec_signal(&q, &coefs, 0.1).unwrap();
        for i in 0..12 {
            assert_eq!(cut[i], hard_threshold(raw[i], 0.1));
        }
    }

    #[test]
    fn matrix_normal_moments() {
        let mut r = rng(82);
        let x = matrix_variate_normal(2000, 5, &DMatrix::identity(2000, 2000), &DMatrix::identity(5, 5), &mut r).unwrap();
        let cov = x.transpose() * &x / 2000.0;
        assert!((cov - DMatrix::identity(5, 5)).amax() < 0.15);

        let rr = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]);
        let ss = DMatrix::from_row_slice(2, 2, &[1.5, -0.3, -0.3, 0.8]);
        let draws = 100_000;
        let mut acc = DMatrix::zeros(4, 4);
        for _ in 0..draws {
            let x = matrix_variate_normal(2, 2, &rr, &ss, &mut r).unwrap();
            let v = DVector::from_column_slice(x.as_slice());
            acc += &v * v.transpose();
        }
        let kron = ss.kronecker(&rr);
        assert!((acc / draws as f64 - kron).amax() < 0.05);

        let i3 = DMatrix::identity(3, 3);
        let k = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let a = matrix_variate_normal(3, 3, &i3, &k, &mut rng(5)).unwrap();
        let b = matrix_variate_normal(3, 3, &i3, &k, &mut rng(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn setting_one_hits_target_r_squared() {
        let spec = SettingSpec::new(Scenario::SettingI { r_squared: 0.6 }, 3);
        let m = SettingMatrices::build(&spec).unwrap();
        let d = m.generate(0).unwrap();
        assert!((d.realized_r_squared - 0.6).abs() < 0.15);
        assert_eq!(d.truth_mask.iter().filter(|&&t| t).count(), 150);
        let again = m.generate(0).unwrap();
        assert_eq!(d.data.y, again.data.y);
        assert_ne!(d.data.y, m.generate(1).unwrap().data.y);
    }

    #[test]
    fn response_is_unbiased_given_x() {
        // residual y − Xβ* regressed on a few columns gives near-zero slopes
        let spec = SettingSpec {
            n: 400,
            p: 20,
            ..SettingSpec::new(Scenario::SettingI { r_squared: 0.5 }, 4)
        };
        let m = SettingMatrices::build(&spec).unwrap();
        let d = m.generate(0).unwrap();
        let x = d.data.x.columns(0, 5).into_owned();
        let res = d.data.y.as_ref().unwrap() - &d.data.x * &d.beta_star;
        let xtx = x.transpose() * &x;
        let coef = xtx.clone().lu().solve(&(x.transpose() * &res)).unwrap();
        let rss = (&res - &x * &coef).norm_squared() / (400.0 - 5.0);
        let inv = xtx.try_inverse().unwrap();
        for j in 0..5 {
            assert!(coef[j].abs() < 3.0 * (rss * inv[(j, j)]).sqrt());
        }
    }

    #[test]
    fn perturbed_design_builds() {
        let spec = SettingSpec {
            n: 30,
            p: 20,
            ..SettingSpec::new(Scenario::Perturbed { delta: 0.5 }, 5)
        };
        let m = SettingMatrices::build(&spec).unwrap();
        let d = m.generate(2).unwrap();
        assert_eq!(d.data.x.shape(), (30, 20));
        assert!(d.truth_mask.iter().any(|&t| t));
    }
}
