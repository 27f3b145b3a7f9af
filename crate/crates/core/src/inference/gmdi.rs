//! Bias-corrected estimates, variances, bias bounds and p-values for a
//! fitted member of the GMD estimator family.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use super::fdr::by_qvalues;
use super::initial::{initial_from_rotated, InitialEstimate, RotatedDesign};
use super::sigma::{sigma2_from_rotated, SigmaMethod};
use crate::dataset::{center_hq, standardize_columns, TwoWayDataset};
use crate::error::{GmdError, Result};
use crate::estimators::{
    fit_gmdr_with, fit_kpr_with, ComponentSelection, EtaChoice, GmdEstimate, WeightSpec,
};
use crate::gmd::{gmd, GmdFactors};

pub const DEFAULT_SPARSITY_R: f64 = 0.05;

/// Per-coefficient bias-correction switch `h_j ∈ {0, 1}`.
#[derive(Debug, Clone, PartialEq)]
pub enum BiasSwitch {
    Uniform(u8),
    PerCoefficient(Vec<u8>),
}

impl Default for BiasSwitch {
    fn default() -> Self {
        BiasSwitch::Uniform(1)
    }
}

impl BiasSwitch {
    fn resolve(&self, p: usize) -> Result<Vec<f64>> {
        let hs = match self {
            BiasSwitch::Uniform(h) => vec![*h; p],
            BiasSwitch::PerCoefficient(v) => {
                if v.len() != p {
                    return Err(GmdError::dims("h", p, v.len()));
                }
                v.clone()
            }
        };
        if hs.iter().any(|&h| h > 1) {
            return Err(GmdError::param("h", "entries must be 0 or 1"));
        }
        Ok(hs.into_iter().map(f64::from).collect())
    }
}

/// `Ξ = Q V W Vᵀ`
pub fn xi_matrix(factors: &GmdFactors, weight: &WeightSpec, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_weight(factors, weight)?;
    let mut vw = factors.v.clone();
    for (k, w) in weight.weights.iter().enumerate() {
        vw.column_mut(k).scale_mut(*w);
    }
    Ok(q * (vw * factors.v.transpose()))
}

fn check_weight(factors: &GmdFactors, weight: &WeightSpec) -> Result<()> {
    if weight.weights.len() != factors.rank() {
        return Err(GmdError::dims("weights", factors.rank(), weight.weights.len()));
    }
    Ok(())
}

/// `β̂_j = β_j^w − Σ_{m≠j} ξ_jm β_m^init − h_j (ξ_jj − 1) β_j^init`
pub fn bias_correct(
    beta_w: &DVector<f64>,
    xi: &DMatrix<f64>,
    beta_init: &DVector<f64>,
    h: &BiasSwitch,
) -> Result<DVector<f64>> {
    let p = beta_w.len();
    if xi.shape() != (p, p) || beta_init.len() != p {
        return Err(GmdError::dims("bias correction inputs", p, beta_init.len()));
    }
    let hs = h.resolve(p)?;
    let full = xi * beta_init;
    Ok(DVector::from_fn(p, |j, _| {
        let xjj = xi[(j, j)];
        let off = full[j] - xjj * beta_init[j];
        beta_w[j] - off - hs[j] * (xjj - 1.0) * beta_init[j]
    }))
}

/// Diagonal of `σ² Q V W² S⁻² Vᵀ Q`.
pub fn variance_rjj(
    factors: &GmdFactors,
    weight: &WeightSpec,
    q: &DMatrix<f64>,
    sigma2: f64,
) -> Result<DVector<f64>> {
    check_weight(factors, weight)?;
    if weight.is_empty() {
        return Err(GmdError::EmptyWeight);
    }
    if !(sigma2 > 0.0) {
        return Err(GmdError::param("sigma2", "must be positive"));
    }
    let mut a = q * &factors.v;
    for k in 0..factors.rank() {
        a.column_mut(k)
            .scale_mut(weight.weights[k] / factors.sigma[k]);
    }
    Ok(DVector::from_fn(a.nrows(), |j, _| sigma2 * a.row(j).norm_squared()))
}

/// `Ψ_j = ‖[(Ξ − (1 − h_j) diag(Ξ) − h_j I) D]_(j,·)‖_∞ (log p / n)^{1/2 − r}`
pub fn psi_bound(
    xi: &DMatrix<f64>,
    d: &DMatrix<f64>,
    h: &BiasSwitch,
    r: f64,
    n: usize,
) -> Result<DVector<f64>> {
    if !(r > 0.0 && r < 0.5) {
        return Err(GmdError::param("r", "must lie in (0, 1/2)"));
    }
    let p = xi.nrows();
    let hs = h.resolve(p)?;
    let mut m = xi.clone();
    for j in 0..p {
        m[(j, j)] -= (1.0 - hs[j]) * xi[(j, j)] + hs[j];
    }
    let md = m * d;
    let rate = ((p as f64).ln() / n as f64).powf(0.5 - r);
    Ok(DVector::from_fn(p, |j, _| md.row(j).amax() * rate))
}

/// `2 {1 − Φ((|β̂_j| − Ψ_j)₊ / √R_jj)}`
pub fn p_values(beta_corrected: &DVector<f64>, psi: &DVector<f64>, r_jj: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(beta_corrected.len(), |j, _| {
        let z = (beta_corrected[j].abs() - psi[j]).max(0.0) / r_jj[j].sqrt();
        erfc(z / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
    })
}

/// Smallest `|β_j*|` for which a level-`alpha` test reaches the power
/// guarantee indexed by `power_target`.
pub fn min_detectable_effect(xi_jj: f64, h_j: u8, psi_j: f64, r_jj: f64, alpha: f64, power_target: f64) -> Result<f64> {
    for (name, v) in [("alpha", alpha), ("power_target", power_target)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(GmdError::param(name, "must lie in (0, 1)"));
        }
    }
    let h = f64::from(h_j.min(1));
    let denom = ((1.0 - h) * xi_jj + h).abs();
    if denom == 0.0 {
        return Err(GmdError::param("h", "xi_jj is zero; use h = 1"));
    }
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    let qa = std.inverse_cdf(1.0 - alpha / 2.0);
    let qp = std.inverse_cdf(1.0 - power_target / 2.0);
    Ok((2.0 * psi_j + (qa + qp) * r_jj.sqrt()) / denom)
}

#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorChoice {
    Gmdr(ComponentSelection),
    Kpr(EtaChoice),
}

#[derive(Debug, Clone)]
pub struct GmdiOptions {
    pub estimator: EstimatorChoice,
    pub h: BiasSwitch,
    pub r: f64,
    pub lambda: Option<f64>,
    pub sigma: SigmaMethod,
    /// Known noise variance; skips the organic lasso when set.
    pub sigma2: Option<f64>,
    pub standardize: bool,
    pub q_values: bool,
}

impl Default for GmdiOptions {
    fn default() -> Self {
        GmdiOptions {
            estimator: EstimatorChoice::Gmdr(ComponentSelection::default()),
            h: BiasSwitch::default(),
            r: DEFAULT_SPARSITY_R,
            lambda: None,
            sigma: SigmaMethod::FixedRate,
            sigma2: None,
            standardize: true,
            q_values: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoefficientReport {
    pub j: usize,
    pub beta_w: f64,
    pub bias_hat: f64,
    pub beta_corrected: f64,
    pub psi: f64,
    pub r_jj: f64,
    pub p_value: f64,
    pub h: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_value: Option<f64>,
}

/// Coefficients are reported on the standardized column scale;
/// `column_scales[j]` converts back (`β_original = β / scale`).
#[derive(Debug, Clone, Serialize)]
pub struct InferenceReport {
    pub coefficients: Vec<CoefficientReport>,
    pub sigma2_hat: f64,
    pub lambda: f64,
    pub r_sparsity: f64,
    pub xi_diag: Vec<f64>,
    pub column_scales: Vec<f64>,
    pub estimate: GmdEstimate,
    pub initial: InitialEstimate,
}

impl InferenceReport {
    pub fn p_values(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.p_value).collect()
    }
}

/// Shared state for running several estimators on one dataset: the
/// prepared data, its decomposition, the initial estimate and `σ̂²`.
#[derive(Debug, Clone)]
pub struct GmdiSession {
    pub prepared: TwoWayDataset,
    pub column_scales: Vec<f64>,
    pub factors: GmdFactors,
    pub initial: InitialEstimate,
    pub sigma2_hat: f64,
}

impl GmdiSession {
    /// Centers, standardizes (if requested), decomposes and computes the
    /// estimator-independent parts of the pipeline.
    pub fn new(data: &TwoWayDataset, options: &GmdiOptions) -> Result<Self> {
        let centered = center_hq(data)?;
        let (prepared, column_scales) = if options.standardize {
            standardize_columns(&centered)?
        } else {
            (centered, vec![1.0; data.p()])
        };
        Self::from_prepared(prepared, column_scales, options)
    }

    /// For data that is already centered.
    pub fn from_prepared(
        prepared: TwoWayDataset,
        column_scales: Vec<f64>,
        options: &GmdiOptions,
    ) -> Result<Self> {
        let factors = gmd(&prepared, None)?;
        let rd = RotatedDesign::new(&prepared)?;
        let initial = initial_from_rotated(&rd, options.lambda)?;
        let sigma2_hat = match options.sigma2 {
            Some(s) if s > 0.0 => s,
            Some(_) => return Err(GmdError::param("sigma2", "must be positive")),
            None => sigma2_from_rotated(&rd, options.sigma)?,
        };
        Ok(GmdiSession {
            prepared,
            column_scales,
            factors,
            initial,
            sigma2_hat,
        })
    }

    pub fn fit(&self, estimator: &EstimatorChoice) -> Result<GmdEstimate> {
        match estimator {
            EstimatorChoice::Gmdr(sel) => fit_gmdr_with(&self.prepared, &self.factors, sel),
            EstimatorChoice::Kpr(eta) => fit_kpr_with(&self.prepared, &self.factors, *eta),
        }
    }

    /// Fits `options.estimator` and runs the bias correction.
    pub fn infer(&self, options: &GmdiOptions) -> Result<InferenceReport> {
        let estimate = self.fit(&options.estimator)?;
        self.infer_estimate(estimate, options)
    }

    pub fn infer_estimate(&self, estimate: GmdEstimate, options: &GmdiOptions) -> Result<InferenceReport> {
        let p = self.prepared.p();
        let n = self.prepared.n();
        let q = &self.prepared.q;
        let xi = xi_matrix(&estimate.factors, &estimate.weight, q)?;
        let beta_w = estimate.beta_vec();
        let beta_init = self.initial.beta_init_vec();
        let corrected = bias_correct(&beta_w, &xi, &beta_init, &options.h)?;
        let r_jj = variance_rjj(&estimate.factors, &estimate.weight, q, self.sigma2_hat)?;
        let psi = psi_bound(&xi, &self.initial.eigen_basis, &options.h, options.r, n)?;
        let pv = p_values(&corrected, &psi, &r_jj);
        let qv = options.q_values.then(|| by_qvalues(pv.as_slice()));
        let hs = options.h.resolve(p)?;
        let coefficients = (0..p)
            .map(|j| CoefficientReport {
                j,
                beta_w: beta_w[j],
                bias_hat: beta_w[j] - corrected[j],
                beta_corrected: corrected[j],
                psi: psi[j],
                r_jj: r_jj[j],
                p_value: pv[j],
                h: hs[j] as u8,
                q_value: qv.as_ref().map(|q| q[j]),
            })
            .collect();
        Ok(InferenceReport {
            coefficients,
            sigma2_hat: self.sigma2_hat,
            lambda: self.initial.lambda,
            r_sparsity: options.r,
            xi_diag: (0..p).map(|j| xi[(j, j)]).collect(),
            column_scales: self.column_scales.clone(),
            estimate,
            initial: self.initial.clone(),
        })
    }
}

/// Centers, standardizes, decomposes, fits the requested estimator and
/// runs the bias-correction pipeline.
pub fn run_gmdi(data: &TwoWayDataset, options: &GmdiOptions) -> Result<InferenceReport> {
    GmdiSession::new(data, options)?.infer(options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::fit_gmdr;
    use crate::testutil::{random_matrix, random_spd, random_vector, rng};

    fn instance(n: usize, p: usize, seed: u64) -> TwoWayDataset {
        let mut r = rng(seed);
        center_hq(
            &TwoWayDataset::new(
                random_matrix(n, p, &mut r),
                random_spd(n, &mut r),
                random_spd(p, &mut r),
                Some(random_vector(n, &mut r)),
            )
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn exact_cancellation_with_true_initial() {
        let mut r = rng(31);
        let mut data = instance(12, 6, 31);
        let beta = random_vector(6, &mut r);
        data.y = Some(&data.x * &beta);
        let est = fit_gmdr(&data, Some(&[0, 2])).unwrap();
        let xi = xi_matrix(&est.factors, &est.weight, &data.q).unwrap();
        let c = bias_correct(&est.beta_vec(), &xi, &beta, &BiasSwitch::Uniform(1)).unwrap();
        assert!((c - beta).amax() < 1e-8);
    }

    #[test]
    fn h_zero_ignores_own_initial_value() {
        let mut r = rng(32);
        let data = instance(10, 5, 32);
        let est = fit_gmdr(&data, Some(&[0, 1])).unwrap();
        let xi = xi_matrix(&est.factors, &est.weight, &data.q).unwrap();
        let init = random_vector(5, &mut r);
        let a = bias_correct(&est.beta_vec(), &xi, &init, &BiasSwitch::Uniform(0)).unwrap();
        let mut moved = init.clone();
        moved[3] += 7.0;
        let b = bias_correct(&est.beta_vec(), &xi, &moved, &BiasSwitch::Uniform(0)).unwrap();
        assert!((a[3] - b[3]).abs() < 1e-12);
    }

    #[test]
    fn bias_correction_matches_double_loop() {
        let mut r = rng(33);
        let data = instance(8, 5, 33);
        let est = fit_gmdr(&data, Some(&[1, 3, 4])).unwrap();
        let xi = xi_matrix(&est.factors, &est.weight, &data.q).unwrap();
        let init = random_vector(5, &mut r);
        let hs = vec![1u8, 0, 1, 0, 1];
        let got = bias_correct(&est.beta_vec(), &xi, &init, &BiasSwitch::PerCoefficient(hs.clone())).unwrap();
        for j in 0..5 {
            let mut b = 0.0;
            for m in 0..5 {
                if m != j {
                    b += xi[(j, m)] * init[m];
                }
            }
            b += f64::from(hs[j]) * (xi[(j, j)] - 1.0) * init[j];
            assert!((got[j] - (est.beta[j] - b)).abs() < 1e-12);
        }
    }

    #[test]
    fn variance_reduces_to_ols() {
        let mut r = rng(34);
        let x = random_matrix(15, 4, &mut r);
        let data = TwoWayDataset::plain(x.clone(), Some(random_vector(15, &mut r))).unwrap();
        let f = gmd(&data, None).unwrap();
        let w = WeightSpec::all(4);
        let rjj = variance_rjj(&f, &w, &data.q, 2.0).unwrap();
        let ols = (x.transpose() * &x).try_inverse().unwrap() * 2.0;
        for j in 0..4 {
            assert!((rjj[j] - ols[(j, j)]).abs() < 1e-10 * ols[(j, j)]);
        }
        let doubled = variance_rjj(&f, &w, &data.q, 4.0).unwrap();
        assert!((doubled - rjj * 2.0).amax() < 1e-12);
    }

    #[test]
    fn variance_matches_noise_propagation() {
        // With noise covariance H⁻¹, Cov(β^w) = A Aᵀ for A = QVWS⁻¹UᵀH L
        // where L Lᵀ = H⁻¹.
        let data = instance(10, 6, 35);
        let f = gmd(&data, None).unwrap();
        let w = WeightSpec::ridge(&f.sigma, 0.3).unwrap();
        let rjj = variance_rjj(&f, &w, &data.q, 1.0).unwrap();
        let hinv = data.h.clone().try_inverse().unwrap();
        let l = hinv.cholesky().unwrap().unpack();
        let mut vws = f.v.clone();
        for k in 0..f.rank() {
            vws.column_mut(k).scale_mut(w.weights[k] / f.sigma[k]);
        }
        let a = &data.q * vws * f.u.transpose() * &data.h * l;
        let omega = &a * a.transpose();
        for j in 0..6 {
            assert!((omega[(j, j)] - rjj[j]).abs() < 1e-8 * rjj[j].max(1.0));
        }
    }

    #[test]
    fn empty_weight_is_rejected() {
        let data = instance(6, 3, 36);
        let f = gmd(&data, None).unwrap();
        let w = WeightSpec::index_set(f.rank(), &[]).unwrap();
        assert_eq!(variance_rjj(&f, &w, &data.q, 1.0), Err(GmdError::EmptyWeight));
    }

    #[test]
    fn psi_vanishes_for_full_weight() {
        let data = instance(12, 5, 37);
        let f = gmd(&data, None).unwrap();
        let xi = xi_matrix(&f, &WeightSpec::all(5), &data.q).unwrap();
        let d = crate::linalg::SymEigen::new(&data.q).vectors;
        let psi = psi_bound(&xi, &d, &BiasSwitch::Uniform(1), 0.05, 12).unwrap();
        assert!(psi.amax() < 1e-10);
    }

    #[test]
    fn psi_matches_loop_and_is_monotone_in_r() {
        let data = instance(9, 6, 38);
        let est = fit_gmdr(&data, Some(&[0, 1, 2])).unwrap();
        let xi = xi_matrix(&est.factors, &est.weight, &data.q).unwrap();
        let d = crate::linalg::SymEigen::new(&data.q).vectors;
        let h = BiasSwitch::PerCoefficient(vec![1, 0, 1, 1, 0, 0]);
        let psi = psi_bound(&xi, &d, &h, 0.05, 9).unwrap();
        let hs = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        let rate = (6f64.ln() / 9.0).powf(0.45);
        for j in 0..6 {
            let mut best: f64 = 0.0;
            for c in 0..6 {
                let mut s = 0.0;
                for m in 0..6 {
                    let mut e = xi[(j, m)];
                    if m == j {
                        e -= (1.0 - hs[j]) * xi[(j, j)] + hs[j];
                    }
                    s += e * d[(m, c)];
                }
                best = best.max(s.abs());
            }
            assert!((psi[j] - best * rate).abs() < 1e-12);
        }
        let wide = psi_bound(&xi, &d, &h, 0.45, 9).unwrap();
        assert!((0..6).all(|j| psi[j] < wide[j]));
        assert!(psi_bound(&xi, &d, &h, 0.5, 9).is_err());
    }

    #[test]
    fn p_value_identities() {
        let pv = p_values(
            &DVector::from_vec(vec![0.5, 1.959964 + 0.1, -3.0]),
            &DVector::from_vec(vec![0.6, 0.1, 0.0]),
            &DVector::from_vec(vec![1.0, 1.0, 4.0]),
        );
        assert_eq!(pv[0], 1.0);
        assert!((pv[1] - 0.05).abs() < 1e-6);
        assert!(pv[2] > 0.0 && pv[2] < pv[1] * 10.0);
    }

    #[test]
    fn p_values_are_monotone() {
        let r = DVector::from_element(1, 1.0);
        let mut last = 1.0;
        for k in 0..20 {
            let p = p_values(&DVector::from_element(1, k as f64 * 0.3), &DVector::from_element(1, 0.2), &r)[0];
            assert!(p <= last);
            last = p;
        }
        let a = p_values(&DVector::from_element(1, 2.0), &DVector::from_element(1, 0.1), &r)[0];
        let b = p_values(&DVector::from_element(1, 2.0), &DVector::from_element(1, 0.5), &r)[0];
        assert!(a <= b);
    }

    #[test]
    fn mde_arithmetic() {
        let m = min_detectable_effect(0.3, 1, 0.0, 4.0, 0.05, 0.05).unwrap();
        assert!((m - 2.0 * 1.959964 * 2.0).abs() < 1e-5);
        let m = min_detectable_effect(0.5, 1, 0.2, 1.0, 0.05, 0.05).unwrap();
        assert!((m - (0.4 + 2.0 * 1.959964)).abs() < 1e-5);
        let m0 = min_detectable_effect(0.5, 0, 0.2, 1.0, 0.05, 0.05).unwrap();
        assert!((m0 - m / 0.5).abs() < 1e-12);
        assert!(min_detectable_effect(0.0, 0, 0.2, 1.0, 0.05, 0.05).is_err());
    }

    #[test]
    fn full_rank_noiseless_gives_unit_p_values_on_zeros() {
        let mut r = rng(39);
        let x = random_matrix(30, 5, &mut r);
        let beta = DVector::from_vec(vec![2.0, 0.0, -1.5, 0.0, 0.0]);
        let y = &x * &beta + random_vector(30, &mut r) * 1e-9;
        let data = TwoWayDataset::plain(x, Some(y)).unwrap();
        let opts = GmdiOptions {
            estimator: EstimatorChoice::Gmdr(ComponentSelection::Given((0..5).collect())),
            sigma2: Some(1e-6),
            ..Default::default()
        };
        let rep = run_gmdi(&data, &opts).unwrap();
        for j in [1, 3, 4] {
            assert!(rep.coefficients[j].p_value > 0.9, "{:?}", rep.coefficients[j]);
            assert!(rep.coefficients[j].psi < 1e-10);
        }
        assert!(rep.coefficients[0].p_value < 1e-10);
    }

    #[test]
    fn report_is_deterministic() {
        let data = instance(25, 8, 40);
        let opts = GmdiOptions {
            q_values: true,
            ..Default::default()
        };
        let a = serde_json::to_string(&run_gmdi(&data, &opts).unwrap()).unwrap();
        let b = serde_json::to_string(&run_gmdi(&data, &opts).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}
