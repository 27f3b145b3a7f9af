//! Bias-corrected inference for GMD regression and kernel penalized
//! regression.

mod fdr;
mod gmdi;
mod initial;
pub mod lasso;
mod sigma;

pub use fdr::by_qvalues;
pub use gmdi::{
    bias_correct, min_detectable_effect, p_values, psi_bound, run_gmdi,
    variance_rjj, xi_matrix, BiasSwitch, CoefficientReport, EstimatorChoice, GmdiOptions, GmdiSession,
    InferenceReport, DEFAULT_SPARSITY_R,
};
pub use initial::{
    default_lambda, initial_estimator, initial_from_rotated, initial_objective, InitialEstimate,
    RotatedDesign,
};
pub use sigma::{
    estimate_sigma2, estimate_sigma2_with, organic_lasso, organic_objective, organic_rate,
    sigma2_from_rotated, OrganicFit, SigmaMethod,
};
