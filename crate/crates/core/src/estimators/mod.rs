//! The estimator family `β^w = Q V W S⁻¹ Uᵀ H y`: GMD regression with
//! component selection, kernel penalized regression, and leave-one-out
//! prediction error.

mod dual;
mod gmdr;
mod kpr;
mod loocv;
mod weights;

pub use dual::DualFit;
pub use gmdr::{
    fit_gamma, fit_gmdr, fit_gmdr_with, gcv_path_for_order, select_components,
    select_from_scores, vi_scores, ComponentSelection, Selection, DEFAULT_MIN_VAR_FRAC,
};
pub use kpr::{eta_grid, fit_kpr, fit_kpr_with, kpr_dual_solve, EtaChoice, DEFAULT_CV_FOLDS};
pub(crate) use kpr::fold_assignment;
pub use loocv::{loocv_rmse, loocv_rmse_many, LoocvMethod};
pub use weights::{estimate_from_weights, GmdEstimate, WeightKind, WeightSpec};
