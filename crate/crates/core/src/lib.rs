//! Estimation and inference for high-dimensional linear regression on
//! two-way structured data: a design `X` with a row kernel `H` and a column
//! kernel `Q`.
//!
//! * [`gmd`]: generalized matrix decomposition under the (H, Q)-norm.
//! * [`estimators`]: GMD regression and kernel penalized regression.
//! * [`inference`]: bias-corrected p-values for any member of the family.
//! * [`structure`]: kernel helpers and KRV / MiRKAT informativeness tests.
//! * [`robust`]: mixing weight for partially informative row kernels.
//! * [`simulate`]: data generators and experiment drivers.

pub mod dataset;
pub mod error;
pub mod estimators;
pub mod gmd;
pub mod inference;
pub mod linalg;
pub mod robust;
pub mod simulate;
pub mod structure;

#[cfg(test)]
pub(crate) mod testutil;

pub use dataset::{center_hq, standardize_columns, TwoWayDataset};
pub use error::{GmdError, Result};
pub use gmd::{gmd, GmdFactors};
