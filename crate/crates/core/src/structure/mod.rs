//! Kernel construction helpers and permutation screens for whether a row or
//! column kernel carries information about the data.

mod kernels;
mod screens;

pub use kernels::{
    clr_transform, gower_center, gram_from_sq_distance, inverse_euclidean_kernel,
    kernel_from_sq_distance, DISTANCE_EIGEN_FLOOR,
};
pub use screens::{
    column_structure_informative, krv, mirkat, row_structure_informative, rv_coefficient,
    KernelTestResult, DEFAULT_PERMUTATIONS,
};
