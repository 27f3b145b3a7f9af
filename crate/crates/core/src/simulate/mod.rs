//! Data generators for the benchmark scenarios and a parallel experiment
//! driver reporting type-I error, power, prediction error and screening
//! rates.

mod experiment;
mod noise;
mod settings;

pub use experiment::{
    rejection_rates, run_experiment, run_experiment_with, run_replicate, summarize,
    ExperimentOptions, MeanSd, Method, MethodOutcome, MethodSummary, ReplicateRecord,
    SimulationReport,
};
pub use noise::{perturbed_noise, whitened_deviation, NoiseModel};
pub use settings::{
    block_kernel, build_setting, column_precision, eigvec_signal, h_variant, hard_threshold,
    matrix_variate_normal, matrix_variate_normal_factored, q_variant, replicate_rng,
    row_precision, setting_signal, truncated_kernel, HVariant, QVariant, Scenario,
    SettingMatrices, SettingSpec, SimulatedData, TRUNCATED_KERNEL_RIDGE,
};
