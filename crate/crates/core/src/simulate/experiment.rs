use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::settings::{SettingMatrices, SettingSpec, SimulatedData};
use crate::error::{GmdError, Result};
use crate::estimators::{loocv_rmse_many, ComponentSelection, EtaChoice, LoocvMethod, DEFAULT_CV_FOLDS};
use crate::inference::{EstimatorChoice, GmdiOptions, GmdiSession, InferenceReport};
use crate::robust::{estimate_tau, mixed_row_kernel};
use crate::structure::{krv, mirkat, DEFAULT_PERMUTATIONS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// GMDI on the GMD regression with VI + GCV selection.
    GmdiD,
    /// GMDI on kernel penalized regression with cross-validated η.
    GmdiK,
    RGmdiD,
    RGmdiK,
    /// KRV between `XᵀX` and the column kernel.
    KrvColumn,
    /// KRV between `XXᵀ` and the row kernel.
    KrvRow,
    /// MiRKAT between `y` and the row kernel.
    MirkatRow,
    LoocvVi,
    LoocvTop,
    LoocvKpr,
}

impl Method {
    fn is_screen(self) -> bool {
        matches!(self, Method::KrvColumn | Method::KrvRow | Method::MirkatRow)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOptions {
    pub alpha: f64,
    pub permutations: usize,
    /// Estimator-independent GMDI settings (`h`, `r`, `λ`, σ² method).
    pub gmdi: GmdiOptions,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            alpha: 0.05,
            permutations: DEFAULT_PERMUTATIONS,
            gmdi: GmdiOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodOutcome {
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub type_i: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_hat: Option<f64>,
}

impl MethodOutcome {
    fn empty(method: Method) -> Self {
        MethodOutcome {
            method,
            type_i: None,
            power: None,
            rmse: None,
            p_value: None,
            tau_hat: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    /// RNG stream of the replicate under the master seed.
    pub stream: u64,
    pub realized_r_squared: f64,
    pub outcomes: Vec<MethodOutcome>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(MeanSd { mean, sd })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub type_i: Option<MeanSd>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power: Option<MeanSd>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse: Option<MeanSd>,
    /// Share of replicates with `p < alpha` for screening methods.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rejection_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_hat: Option<MeanSd>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub config: SettingSpec,
    pub alpha: f64,
    pub permutations: usize,
    pub summaries: Vec<MethodSummary>,
    pub replicates: Vec<ReplicateRecord>,
}

impl SimulationReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }
}

/// Type-I error over true-zero coordinates and power over non-zero ones.
pub fn rejection_rates(p_values: &[f64], truth_mask: &[bool], alpha: f64) -> (f64, f64) {
    let (mut fp, mut nz, mut tp, mut nnz) = (0usize, 0usize, 0usize, 0usize);
    for (p, t) in p_values.iter().zip(truth_mask) {
        let reject = *p < alpha;
        if *t {
            nnz += 1;
            tp += usize::from(reject);
        } else {
            nz += 1;
            fp += usize::from(reject);
        }
    }
    let rate = |a: usize, b: usize| if b == 0 { f64::NAN } else { a as f64 / b as f64 };
    (rate(fp, nz), rate(tp, nnz))
}

fn column_centered(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut xc = x.clone();
    for j in 0..xc.ncols() {
        let m = xc.column(j).mean();
        xc.column_mut(j).add_scalar_mut(-m);
    }
    xc
}

fn gmdi_outcome(method: Method, report: &InferenceReport, sim: &SimulatedData, alpha: f64) -> MethodOutcome {
    let (t1, pw) = rejection_rates(&report.p_values(), &sim.truth_mask, alpha);
    MethodOutcome {
        type_i: Some(t1),
        power: Some(pw),
        ..MethodOutcome::empty(method)
    }
}

fn estimator_for(method: Method, stream: u64) -> EstimatorChoice {
    match method {
        Method::GmdiD | Method::RGmdiD => EstimatorChoice::Gmdr(ComponentSelection::default()),
        _ => EstimatorChoice::Kpr(EtaChoice::Cv {
            folds: DEFAULT_CV_FOLDS,
            seed: stream,
        }),
    }
}

/// Runs every method on one generated replicate.
pub fn run_replicate(
    sim: &SimulatedData,
    methods: &[Method],
    options: &ExperimentOptions,
    stream: u64,
) -> Result<Vec<MethodOutcome>> {
    let data = &sim.data;
    let alpha = options.alpha;
    let needs = |ms: &[Method]| methods.iter().any(|m| ms.contains(m));

    let session = if needs(&[Method::GmdiD, Method::GmdiK]) {
        Some(GmdiSession::new(data, &options.gmdi)?)
    } else {
        None
    };
    let robust = if needs(&[Method::RGmdiD, Method::RGmdiK]) {
        let w = estimate_tau(data)?;
        let mixed = data.with_h(mixed_row_kernel(&data.h, w.tau_hat))?;
        Some((w, GmdiSession::new(&mixed, &options.gmdi)?))
    } else {
        None
    };
    let loocv_methods: Vec<(Method, LoocvMethod)> = methods
        .iter()
        .filter_map(|m| match m {
            Method::LoocvVi => Some((*m, LoocvMethod::Gmdr(ComponentSelection::default()))),
            Method::LoocvTop => Some((
                *m,
                LoocvMethod::Gmdr(ComponentSelection::Top {
                    min_var_frac: crate::estimators::DEFAULT_MIN_VAR_FRAC,
                }),
            )),
            Method::LoocvKpr => Some((
                *m,
                LoocvMethod::Kpr(EtaChoice::Cv {
                    folds: DEFAULT_CV_FOLDS,
                    seed: stream,
                }),
            )),
            _ => None,
        })
        .collect();
    let rmses = if loocv_methods.is_empty() {
        Vec::new()
    } else {
        let ms: Vec<LoocvMethod> = loocv_methods.iter().map(|(_, l)| l.clone()).collect();
        loocv_rmse_many(data, &ms)?
    };
    let xc = if methods.iter().any(|m| m.is_screen()) {
        Some(column_centered(&data.x))
    } else {
        None
    };

    methods
        .iter()
        .map(|&m| -> Result<MethodOutcome> {
            Ok(match m {
                Method::GmdiD | Method::GmdiK => {
                    let s = session.as_ref().expect("session built");
                    let opts = GmdiOptions {
                        estimator: estimator_for(m, stream),
                        ..options.gmdi.clone()
                    };
                    gmdi_outcome(m, &s.infer(&opts)?, sim, alpha)
                }
                Method::RGmdiD | Method::RGmdiK => {
                    let (w, s) = robust.as_ref().expect("robust session built");
                    let opts = GmdiOptions {
                        estimator: estimator_for(m, stream),
                        ..options.gmdi.clone()
                    };
                    MethodOutcome {
                        tau_hat: Some(w.tau_hat),
                        ..gmdi_outcome(m, &s.infer(&opts)?, sim, alpha)
                    }
                }
                Method::KrvColumn | Method::KrvRow | Method::MirkatRow => {
                    let xc = xc.as_ref().expect("centered design");
                    let res = match m {
                        Method::KrvColumn => krv(&(xc.transpose() * xc), &data.q, options.permutations, stream)?,
                        Method::KrvRow => krv(&(xc * xc.transpose()), &data.h, options.permutations, stream)?,
                        _ => mirkat(data.response()?, &data.h, options.permutations, stream)?,
                    };
                    MethodOutcome {
                        p_value: Some(res.p_value),
                        ..MethodOutcome::empty(m)
                    }
                }
                Method::LoocvVi | Method::LoocvTop | Method::LoocvKpr => {
                    let k = loocv_methods.iter().position(|(mm, _)| *mm == m).expect("listed");
                    MethodOutcome {
                        rmse: Some(rmses[k]),
                        ..MethodOutcome::empty(m)
                    }
                }
            })
        })
        .collect()
}

pub fn run_experiment(spec: &SettingSpec, methods: &[Method], alpha: f64) -> Result<SimulationReport> {
    run_experiment_with(
        spec,
        methods,
        &ExperimentOptions {
            alpha,
            ..Default::default()
        },
    )
}

/// Replicates run in parallel; replicate `i` draws from RNG stream `i` of the
/// master seed, so results do not depend on scheduling.
pub fn run_experiment_with(
    spec: &SettingSpec,
    methods: &[Method],
    options: &ExperimentOptions,
) -> Result<SimulationReport> {
    if methods.is_empty() {
        return Err(GmdError::param("methods", "at least one method is required"));
    }
    if !(options.alpha > 0.0 && options.alpha < 1.0) {
        return Err(GmdError::param("alpha", "must lie in (0, 1)"));
    }
    if spec.replicates == 0 {
        return Err(GmdError::param("replicates", "must be at least 1"));
    }
    let mut unique = methods.to_vec();
    unique.dedup();
    let matrices = SettingMatrices::build(spec)?;
    let replicates: Vec<ReplicateRecord> = (0..spec.replicates)
        .into_par_iter()
        .map(|i| {
            let wrap = |e: GmdError| GmdError::Replicate {
                replicate: i,
                source: Box::new(e),
            };
            let sim = matrices.generate(i).map_err(wrap)?;
            let outcomes = run_replicate(&sim, &unique, options, i as u64).map_err(wrap)?;
            Ok(ReplicateRecord {
                replicate: i,
                stream: i as u64,
                realized_r_squared: sim.realized_r_squared,
                outcomes,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SimulationReport {
        config: spec.clone(),
        alpha: options.alpha,
        permutations: options.permutations,
        summaries: summarize(&unique, &replicates, options.alpha),
        replicates,
    })
}

pub fn summarize(methods: &[Method], replicates: &[ReplicateRecord], alpha: f64) -> Vec<MethodSummary> {
    methods
        .iter()
        .map(|&m| {
            let outs: Vec<&MethodOutcome> = replicates
                .iter()
                .flat_map(|r| r.outcomes.iter().filter(move |o| o.method == m))
                .collect();
            let collect = |f: &dyn Fn(&MethodOutcome) -> Option<f64>| -> Option<MeanSd> {
                let v: Vec<f64> = outs.iter().filter_map(|o| f(o)).filter(|v| v.is_finite()).collect();
                MeanSd::of(&v)
            };
            let pv: Vec<f64> = outs.iter().filter_map(|o| o.p_value).collect();
            MethodSummary {
                method: m,
                type_i: collect(&|o| o.type_i),
                power: collect(&|o| o.power),
                rmse: collect(&|o| o.rmse),
                rejection_rate: (!pv.is_empty())
                    .then(|| pv.iter().filter(|&&p| p < alpha).count() as f64 / pv.len() as f64),
                tau_hat: collect(&|o| o.tau_hat),
            }
        })
        .collect()
}
