use std::fs;

use gmdkit::estimators::{
    fit_gmdr_with, fit_kpr, loocv_rmse, ComponentSelection, EtaChoice, GmdEstimate, LoocvMethod,
};
use gmdkit::inference::{run_gmdi, BiasSwitch, EstimatorChoice, GmdiOptions, InferenceReport};
use gmdkit::robust::{estimate_tau, mixed_row_kernel, RobustWeights};
use gmdkit::simulate::{run_experiment_with, ExperimentOptions, Method, Scenario, SettingSpec, SimulationReport};
use gmdkit::structure::{krv, mirkat, KernelTestResult};
use gmdkit::{center_hq, gmd, standardize_columns, TwoWayDataset};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::*;
use crate::error::CliError;
use crate::io::{load_matrix, load_vector, Role};

pub const SCHEMA_VERSION: &str = "1";

fn envelope(command: &str, config: &impl Serialize, body: Value) -> Result<Value, CliError> {
    let mut out = json!({
        "command": command,
        "schema_version": SCHEMA_VERSION,
        "config": serde_json::to_value(config).map_err(|e| CliError::input(e.to_string()))?,
    });
    if let (Some(o), Value::Object(b)) = (out.as_object_mut(), body) {
        o.extend(b);
    }
    Ok(out)
}

fn load_data(args: &DataArgs, need_y: bool) -> Result<TwoWayDataset, CliError> {
    let x = load_matrix(&args.x, Role::X)?;
    let (n, p) = x.shape();
    let h = match &args.h {
        Some(path) => load_matrix(path, Role::H)?,
        None => DMatrix::identity(n, n),
    };
    let q = match &args.q {
        Some(path) => load_matrix(path, Role::Q)?,
        None => DMatrix::identity(p, p),
    };
    let y = match &args.y {
        Some(path) => Some(load_vector(path)?),
        None if need_y => return Err(CliError::input("--y is required for this command")),
        None => None,
    };
    if h.shape() != (n, n) {
        return Err(CliError::input(format!(
            "H must be {n}x{n} to match X ({n}x{p}), found {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    if q.shape() != (p, p) {
        return Err(CliError::input(format!(
            "Q must be {p}x{p} to match X ({n}x{p}), found {}x{}",
            q.nrows(),
            q.ncols()
        )));
    }
    if let Some(y) = &y {
        if y.len() != n {
            return Err(CliError::input(format!("y must have {n} entries to match X, found {}", y.len())));
        }
    }
    let d = TwoWayDataset::new(x, h, q, y)?;
    d.validate()?;
    Ok(d)
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn decompose(args: &DecomposeArgs) -> Result<Value, CliError> {
    let data = load_data(&args.data, false)?;
    let data = if args.no_center { data } else { center_hq(&data)? };
    let f = gmd(&data, args.rank)?;
    envelope(
        "decompose",
        args,
        json!({
            "rank": f.rank(),
            "sigma": f.sigma,
            "u": rows(&f.u),
            "v": rows(&f.v),
        }),
    )
}

fn parse_eta(raw: &str, folds: usize, seed: u64) -> Result<EtaChoice, CliError> {
    if raw.eq_ignore_ascii_case("cv") {
        return Ok(EtaChoice::Cv { folds, seed });
    }
    match raw.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(EtaChoice::Fixed(v)),
        _ => Err(CliError::input(format!("--eta must be a nonnegative number or `cv`, got {raw:?}"))),
    }
}

fn selection(order: Ordering, fixed: Option<usize>, given: Option<&[usize]>, min_var_frac: f64) -> Result<ComponentSelection, CliError> {
    if let Some(idx) = given {
        if idx.iter().any(|&j| j == 0) {
            return Err(CliError::input("--components are one-based"));
        }
        return Ok(ComponentSelection::Given(idx.iter().map(|j| j - 1).collect()));
    }
    Ok(match (fixed, order) {
        (Some(k), _) => ComponentSelection::FixedTopK(k),
        (None, Ordering::Vi) => ComponentSelection::Vi { min_var_frac },
        (None, Ordering::Top) => ComponentSelection::Top { min_var_frac },
    })
}

fn prepare(data: &TwoWayDataset, standardize: bool) -> Result<(TwoWayDataset, Vec<f64>), CliError> {
    let centered = center_hq(data)?;
    Ok(if standardize {
        standardize_columns(&centered)?
    } else {
        let p = centered.p();
        (centered, vec![1.0; p])
    })
}

fn fit_body(est: &GmdEstimate, scales: &[f64], rmse: Option<f64>) -> Value {
    let beta: Vec<f64> = est.beta.iter().zip(scales).map(|(b, s)| b / s).collect();
    let selected = est
        .weight
        .selected
        .as_ref()
        .map(|s| s.iter().map(|j| j + 1).collect::<Vec<_>>());
    json!({
        "beta": beta,
        "weights": est.weight.weights,
        "eta": est.weight.eta,
        "selected": selected,
        "vi_scores": est.vi_scores,
        "gcv_path": est.gcv_path,
        "rmse": rmse,
    })
}

pub fn fit_gmdr(args: &GmdrArgs) -> Result<Value, CliError> {
    let data = load_data(&args.data, true)?;
    let sel = selection(args.order, args.fixed_top_k, args.components.as_deref(), args.min_var_frac)?;
    let (prep, scales) = prepare(&data, !args.no_standardize)?;
    let factors = gmd(&prep, None)?;
    let est = fit_gmdr_with(&prep, &factors, &sel)?;
    let rmse = if args.loocv {
        Some(loocv_rmse(&prep, &LoocvMethod::Gmdr(sel))?)
    } else {
        None
    };
    envelope("fit gmdr", args, fit_body(&est, &scales, rmse))
}

pub fn fit_kpr_cmd(args: &KprArgs) -> Result<Value, CliError> {
    let data = load_data(&args.data, true)?;
    let eta = parse_eta(&args.eta, args.folds, args.seed)?;
    let (prep, scales) = prepare(&data, !args.no_standardize)?;
    let est = fit_kpr(&prep, eta)?;
    let rmse = if args.loocv {
        Some(loocv_rmse(&prep, &LoocvMethod::Kpr(eta))?)
    } else {
        None
    };
    envelope("fit kpr", args, fit_body(&est, &scales, rmse))
}

fn infer_body(report: &InferenceReport, args: &InferArgs, robust: Option<&RobustWeights>) -> Value {
    let coefficients: Vec<Value> = report
        .coefficients
        .iter()
        .map(|c| {
            let significant = match (args.fdr, c.q_value) {
                (Some(level), Some(q)) => q < level,
                _ => c.p_value < args.alpha,
            };
            let mut v = json!({
                "j": c.j + 1,
                "beta_w": c.beta_w,
                "bias_hat": c.bias_hat,
                "beta_corrected": c.beta_corrected,
                "psi": c.psi,
                "r_jj": c.r_jj,
                "p_value": c.p_value,
                "significant": significant,
            });
            if let Some(q) = c.q_value {
                v["q_value"] = json!(q);
            }
            v
        })
        .collect();
    json!({
        "sigma2_hat": report.sigma2_hat,
        "lambda": report.lambda,
        "h": args.bias_switch,
        "r": report.r_sparsity,
        "eta": report.estimate.weight.eta,
        "selected": report.estimate.weight.selected.as_ref().map(|s| s.iter().map(|j| j + 1).collect::<Vec<_>>()),
        "column_scales": report.column_scales,
        "robust": robust,
        "coefficients": coefficients,
    })
}

pub fn infer(args: &InferArgs) -> Result<Value, CliError> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::input("--alpha must lie in (0, 1)"));
    }
    if let Some(level) = args.fdr {
        if !(level > 0.0 && level < 1.0) {
            return Err(CliError::input("--fdr must lie in (0, 1)"));
        }
    }
    let data = load_data(&args.data, true)?;
    let estimator = match args.estimator {
        Estimator::Gmdr => EstimatorChoice::Gmdr(selection(args.order, args.fixed_top_k, None, args.min_var_frac)?),
        Estimator::Kpr => EstimatorChoice::Kpr(parse_eta(&args.eta, args.folds, args.seed)?),
    };
    let options = GmdiOptions {
        estimator,
        h: BiasSwitch::Uniform(args.bias_switch),
        r: args.r,
        lambda: args.lambda,
        sigma2: args.sigma2,
        standardize: !args.no_standardize,
        q_values: args.fdr.is_some(),
        ..GmdiOptions::default()
    };
    let (robust, data) = if args.robust {
        let w = estimate_tau(&data)?;
        let mixed = data.with_h(mixed_row_kernel(&data.h, w.tau_hat))?;
        (Some(w), mixed)
    } else {
        (None, data)
    };
    let report = run_gmdi(&data, &options)?;
    envelope("infer", args, infer_body(&report, args, robust.as_ref()))
}

fn screen_body(res: &KernelTestResult, alpha: f64) -> Value {
    json!({
        "statistic": res.statistic,
        "p_value": res.p_value,
        "n_permutations": res.n_permutations,
        "seed": res.seed,
        "alpha": alpha,
        "significant": res.significant(alpha),
    })
}

fn check_alpha(alpha: f64) -> Result<(), CliError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CliError::input("--alpha must lie in (0, 1)"))
    }
}

pub fn structtest_krv(args: &KrvArgs) -> Result<Value, CliError> {
    check_alpha(args.screen.alpha)?;
    let x = load_matrix(&args.x, Role::X)?;
    let k = load_matrix(&args.screen.kernel, Role::K)?;
    let mut xc = x.clone();
    for mut col in xc.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    let kx = match args.side {
        Side::Row => &xc * xc.transpose(),
        Side::Column => xc.transpose() * &xc,
    };
    let res = krv(&kx, &k, args.screen.b, args.screen.seed)?;
    envelope("structtest krv", args, screen_body(&res, args.screen.alpha))
}

pub fn structtest_mirkat(args: &MirkatArgs) -> Result<Value, CliError> {
    check_alpha(args.screen.alpha)?;
    let y: DVector<f64> = load_vector(&args.y)?;
    let k = load_matrix(&args.screen.kernel, Role::K)?;
    let res = mirkat(&y, &k, args.screen.b, args.screen.seed)?;
    envelope("structtest mirkat", args, screen_body(&res, args.screen.alpha))
}

pub fn robust_tau(args: &RobustArgs) -> Result<Value, CliError> {
    let data = load_data(&args.data, true)?;
    let w = estimate_tau(&data)?;
    envelope(
        "robust-tau",
        args,
        serde_json::to_value(&w).map_err(|e| CliError::input(e.to_string()))?,
    )
}

fn scenario(args: &SimulateArgs) -> Scenario {
    match args.setting {
        Setting::I => Scenario::SettingI { r_squared: args.r2 },
        Setting::II => Scenario::SettingII {
            q: args.q_variant.into(),
            r_squared: args.r2,
        },
        Setting::III => Scenario::SettingIII { h: args.h_variant.into() },
        Setting::IV => Scenario::SettingIV { theta: args.theta },
        Setting::Perturbed => Scenario::Perturbed { delta: args.delta },
    }
}

fn default_methods(setting: Setting) -> Vec<Method> {
    match setting {
        Setting::I | Setting::Perturbed => vec![Method::GmdiD, Method::GmdiK],
        Setting::II => vec![Method::KrvColumn, Method::GmdiD, Method::GmdiK],
        Setting::III => vec![Method::KrvRow, Method::MirkatRow],
        Setting::IV => vec![Method::GmdiK, Method::RGmdiK],
    }
}

fn replicate_csv(report: &SimulationReport) -> String {
    let cell = |v: Option<f64>| v.map(crate::io::format_value).unwrap_or_default();
    let mut out = String::from("replicate,method,type_i,power,rmse,p_value,tau_hat,realized_r_squared\n");
    for r in &report.replicates {
        for o in &r.outcomes {
            let method = serde_json::to_value(o.method).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.replicate,
                method,
                cell(o.type_i),
                cell(o.power),
                cell(o.rmse),
                cell(o.p_value),
                cell(o.tau_hat),
                crate::io::format_value(r.realized_r_squared),
            ));
        }
    }
    out
}

pub fn simulate(args: &SimulateArgs) -> Result<Value, CliError> {
    let mut spec = SettingSpec::new(scenario(args), args.seed);
    spec.replicates = args.reps;
    if let Some(n) = args.n {
        spec.n = n;
    }
    if let Some(p) = args.p {
        spec.p = p;
    }
    let methods = args.methods.clone().unwrap_or_else(|| default_methods(args.setting));
    let options = ExperimentOptions {
        alpha: args.alpha,
        permutations: args.permutations,
        ..ExperimentOptions::default()
    };
    let report = run_experiment_with(&spec, &methods, &options)?;
    if let Some(path) = &args.csv {
        fs::write(path, replicate_csv(&report))
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    }
    let mut body = serde_json::to_value(&report).map_err(|e| CliError::input(e.to_string()))?;
    if let Some(o) = body.as_object_mut() {
        if let Some(spec) = o.remove("config") {
            o.insert("spec".into(), spec);
        }
    }
    envelope("simulate", args, body)
}
