//! JSON experiment configuration.
//!
//! Required fields: system matrices `a`, `b`, constraint blocks `f`, `g`,
//! `f_bound`, the boxes `w_box` and `theta0_box`, `theta_true`, `x_start`
//! and `n_iterations`. Everything else has a documented default; see the
//! README for the schema and `configs/paper_sec5.json` for the canonical
//! example.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use almpc_core::controller::{ModelData, MpcConfig};
use almpc_core::polytope::HPolytope;
use almpc_core::safe_set::StageWeights;
use almpc_core::simulator::ExperimentConfig;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    #[serde(default)]
    e: Option<Vec<Vec<f64>>>,
    f: Vec<Vec<f64>>,
    g: Vec<Vec<f64>>,
    f_bound: Vec<f64>,
    w_box: Vec<[f64; 2]>,
    theta0_box: Vec<[f64; 2]>,
    theta_true: Vec<f64>,
    x_start: Vec<f64>,
    n_iterations: usize,
    #[serde(default)]
    horizon: Option<usize>,
    #[serde(default)]
    state_weights: Option<Vec<f64>>,
    #[serde(default)]
    input_weight: Option<f64>,
    #[serde(default)]
    lqr_q: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    lqr_r: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    rng_seed: Option<u64>,
    #[serde(default)]
    t0: Option<usize>,
    #[serde(default)]
    max_steps_per_iter: Option<usize>,
    #[serde(default)]
    eps_conv: Option<f64>,
    #[serde(default)]
    adaptation_enabled: Option<bool>,
}

fn matrix_from(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, CliError> {
    if rows.is_empty() {
        return Err(CliError::config(field, "matrix has no rows"));
    }
    let ncols = rows[0].len();
    if ncols == 0 {
        return Err(CliError::config(field, "matrix has no columns"));
    }
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::config(field, "ragged matrix rows"));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

fn box_from(field: &str, intervals: &[[f64; 2]]) -> Result<HPolytope, CliError> {
    let pairs: Vec<(f64, f64)> = intervals.iter().map(|i| (i[0], i[1])).collect();
    HPolytope::axis_box(&pairs).map_err(|e| CliError::config(field, &e.to_string()))
}

/// Applies `key=value` overrides to scalar fields before validation.
fn apply_override(raw: &mut RawConfig, entry: &str) -> Result<(), CliError> {
    let (key, value) = entry
        .split_once('=')
        .ok_or_else(|| CliError::config("override", "expected key=value"))?;
    let parse_u = |v: &str| {
        v.parse::<usize>()
            .map_err(|_| CliError::config(key, "expected an unsigned integer"))
    };
    let parse_f = |v: &str| {
        v.parse::<f64>()
            .map_err(|_| CliError::config(key, "expected a number"))
    };
    match key {
        "rng_seed" => {
            raw.rng_seed = Some(
                value
                    .parse::<u64>()
                    .map_err(|_| CliError::config(key, "expected an unsigned integer"))?,
            )
        }
        "n_iterations" => raw.n_iterations = parse_u(value)?,
        "horizon" => raw.horizon = Some(parse_u(value)?),
        "t0" => raw.t0 = Some(parse_u(value)?),
        "max_steps_per_iter" => raw.max_steps_per_iter = Some(parse_u(value)?),
        "eps_conv" => raw.eps_conv = Some(parse_f(value)?),
        "input_weight" => raw.input_weight = Some(parse_f(value)?),
        "adaptation_enabled" => {
            raw.adaptation_enabled = Some(
                value
                    .parse::<bool>()
                    .map_err(|_| CliError::config(key, "expected true or false"))?,
            )
        }
        other => {
            return Err(CliError::config(
                other,
                "not an overridable field (scalars only)",
            ))
        }
    }
    Ok(())
}

/// Reads, overrides and validates a configuration file.
pub fn parse_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::Io)?;
    let mut raw: RawConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::config("(document)", &e.to_string()))?;
    for entry in overrides {
        apply_override(&mut raw, entry)?;
    }
    finalize(raw)
}

fn finalize(raw: RawConfig) -> Result<ExperimentConfig, CliError> {
    let a = matrix_from("a", &raw.a)?;
    let n_x = a.nrows();
    if a.ncols() != n_x {
        return Err(CliError::config("a", "must be square"));
    }
    let b = matrix_from("b", &raw.b)?;
    if b.nrows() != n_x {
        return Err(CliError::config("b", "row count must match a"));
    }
    let theta0 = box_from("theta0_box", &raw.theta0_box)?;
    let p = theta0.dim();
    let e = match &raw.e {
        Some(rows) => matrix_from("e", rows)?,
        None => {
            if p != n_x {
                return Err(CliError::config(
                    "e",
                    "required when the offset dimension differs from the state dimension",
                ));
            }
            DMatrix::identity(n_x, n_x)
        }
    };
    let f = matrix_from("f", &raw.f)?;
    let g = matrix_from("g", &raw.g)?;
    let f_bound = DVector::from_vec(raw.f_bound.clone());
    let model = ModelData::new(a, b, e, f, g, f_bound)
        .map_err(|err| CliError::config("f/g/f_bound", &err.to_string()))?;
    let n_u = model.n_u();

    let noise_set = box_from("w_box", &raw.w_box)?;
    let theta_true = DVector::from_vec(raw.theta_true.clone());
    let x_start = DVector::from_vec(raw.x_start.clone());

    let state_weights = match &raw.state_weights {
        Some(w) => {
            if w.len() != n_x {
                return Err(CliError::config(
                    "state_weights",
                    "length must match the state dimension",
                ));
            }
            DVector::from_vec(w.clone())
        }
        None => DVector::from_element(n_x, 1.0),
    };
    let lqr_q = match &raw.lqr_q {
        Some(rows) => matrix_from("lqr_q", rows)?,
        None => DMatrix::identity(n_x, n_x),
    };
    let lqr_r = match &raw.lqr_r {
        Some(rows) => matrix_from("lqr_r", rows)?,
        None => DMatrix::identity(n_u, n_u) * 10.0,
    };
    let eps_conv = raw
        .eps_conv
        .unwrap_or_else(|| 1e-3 * x_start.amax().max(1.0));

    let cfg = ExperimentConfig {
        model,
        noise_set,
        theta0,
        theta_true,
        x_start,
        n_iterations: raw.n_iterations,
        mpc: MpcConfig {
            horizon: raw.horizon.unwrap_or(3),
            weights: StageWeights {
                state: state_weights,
                input: raw.input_weight.unwrap_or(10.0),
            },
            eps_conv,
        },
        lqr_q,
        lqr_r,
        rng_seed: raw.rng_seed.unwrap_or(0),
        t0: raw.t0.unwrap_or(30),
        max_steps_per_iter: raw.max_steps_per_iter.unwrap_or(100),
        adaptation_enabled: raw.adaptation_enabled.unwrap_or(true),
    };
    cfg.validate().map_err(|err| match err {
        almpc_core::Error::Config { field, message } => CliError::config(&field, &message),
        other => CliError::config("(config)", &other.to_string()),
    })?;
    Ok(cfg)
}
