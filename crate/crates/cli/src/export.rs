//! CSV and JSON exports of experiment logs.
//!
//! Per iteration `j` a file `iteration_<j>.csv` holds the realized and
//! nominal time series; `summary.csv` has one row per iteration with costs,
//! step counts, offset-domain area and the tightening components. Floats are
//! written with Rust's shortest round-trip formatting, so re-reading a CSV
//! reproduces the logged numbers exactly. `logs.json` carries the complete
//! bundle (including the config echo) for re-rendering figures.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use almpc_core::polytope::HPolytope;
use almpc_core::simulator::{ExperimentRun, IterationLog};

use crate::CliError;

/// A named run inside a bundle: "almpc" and, for comparisons, "rlmpc".
#[derive(Serialize, Deserialize)]
pub struct NamedRun {
    pub name: String,
    pub run: ExperimentRun,
}

/// Everything one invocation produced.
#[derive(Serialize, Deserialize)]
pub struct LogBundle {
    pub runs: Vec<NamedRun>,
}

/// Column name for coordinate `i` of a `dim`-dimensional quantity: bare base
/// name when scalar, 1-based suffix otherwise.
fn col_name(base: &str, i: usize, dim: usize) -> String {
    if dim == 1 {
        base.to_string()
    } else {
        format!("{}{}", base, i + 1)
    }
}

fn fmt(v: f64) -> String {
    format!("{}", v)
}

/// Shoelace area of a 2D polytope; empty string when not two-dimensional.
fn theta_area(theta: &HPolytope) -> String {
    if theta.dim() != 2 {
        return String::new();
    }
    match theta.vertices_2d() {
        Ok(v) => {
            let k = v.len();
            let twice: f64 = (0..k)
                .map(|i| {
                    let a = v[i];
                    let b = v[(i + 1) % k];
                    a.x * b.y - b.x * a.y
                })
                .sum();
            fmt(twice.abs() / 2.0)
        }
        Err(_) => String::new(),
    }
}

fn write_iteration_csv(log: &IterationLog, n_x: usize, n_u: usize, path: &Path) -> Result<(), CliError> {
    let mut header = vec!["t".to_string()];
    for i in 0..n_x {
        header.push(col_name("x", i, n_x));
    }
    for i in 0..n_u {
        header.push(col_name("u", i, n_u));
    }
    for i in 0..n_x {
        header.push(col_name("s", i, n_x));
    }
    for i in 0..n_u {
        header.push(col_name("v", i, n_u));
    }
    for i in 0..n_x {
        header.push(col_name("w", i, n_x));
    }
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');

    let rows = log.nominal_states.len().max(log.realized_states.len());
    for t in 0..rows {
        let mut fields = vec![t.to_string()];
        for i in 0..n_x {
            fields.push(
                log.realized_states
                    .get(t)
                    .map(|x| fmt(x[i]))
                    .unwrap_or_default(),
            );
        }
        for i in 0..n_u {
            fields.push(
                log.realized_inputs
                    .get(t)
                    .map(|u| fmt(u[i]))
                    .unwrap_or_default(),
            );
        }
        for i in 0..n_x {
            fields.push(
                log.nominal_states
                    .get(t)
                    .map(|s| fmt(s[i]))
                    .unwrap_or_default(),
            );
        }
        for i in 0..n_u {
            fields.push(
                log.nominal_inputs
                    .get(t)
                    .map(|v| fmt(v[i]))
                    .unwrap_or_default(),
            );
        }
        for i in 0..n_x {
            fields.push(
                log.disturbances
                    .get(t)
                    .map(|w| fmt(w[i]))
                    .unwrap_or_default(),
            );
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(CliError::Io)
}

fn write_summary_csv(run: &ExperimentRun, path: &Path) -> Result<(), CliError> {
    let n_f = run.config.model.n_f();
    let mut header = vec![
        "j".to_string(),
        "cost_realized".to_string(),
        "cost_nominal".to_string(),
        "n_steps".to_string(),
        "theta_area".to_string(),
    ];
    for i in 0..n_f {
        header.push(format!("h_s_{}", i + 1));
    }
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for log in &run.logs {
        let mut fields = vec![log.iteration.to_string()];
        if log.realized_states.is_empty() {
            fields.push(String::new());
        } else {
            fields.push(fmt(log.iter_cost_realized));
        }
        fields.push(fmt(log.iter_cost_nominal));
        fields.push(log.nominal_inputs.len().to_string());
        fields.push(theta_area(&log.theta_snapshot));
        for i in 0..n_f {
            fields.push(fmt(log.h_s_snapshot[i]));
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(CliError::Io)
}

/// Writes `iteration_<j>.csv` per log and `summary.csv` into `dir`.
/// Returns the paths written.
pub fn export_csv(run: &ExperimentRun, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(CliError::Io)?;
    let n_x = run.config.model.n_x();
    let n_u = run.config.model.n_u();
    let mut written = Vec::new();
    for log in &run.logs {
        let path = dir.join(format!("iteration_{}.csv", log.iteration));
        write_iteration_csv(log, n_x, n_u, &path)?;
        written.push(path);
    }
    let summary = dir.join("summary.csv");
    write_summary_csv(run, &summary)?;
    written.push(summary);
    Ok(written)
}

/// Serializes the whole bundle to `logs.json` in `dir`.
pub fn export_bundle(bundle: &LogBundle, dir: &Path) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(CliError::Io)?;
    let path = dir.join("logs.json");
    let mut file = fs::File::create(&path).map_err(CliError::Io)?;
    let text = serde_json::to_string_pretty(bundle)
        .map_err(|e| CliError::config("logs.json", &e.to_string()))?;
    file.write_all(text.as_bytes()).map_err(CliError::Io)?;
    file.write_all(b"\n").map_err(CliError::Io)?;
    Ok(path)
}

/// Reads a bundle written by [`export_bundle`].
pub fn read_bundle(dir: &Path) -> Result<LogBundle, CliError> {
    let path = dir.join("logs.json");
    let text = fs::read_to_string(&path).map_err(CliError::Io)?;
    serde_json::from_str(&text).map_err(|e| CliError::config("logs.json", &e.to_string()))
}
