//! Static SVG figures rendered directly from the log bundle: nested offset
//! domains, nested error-set outer approximations, final trajectories
//! against the state box, and iteration costs. Plain shapes, no plotting
//! dependency; output is a pure function of the bundle.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DVector, Vector2};

use almpc_core::polytope::HPolytope;
use almpc_core::simulator::ExperimentRun;
use almpc_core::uncertainty::{mrpi_outer_2d_with_truncation, FeasibleParameterSet};

use crate::export::LogBundle;
use crate::CliError;

/// (label, data points, dashed?)
type Series = (String, Vec<(f64, f64)>, bool);

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 50.0;

const SERIES_COLORS: [&str; 2] = ["#1f77b4", "#d62728"];
const NEST_COLORS: [&str; 8] = [
    "#08306b", "#2171b5", "#4292c6", "#6baed6", "#9ecae1", "#c6dbef", "#deebf7", "#f7fbff",
];

struct Canvas {
    svg: String,
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Canvas {
    fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, title: &str) -> Self {
        let pad_x = 0.05 * (x_max - x_min).max(1e-9);
        let pad_y = 0.05 * (y_max - y_min).max(1e-9);
        let mut c = Canvas {
            svg: String::new(),
            x_min: x_min - pad_x,
            x_max: x_max + pad_x,
            y_min: y_min - pad_y,
            y_max: y_max + pad_y,
        };
        c.svg.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n",
            w = WIDTH,
            h = HEIGHT
        ));
        c.svg.push_str(&format!(
            "<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"white\"/>\n",
            WIDTH, HEIGHT
        ));
        c.svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
            WIDTH / 2.0,
            title
        ));
        c
    }

    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let sx = (WIDTH - 2.0 * MARGIN) / (self.x_max - self.x_min);
        let sy = (HEIGHT - 2.0 * MARGIN) / (self.y_max - self.y_min);
        (
            MARGIN + (x - self.x_min) * sx,
            HEIGHT - MARGIN - (y - self.y_min) * sy,
        )
    }

    fn axes(&mut self, x_label: &str, y_label: &str) {
        let (x0, y0) = self.map(self.x_min, self.y_min);
        let (x1, y1) = self.map(self.x_max, self.y_max);
        self.svg.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#888\" stroke-width=\"1\"/>\n",
            x0.min(x1),
            y1.min(y0),
            (x1 - x0).abs(),
            (y0 - y1).abs()
        ));
        self.svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
            WIDTH / 2.0,
            HEIGHT - 12.0,
            x_label
        ));
        self.svg.push_str(&format!(
            "<text x=\"14\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">{}</text>\n",
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            y_label
        ));
        for (value, label_x) in [(self.x_min, true), (self.x_max, true)] {
            let _ = label_x;
            let (px, _) = self.map(value, self.y_min);
            self.svg.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{:.3}</text>\n",
                px,
                HEIGHT - MARGIN + 16.0,
                value
            ));
        }
        for value in [self.y_min, self.y_max] {
            let (_, py) = self.map(self.x_min, value);
            self.svg.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{:.3}</text>\n",
                MARGIN - 6.0,
                py + 3.0,
                value
            ));
        }
    }

    fn polygon(&mut self, pts: &[Vector2<f64>], stroke: &str, fill: &str, opacity: f64) {
        let coords: Vec<String> = pts
            .iter()
            .map(|p| {
                let (x, y) = self.map(p.x, p.y);
                format!("{:.2},{:.2}", x, y)
            })
            .collect();
        self.svg.push_str(&format!(
            "<polygon points=\"{}\" fill=\"{}\" fill-opacity=\"{:.2}\" stroke=\"{}\" stroke-width=\"1.2\"/>\n",
            coords.join(" "),
            fill,
            opacity,
            stroke
        ));
    }

    fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, dashed: bool) {
        let coords: Vec<String> = pts
            .iter()
            .map(|&(x, y)| {
                let (px, py) = self.map(x, y);
                format!("{:.2},{:.2}", px, py)
            })
            .collect();
        let dash = if dashed { " stroke-dasharray=\"6 4\"" } else { "" };
        self.svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"{}/>\n",
            coords.join(" "),
            stroke,
            dash
        ));
    }

    fn marker(&mut self, x: f64, y: f64, color: &str, label: &str) {
        let (px, py) = self.map(x, y);
        self.svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{}\"/>\n",
            px, py, color
        ));
        if !label.is_empty() {
            self.svg.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
                px + 6.0,
                py - 4.0,
                label
            ));
        }
    }

    fn legend(&mut self, entries: &[(&str, &str)]) {
        for (i, (label, color)) in entries.iter().enumerate() {
            let y = 36.0 + 16.0 * i as f64;
            self.svg.push_str(&format!(
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"12\" height=\"4\" fill=\"{}\"/>\n",
                WIDTH - 180.0,
                y,
                color
            ));
            self.svg.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
                WIDTH - 162.0,
                y + 5.0,
                label
            ));
        }
    }

    fn finish(mut self) -> String {
        self.svg.push_str("</svg>\n");
        self.svg
    }
}

fn bounds_of(polys: &[Vec<Vector2<f64>>]) -> (f64, f64, f64, f64) {
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for poly in polys {
        for p in poly {
            x_min = x_min.min(p.x);
            x_max = x_max.max(p.x);
            y_min = y_min.min(p.y);
            y_max = y_max.max(p.y);
        }
    }
    (x_min, x_max, y_min, y_max)
}

/// Offset-domain snapshots of the primary run, oldest first, ending with the
/// final updated set; consecutive duplicates are dropped.
fn theta_sequence(run: &ExperimentRun) -> Vec<HPolytope> {
    let mut seq: Vec<HPolytope> = Vec::new();
    for log in &run.logs {
        seq.push(log.theta_snapshot.clone());
    }
    seq.push(run.final_theta.clone());
    let mut dedup: Vec<HPolytope> = Vec::new();
    for theta in seq {
        let same = dedup.last().is_some_and(|prev: &HPolytope| {
            prev.is_subset(&theta).unwrap_or(false) && theta.is_subset(prev).unwrap_or(false)
        });
        if !same {
            dedup.push(theta);
        }
    }
    dedup
}

fn render_fps(bundle: &LogBundle) -> Result<String, CliError> {
    let run = &bundle.runs[0].run;
    if run.config.model.n_p() != 2 {
        return Err(CliError::config(
            "fps.svg",
            "offset domain is not two-dimensional",
        ));
    }
    let thetas = theta_sequence(run);
    let polys: Vec<Vec<Vector2<f64>>> = thetas
        .iter()
        .map(|t| t.vertices_2d().map_err(|e| CliError::config("fps.svg", &e.to_string())))
        .collect::<Result<_, _>>()?;
    let (x0, x1, y0, y1) = bounds_of(&polys);
    let mut c = Canvas::new(x0, x1, y0, y1, "Offset domain across iterations");
    c.axes("theta_1", "theta_2");
    for (i, poly) in polys.iter().enumerate() {
        let color = NEST_COLORS[i.min(NEST_COLORS.len() - 1)];
        c.polygon(poly, color, color, 0.18);
    }
    let th = &run.config.theta_true;
    c.marker(th[0], th[1], "#d62728", "true offset");
    Ok(c.finish())
}

fn render_mrpi(bundle: &LogBundle) -> Result<String, CliError> {
    let run = &bundle.runs[0].run;
    if run.config.model.n_x() != 2 {
        return Err(CliError::config(
            "mrpi.svg",
            "state space is not two-dimensional",
        ));
    }
    let thetas = theta_sequence(run);
    let mut polys = Vec::new();
    for (i, theta) in thetas.iter().enumerate() {
        let fps = FeasibleParameterSet {
            theta: theta.clone(),
            iteration: i,
            parent: None,
        };
        let outer = mrpi_outer_2d_with_truncation(
            &run.gains,
            &run.config.noise_set,
            &fps,
            &run.config.model.e,
            64,
            run.truncation_k,
        )
        .map_err(|e| CliError::config("mrpi.svg", &e.to_string()))?;
        polys.push(
            outer
                .vertices_2d()
                .map_err(|e| CliError::config("mrpi.svg", &e.to_string()))?,
        );
    }
    let (x0, x1, y0, y1) = bounds_of(&polys);
    let mut c = Canvas::new(x0, x1, y0, y1, "Error invariant set outer approximation");
    c.axes("e_1", "e_2");
    for (i, poly) in polys.iter().enumerate() {
        let color = NEST_COLORS[i.min(NEST_COLORS.len() - 1)];
        c.polygon(poly, color, color, 0.18);
    }
    Ok(c.finish())
}

/// State-only constraint polytope (rows whose input block is zero).
fn state_box(run: &ExperimentRun) -> Option<Vec<Vector2<f64>>> {
    let model = &run.config.model;
    if model.n_x() != 2 {
        return None;
    }
    let mut rows = Vec::new();
    let mut offs = Vec::new();
    for r in 0..model.n_f() {
        let g_row = model.g.row(r);
        if g_row.iter().all(|v| v.abs() < 1e-12) {
            rows.extend(model.f.row(r).iter().copied());
            offs.push(model.f_bound[r]);
        }
    }
    if offs.is_empty() {
        return None;
    }
    let p = HPolytope::new(
        nalgebra::DMatrix::from_row_slice(offs.len(), 2, &rows),
        DVector::from_vec(offs),
    )
    .ok()?;
    p.vertices_2d().ok()
}

fn render_trajectories(bundle: &LogBundle) -> Result<String, CliError> {
    let mut polys: Vec<Vec<Vector2<f64>>> = Vec::new();
    if let Some(sb) = state_box(&bundle.runs[0].run) {
        polys.push(sb);
    }
    let mut series: Vec<Series> = Vec::new();
    for (i, named) in bundle.runs.iter().enumerate() {
        let _ = i;
        let run = &named.run;
        if run.config.model.n_x() != 2 {
            return Err(CliError::config(
                "trajectories.svg",
                "state space is not two-dimensional",
            ));
        }
        if let Some(log) = run.logs.last() {
            let realized: Vec<(f64, f64)> = log
                .realized_states
                .iter()
                .map(|x| (x[0], x[1]))
                .collect();
            if !realized.is_empty() {
                series.push((format!("{} realized", named.name), realized, false));
            }
            let nominal: Vec<(f64, f64)> =
                log.nominal_states.iter().map(|s| (s[0], s[1])).collect();
            series.push((format!("{} nominal", named.name), nominal, true));
        }
    }
    let mut pts_for_bounds: Vec<Vec<Vector2<f64>>> = polys.clone();
    pts_for_bounds.push(
        series
            .iter()
            .flat_map(|(_, pts, _)| pts.iter().map(|&(x, y)| Vector2::new(x, y)))
            .collect(),
    );
    let (x0, x1, y0, y1) = bounds_of(&pts_for_bounds);
    let mut c = Canvas::new(x0, x1, y0, y1, "Final-iteration trajectories");
    c.axes("x_1", "x_2");
    for poly in &polys {
        c.polygon(poly, "#999999", "none", 0.0);
    }
    let mut legend: Vec<(String, &str)> = Vec::new();
    for (i, (name, pts, dashed)) in series.iter().enumerate() {
        let color = SERIES_COLORS[(i / 2).min(SERIES_COLORS.len() - 1)];
        c.polyline(pts, color, *dashed);
        legend.push((name.clone(), color));
    }
    let legend_refs: Vec<(&str, &str)> = legend.iter().map(|(n, c)| (n.as_str(), *c)).collect();
    c.legend(&legend_refs);
    let start = &bundle.runs[0].run.config.x_start;
    c.marker(start[0], start[1], "#2ca02c", "start");
    Ok(c.finish())
}

fn render_costs(bundle: &LogBundle) -> Result<String, CliError> {
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for named in &bundle.runs {
        let pts: Vec<(f64, f64)> = named
            .run
            .logs
            .iter()
            .filter(|l| !l.realized_states.is_empty())
            .map(|l| (l.iteration as f64, l.iter_cost_realized))
            .collect();
        if !pts.is_empty() {
            series.push((named.name.clone(), pts));
        }
    }
    if series.is_empty() {
        return Err(CliError::config("costs.svg", "no realized iterations to plot"));
    }
    let all: Vec<Vector2<f64>> = series
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|&(x, y)| Vector2::new(x, y)))
        .collect();
    let (x0, x1, y0, y1) = bounds_of(&[all]);
    let mut c = Canvas::new(x0, x1, y0.min(0.0), y1, "Iteration cost");
    c.axes("iteration", "realized cost");
    let mut legend: Vec<(String, &str)> = Vec::new();
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = SERIES_COLORS[i.min(SERIES_COLORS.len() - 1)];
        c.polyline(pts, color, false);
        legend.push((name.clone(), color));
    }
    let legend_refs: Vec<(&str, &str)> = legend.iter().map(|(n, c)| (n.as_str(), *c)).collect();
    c.legend(&legend_refs);
    Ok(c.finish())
}

/// Renders the four figures into `dir`; skips the set figures with a notice
/// when the relevant space is not two-dimensional.
pub fn render_svg(bundle: &LogBundle, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(CliError::Io)?;
    let mut written = Vec::new();
    let two_d_param = bundle.runs[0].run.config.model.n_p() == 2;
    let two_d_state = bundle.runs[0].run.config.model.n_x() == 2;
    if two_d_param {
        let path = dir.join("fps.svg");
        fs::write(&path, render_fps(bundle)?).map_err(CliError::Io)?;
        written.push(path);
    } else {
        log::warn!("offset domain is not 2D; skipping fps.svg");
    }
    if two_d_state {
        let path = dir.join("mrpi.svg");
        fs::write(&path, render_mrpi(bundle)?).map_err(CliError::Io)?;
        written.push(path);
        let path = dir.join("trajectories.svg");
        fs::write(&path, render_trajectories(bundle)?).map_err(CliError::Io)?;
        written.push(path);
    } else {
        log::warn!("state space is not 2D; skipping mrpi.svg and trajectories.svg");
    }
    match render_costs(bundle) {
        Ok(svg) => {
            let path = dir.join("costs.svg");
            fs::write(&path, svg).map_err(CliError::Io)?;
            written.push(path);
        }
        Err(e) => log::warn!("skipping costs.svg: {}", e),
    }
    Ok(written)
}
