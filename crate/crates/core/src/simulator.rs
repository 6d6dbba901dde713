//! Closed-loop experiment driver.
//!
//! Runs the full iterative scheme: a seed trajectory populates the safe set,
//! then each iteration rolls the true plant under the receding-horizon
//! controller, appends the converged nominal trajectory to the safe set, and
//! intersects the offset domain with the new transition data. A baseline run
//! reuses the identical code path with adaptation switched off; pairing the
//! two on the same seed isolates the adaptation effect.
//!
//! Determinism: the seed fully determines every disturbance draw (one draw
//! per realized time step and nowhere else), and nothing else in the loop is
//! stochastic, so identical configs produce identical logs byte for byte.

use nalgebra::{DMatrix, DVector};
pub use rand::{Rng, SeedableRng};
pub use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{
    control_input, initial_trajectory, solve_mpc, ModelData, MpcConfig, MpcSolution,
};
use crate::error::{Error, Result};
use crate::polytope::HPolytope;
use crate::regulator::{lqr_gain, Gains};
use crate::safe_set::{SampledSafeSet, StoredTrajectory};
use crate::uncertainty::{
    fps_update, tightening_vector, tightening_vector_with_truncation, FeasibleParameterSet,
    TighteningVector, TransitionRecord,
};

/// Everything one experiment needs; the seed pins the disturbance sequence.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelData,
    pub noise_set: HPolytope,
    pub theta0: HPolytope,
    pub theta_true: DVector<f64>,
    pub x_start: DVector<f64>,
    pub n_iterations: usize,
    pub mpc: MpcConfig,
    pub lqr_q: DMatrix<f64>,
    pub lqr_r: DMatrix<f64>,
    pub rng_seed: u64,
    pub t0: usize,
    pub max_steps_per_iter: usize,
    pub adaptation_enabled: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let n_x = self.model.n_x();
        let p = self.model.n_p();
        if self.noise_set.dim() != n_x {
            return Err(Error::Config {
                field: "noise_set".into(),
                message: format!("dimension {} does not match n_x = {}", self.noise_set.dim(), n_x),
            });
        }
        if self.theta0.dim() != p {
            return Err(Error::Config {
                field: "theta0".into(),
                message: format!("dimension {} does not match p = {}", self.theta0.dim(), p),
            });
        }
        if self.theta_true.len() != p {
            return Err(Error::Config {
                field: "theta_true".into(),
                message: format!("length {} does not match p = {}", self.theta_true.len(), p),
            });
        }
        if !self.theta0.contains(&self.theta_true) {
            return Err(Error::Config {
                field: "theta_true".into(),
                message: "true offset lies outside the initial offset domain".into(),
            });
        }
        if self.x_start.len() != n_x {
            return Err(Error::Config {
                field: "x_start".into(),
                message: format!("length {} does not match n_x = {}", self.x_start.len(), n_x),
            });
        }
        if self.mpc.horizon == 0 {
            return Err(Error::Config {
                field: "horizon".into(),
                message: "must be at least 1".into(),
            });
        }
        if self.mpc.eps_conv <= 0.0 {
            return Err(Error::Config {
                field: "eps_conv".into(),
                message: "must be positive".into(),
            });
        }
        if self.t0 == 0 {
            return Err(Error::Config {
                field: "t0".into(),
                message: "must be at least 1".into(),
            });
        }
        if self.lqr_q.nrows() != n_x || self.lqr_q.ncols() != n_x {
            return Err(Error::Config {
                field: "lqr_q".into(),
                message: "must be n_x by n_x".into(),
            });
        }
        let n_u = self.model.n_u();
        if self.lqr_r.nrows() != n_u || self.lqr_r.ncols() != n_u {
            return Err(Error::Config {
                field: "lqr_r".into(),
                message: "must be n_u by n_u".into(),
            });
        }
        Ok(())
    }
}

/// Record of one iteration: the realized rollout, the nominal plan actually
/// tracked, the uncertainty snapshot in force, and per-step optima.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub realized_states: Vec<DVector<f64>>,
    pub realized_inputs: Vec<DVector<f64>>,
    pub disturbances: Vec<DVector<f64>>,
    pub nominal_states: Vec<DVector<f64>>,
    pub nominal_inputs: Vec<DVector<f64>>,
    pub iter_cost_realized: f64,
    pub iter_cost_nominal: f64,
    pub theta_snapshot: HPolytope,
    pub h_s_snapshot: DVector<f64>,
    pub mpc_costs: Vec<f64>,
    pub feasible: bool,
}

/// Full experiment output: the seed log at index 0 followed by one log per
/// closed-loop iteration, plus the terminal offset domain and the shared
/// truncation depth used for every tightening.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentRun {
    pub config: ExperimentConfig,
    pub logs: Vec<IterationLog>,
    pub final_theta: HPolytope,
    pub gains: Gains,
    pub truncation_k: usize,
}

/// Mutable state threaded through the iterations.
pub struct ExperimentState {
    pub config: ExperimentConfig,
    pub gains: Gains,
    pub fps: FeasibleParameterSet,
    pub safe_set: SampledSafeSet,
    pub tightening: TighteningVector,
    pub rng: ChaCha8Rng,
}

/// Uniform draw from an axis-aligned box; the only consumer of randomness.
pub fn sample_disturbance(rng: &mut ChaCha8Rng, noise_set: &HPolytope) -> Result<DVector<f64>> {
    let intervals = axis_box_intervals(noise_set)?;
    let mut w = DVector::zeros(intervals.len());
    for (j, &(lo, hi)) in intervals.iter().enumerate() {
        let u: f64 = rng.gen();
        w[j] = lo + (hi - lo) * u;
    }
    Ok(w)
}

/// Extracts `(lower, upper)` per coordinate if every halfspace is an axis
/// direction and every coordinate is bounded both ways.
fn axis_box_intervals(p: &HPolytope) -> Result<Vec<(f64, f64)>> {
    let n = p.dim();
    let mut lo = vec![f64::NEG_INFINITY; n];
    let mut hi = vec![f64::INFINITY; n];
    for i in 0..p.num_halfspaces() {
        let row = p.normals().row(i);
        let mut axis = None;
        for j in 0..n {
            let v = row[j];
            if v.abs() > 1e-12 {
                if axis.is_some() || (v.abs() - 1.0).abs() > 1e-9 {
                    return Err(Error::NonBoxDisturbance(format!(
                        "halfspace {} is not an axis direction",
                        i
                    )));
                }
                axis = Some((j, v > 0.0));
            }
        }
        let (j, positive) = axis.ok_or_else(|| {
            Error::NonBoxDisturbance(format!("halfspace {} has a zero normal", i))
        })?;
        if positive {
            hi[j] = hi[j].min(p.offsets()[i]);
        } else {
            lo[j] = lo[j].max(-p.offsets()[i]);
        }
    }
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        if !lo[j].is_finite() || !hi[j].is_finite() {
            return Err(Error::NonBoxDisturbance(format!(
                "coordinate {} is unbounded",
                j
            )));
        }
        if lo[j] > hi[j] {
            return Err(Error::NonBoxDisturbance(format!(
                "coordinate {} has empty interval [{}, {}]",
                j, lo[j], hi[j]
            )));
        }
        out.push((lo[j], hi[j]));
    }
    Ok(out)
}

/// One closed-loop task execution: solve the horizon problem at the nominal
/// state, apply the tube control to the true plant, advance the nominal
/// model, stop once the nominal state is inside the convergence ball. An
/// infeasible horizon problem aborts the experiment; running out of steps
/// only marks the log unsuccessful so the safe set skips it.
pub fn run_iteration(j: usize, state: &mut ExperimentState) -> Result<IterationLog> {
    let cfg = &state.config;
    let model = &cfg.model;
    let e_theta = &model.e * &cfg.theta_true;

    let mut x = cfg.x_start.clone();
    let mut s = cfg.x_start.clone();
    let mut realized_states = vec![x.clone()];
    let mut nominal_states = vec![s.clone()];
    let mut realized_inputs = Vec::new();
    let mut nominal_inputs = Vec::new();
    let mut disturbances = Vec::new();
    let mut mpc_costs = Vec::new();
    let mut converged = false;

    for t in 0..cfg.max_steps_per_iter {
        if s.amax() <= cfg.mpc.eps_conv {
            converged = true;
            break;
        }
        let sol = solve_mpc(&s, model, &cfg.mpc, &state.tightening, &state.safe_set)?;
        let plan = match sol {
            MpcSolution::Optimal(plan) => plan,
            MpcSolution::Infeasible => {
                return Err(Error::MpcInfeasible {
                    iteration: j,
                    time: t,
                    details: format!(
                        "nominal state {:?}, tightening {:?}, {} safe-set points",
                        s.as_slice(),
                        state.tightening.h_s.as_slice(),
                        state.safe_set.num_points()
                    ),
                })
            }
        };
        mpc_costs.push(plan.cost);
        let u = control_input(&x, &s, &plan, &state.gains);
        let w = sample_disturbance(&mut state.rng, &cfg.noise_set)?;
        x = &model.a * &x + &model.b * &u + &e_theta + &w;
        s = &model.a * &s + &model.b * &plan.inputs[0];
        realized_inputs.push(u);
        nominal_inputs.push(plan.inputs[0].clone());
        disturbances.push(w);
        realized_states.push(x.clone());
        nominal_states.push(s.clone());
    }
    if !converged && s.amax() <= cfg.mpc.eps_conv {
        converged = true;
    }

    let weights = &cfg.mpc.weights;
    let iter_cost_realized = realized_inputs
        .iter()
        .zip(realized_states.iter())
        .map(|(u, xs)| weights.stage_cost(xs, u))
        .sum();
    let iter_cost_nominal = nominal_inputs
        .iter()
        .zip(nominal_states.iter())
        .map(|(v, ss)| weights.stage_cost(ss, v))
        .sum();

    log::info!(
        "iteration {}: {} steps, nominal cost {:.6}, realized cost {:.6}, converged: {}",
        j,
        realized_inputs.len(),
        iter_cost_nominal,
        iter_cost_realized,
        converged
    );

    Ok(IterationLog {
        iteration: j,
        realized_states,
        realized_inputs,
        disturbances,
        nominal_states,
        nominal_inputs,
        iter_cost_realized,
        iter_cost_nominal,
        theta_snapshot: state.fps.theta.clone(),
        h_s_snapshot: state.tightening.h_s.clone(),
        mpc_costs,
        feasible: converged,
    })
}

fn records_from(log: &IterationLog) -> Vec<TransitionRecord> {
    (0..log.realized_inputs.len())
        .map(|t| TransitionRecord {
            x_prev: log.realized_states[t].clone(),
            u_prev: log.realized_inputs[t].clone(),
            x_next: log.realized_states[t + 1].clone(),
            iteration: log.iteration,
            time: t,
        })
        .collect()
}

/// Runs the full experiment. The seed trajectory is logged as iteration 0
/// with no realized data (it is synthesized, not executed); iterations
/// `1..=n_iterations` run closed loop. The offset domain is updated between
/// iterations only, and only when adaptation is enabled; the truncation
/// depth chosen for the initial tightening is pinned for the whole run so
/// tightenings stay comparable across iterations.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRun> {
    cfg.validate()?;
    let gains = lqr_gain(&cfg.model.a, &cfg.model.b, &cfg.lqr_q, &cfg.lqr_r)?;
    let phi = cfg.model.phi(&gains);
    let fps0 = FeasibleParameterSet::initial(cfg.theta0.clone())?;
    let tightening0 = tightening_vector(&phi, &gains, &cfg.noise_set, &fps0, &cfg.model.e)?;
    let truncation_k = tightening0.truncation_k;

    let seed_traj = initial_trajectory(&cfg.x_start, &cfg.model, &cfg.mpc, &tightening0, cfg.t0)?;
    let seed_log = IterationLog {
        iteration: 0,
        realized_states: Vec::new(),
        realized_inputs: Vec::new(),
        disturbances: Vec::new(),
        nominal_states: seed_traj.states.clone(),
        nominal_inputs: seed_traj.inputs[..seed_traj.inputs.len() - 1].to_vec(),
        iter_cost_realized: 0.0,
        iter_cost_nominal: seed_traj.total_cost(),
        theta_snapshot: cfg.theta0.clone(),
        h_s_snapshot: tightening0.h_s.clone(),
        mpc_costs: Vec::new(),
        feasible: true,
    };
    let safe_set =
        SampledSafeSet::new(cfg.model.n_x()).add_trajectory(seed_traj, 1e-6, &cfg.mpc.weights)?;

    let mut state = ExperimentState {
        config: cfg.clone(),
        gains: gains.clone(),
        fps: fps0,
        safe_set,
        tightening: tightening0,
        rng: ChaCha8Rng::seed_from_u64(cfg.rng_seed),
    };
    let mut logs = vec![seed_log];

    for j in 1..=cfg.n_iterations {
        if j > 1 {
            state.tightening = tightening_vector_with_truncation(
                &phi,
                &state.gains,
                &cfg.noise_set,
                &state.fps,
                &cfg.model.e,
                truncation_k,
            )?;
        }
        let log = run_iteration(j, &mut state)?;
        if log.feasible {
            let traj = StoredTrajectory::from_rollout(
                log.nominal_states.clone(),
                log.nominal_inputs.clone(),
                j,
                &cfg.mpc.weights,
            )?;
            state.safe_set =
                state
                    .safe_set
                    .add_trajectory(traj, cfg.mpc.eps_conv, &cfg.mpc.weights)?;
        }
        if cfg.adaptation_enabled {
            state.fps = fps_update(
                &state.fps,
                &records_from(&log),
                &cfg.noise_set,
                &cfg.model.a,
                &cfg.model.b,
                &cfg.model.e,
            )?;
        }
        logs.push(log);
    }

    Ok(ExperimentRun {
        config: cfg.clone(),
        logs,
        final_theta: state.fps.theta.clone(),
        gains,
        truncation_k,
    })
}

/// Runs the adaptive scheme and the fixed-domain baseline on identical
/// disturbance sequences; the runs differ only in the adaptation flag.
pub fn compare_runs(cfg: &ExperimentConfig) -> Result<(ExperimentRun, ExperimentRun)> {
    let mut adaptive_cfg = cfg.clone();
    adaptive_cfg.adaptation_enabled = true;
    let mut baseline_cfg = cfg.clone();
    baseline_cfg.adaptation_enabled = false;
    let adaptive = run_experiment(&adaptive_cfg)?;
    let baseline = run_experiment(&baseline_cfg)?;
    Ok((adaptive, baseline))
}
