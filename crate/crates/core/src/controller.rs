//! Receding-horizon controller.
//!
//! One LP carries the whole finite-horizon problem: nominal dynamics as
//! equalities, tightened state-input constraints per stage, epigraph
//! variables for the 1-norm stage cost, and barycentric multipliers that pin
//! the terminal state inside the convex safe set while pricing it with the
//! stored cost-to-go. The applied input wraps the first nominal input with
//! the fixed error feedback.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, Bounds, LinearProgram, LpStatus};
use crate::regulator::Gains;
use crate::safe_set::{SampledSafeSet, StageWeights, StoredTrajectory};
use crate::uncertainty::TighteningVector;

/// Known system and constraint data: dynamics `x+ = A x + B u + E theta + w`
/// under rows `F x + G u <= f`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelData {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub f_bound: DVector<f64>,
}

impl ModelData {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        e: DMatrix<f64>,
        f: DMatrix<f64>,
        g: DMatrix<f64>,
        f_bound: DVector<f64>,
    ) -> Result<Self> {
        let n_x = a.nrows();
        if a.ncols() != n_x {
            return Err(Error::DimensionMismatch("A must be square".into()));
        }
        if b.nrows() != n_x {
            return Err(Error::DimensionMismatch(
                "B must have one row per state".into(),
            ));
        }
        if e.nrows() != n_x {
            return Err(Error::DimensionMismatch(
                "E must have one row per state".into(),
            ));
        }
        let n_f = f.nrows();
        if f.ncols() != n_x || g.nrows() != n_f || g.ncols() != b.ncols() || f_bound.len() != n_f {
            return Err(Error::DimensionMismatch(
                "constraint blocks F, G, f do not conform".into(),
            ));
        }
        Ok(ModelData {
            a,
            b,
            e,
            f,
            g,
            f_bound,
        })
    }

    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_f(&self) -> usize {
        self.f.nrows()
    }

    pub fn n_p(&self) -> usize {
        self.e.ncols()
    }

    /// `Phi = F + G K`, the error-to-constraint map under the feedback.
    pub fn phi(&self, gains: &Gains) -> DMatrix<f64> {
        &self.f + &self.g * &gains.feedback
    }
}

/// Horizon length, stage-cost weights and the convergence threshold that
/// ends an iteration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MpcConfig {
    pub horizon: usize,
    pub weights: StageWeights,
    pub eps_conv: f64,
}

/// Optimal plan extracted from the horizon LP.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MpcPlan {
    /// Nominal states `s_{t|t} .. s_{t+N|t}`.
    pub states: Vec<DVector<f64>>,
    /// Nominal inputs `v_{t|t} .. v_{t+N-1|t}`.
    pub inputs: Vec<DVector<f64>>,
    /// Barycentric multipliers over the safe-set points.
    pub multipliers: DVector<f64>,
    pub cost: f64,
}

/// Outcome of one horizon solve. Infeasibility is a first-class outcome the
/// harness turns into a hard failure, not an error of the solver itself.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum MpcSolution {
    Optimal(MpcPlan),
    Infeasible,
}

impl MpcSolution {
    pub fn is_optimal(&self) -> bool {
        matches!(self, MpcSolution::Optimal(_))
    }

    pub fn plan(&self) -> Option<&MpcPlan> {
        match self {
            MpcSolution::Optimal(plan) => Some(plan),
            MpcSolution::Infeasible => None,
        }
    }
}

/// Solves the tightened finite-horizon problem from nominal state `s_t`.
pub fn solve_mpc(
    s_t: &DVector<f64>,
    model: &ModelData,
    cfg: &MpcConfig,
    tightening: &TighteningVector,
    safe_set: &SampledSafeSet,
) -> Result<MpcSolution> {
    let n_x = model.n_x();
    let n_u = model.n_u();
    let n_f = model.n_f();
    let n = cfg.horizon;
    if n == 0 {
        return Err(Error::DimensionMismatch(
            "horizon must be at least 1".into(),
        ));
    }
    if s_t.len() != n_x {
        return Err(Error::DimensionMismatch(format!(
            "state has dimension {}, model expects {}",
            s_t.len(),
            n_x
        )));
    }
    if tightening.h_s.len() != n_f {
        return Err(Error::DimensionMismatch(format!(
            "tightening vector has {} rows, constraints have {}",
            tightening.h_s.len(),
            n_f
        )));
    }
    if safe_set.is_empty() {
        return Err(Error::EmptySet("safe set has no stored points".into()));
    }
    if cfg.weights.state.len() != n_x {
        return Err(Error::DimensionMismatch(
            "stage weight vector does not match the state dimension".into(),
        ));
    }
    let n_pts = safe_set.num_points();

    // Column layout: states | inputs | multipliers | state aux | input aux.
    let off_s = 0;
    let off_v = off_s + (n + 1) * n_x;
    let off_l = off_v + n * n_u;
    let off_ax = off_l + n_pts;
    let off_au = off_ax + n * n_x;
    let n_cols = off_au + n * n_u;
    let s_col = |k: usize, i: usize| off_s + k * n_x + i;
    let v_col = |k: usize, i: usize| off_v + k * n_u + i;
    let ax_col = |k: usize, i: usize| off_ax + k * n_x + i;
    let au_col = |k: usize, i: usize| off_au + k * n_u + i;

    let n_eq = n_x + n * n_x + n_x + 1;
    let mut a_eq = DMatrix::zeros(n_eq, n_cols);
    let mut b_eq = DVector::zeros(n_eq);
    let mut r = 0;
    for i in 0..n_x {
        a_eq[(r, s_col(0, i))] = 1.0;
        b_eq[r] = s_t[i];
        r += 1;
    }
    for k in 0..n {
        for i in 0..n_x {
            a_eq[(r, s_col(k + 1, i))] = 1.0;
            for j in 0..n_x {
                a_eq[(r, s_col(k, j))] = -model.a[(i, j)];
            }
            for j in 0..n_u {
                a_eq[(r, v_col(k, j))] = -model.b[(i, j)];
            }
            r += 1;
        }
    }
    for i in 0..n_x {
        a_eq[(r, s_col(n, i))] = 1.0;
        for c in 0..n_pts {
            a_eq[(r, off_l + c)] = -safe_set.point_matrix[(i, c)];
        }
        r += 1;
    }
    for c in 0..n_pts {
        a_eq[(r, off_l + c)] = 1.0;
    }
    b_eq[r] = 1.0;

    let n_ub = n * n_f + 2 * n * n_x + 2 * n * n_u;
    let mut a_ub = DMatrix::zeros(n_ub, n_cols);
    let mut b_ub = DVector::zeros(n_ub);
    let mut r = 0;
    for k in 0..n {
        for row in 0..n_f {
            for j in 0..n_x {
                a_ub[(r, s_col(k, j))] = model.f[(row, j)];
            }
            for j in 0..n_u {
                a_ub[(r, v_col(k, j))] = model.g[(row, j)];
            }
            b_ub[r] = model.f_bound[row] - tightening.h_s[row];
            r += 1;
        }
    }
    for k in 0..n {
        for i in 0..n_x {
            a_ub[(r, s_col(k, i))] = 1.0;
            a_ub[(r, ax_col(k, i))] = -1.0;
            r += 1;
            a_ub[(r, s_col(k, i))] = -1.0;
            a_ub[(r, ax_col(k, i))] = -1.0;
            r += 1;
        }
        for i in 0..n_u {
            a_ub[(r, v_col(k, i))] = 1.0;
            a_ub[(r, au_col(k, i))] = -1.0;
            r += 1;
            a_ub[(r, v_col(k, i))] = -1.0;
            a_ub[(r, au_col(k, i))] = -1.0;
            r += 1;
        }
    }

    let mut cost = DVector::zeros(n_cols);
    for k in 0..n {
        for i in 0..n_x {
            cost[ax_col(k, i)] = cfg.weights.state[i];
        }
        for i in 0..n_u {
            cost[au_col(k, i)] = cfg.weights.input;
        }
    }
    for c in 0..n_pts {
        cost[off_l + c] = safe_set.cost_vector[c];
    }

    let mut bounds = vec![Bounds::free(); n_cols];
    for c in 0..n_pts {
        bounds[off_l + c] = Bounds::non_negative();
    }
    for b in bounds.iter_mut().skip(off_ax) {
        *b = Bounds::non_negative();
    }

    let lp = LinearProgram::new(cost)
        .with_ineq(a_ub, b_ub)
        .with_eq(a_eq, b_eq)
        .with_bounds(bounds);
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Infeasible => Ok(MpcSolution::Infeasible),
        LpStatus::Unbounded => Err(Error::NumericalBreakdown(
            "horizon LP reported unbounded; the stage cost is nonnegative".into(),
        )),
        LpStatus::Optimal => {
            let x = sol.x_opt.unwrap();
            let states = (0..=n)
                .map(|k| DVector::from_iterator(n_x, (0..n_x).map(|i| x[s_col(k, i)])))
                .collect();
            let inputs = (0..n)
                .map(|k| DVector::from_iterator(n_u, (0..n_u).map(|i| x[v_col(k, i)])))
                .collect();
            let multipliers = DVector::from_iterator(n_pts, (0..n_pts).map(|c| x[off_l + c]));
            Ok(MpcSolution::Optimal(MpcPlan {
                states,
                inputs,
                multipliers,
                cost: sol.objective_value.unwrap(),
            }))
        }
    }
}

/// Applied control `u = K (x - s) + v*` with the first planned input; no
/// saturation, the input rows are tightened inside the horizon problem.
pub fn control_input(
    x_t: &DVector<f64>,
    s_t: &DVector<f64>,
    plan: &MpcPlan,
    gains: &Gains,
) -> DVector<f64> {
    &gains.feedback * (x_t - s_t) + &plan.inputs[0]
}

/// Synthesizes the seed trajectory: one LP over `t0` stages with the same
/// stage cost, tightened constraints at every stage and an exact terminal
/// origin. The returned states are re-rolled through the nominal dynamics so
/// stored transitions are exact to machine precision.
pub fn initial_trajectory(
    x_start: &DVector<f64>,
    model: &ModelData,
    cfg: &MpcConfig,
    tightening: &TighteningVector,
    t0: usize,
) -> Result<StoredTrajectory> {
    let n_x = model.n_x();
    let n_u = model.n_u();
    let n_f = model.n_f();
    if x_start.len() != n_x {
        return Err(Error::DimensionMismatch(format!(
            "start state has dimension {}, model expects {}",
            x_start.len(),
            n_x
        )));
    }
    if t0 == 0 {
        return Err(Error::DimensionMismatch(
            "trajectory horizon must be positive".into(),
        ));
    }

    let off_s = 0;
    let off_v = off_s + (t0 + 1) * n_x;
    let off_ax = off_v + t0 * n_u;
    let off_au = off_ax + t0 * n_x;
    let n_cols = off_au + t0 * n_u;
    let s_col = |k: usize, i: usize| off_s + k * n_x + i;
    let v_col = |k: usize, i: usize| off_v + k * n_u + i;
    let ax_col = |k: usize, i: usize| off_ax + k * n_x + i;
    let au_col = |k: usize, i: usize| off_au + k * n_u + i;

    let n_eq = n_x + t0 * n_x + n_x;
    let mut a_eq = DMatrix::zeros(n_eq, n_cols);
    let mut b_eq = DVector::zeros(n_eq);
    let mut r = 0;
    for i in 0..n_x {
        a_eq[(r, s_col(0, i))] = 1.0;
        b_eq[r] = x_start[i];
        r += 1;
    }
    for k in 0..t0 {
        for i in 0..n_x {
            a_eq[(r, s_col(k + 1, i))] = 1.0;
            for j in 0..n_x {
                a_eq[(r, s_col(k, j))] = -model.a[(i, j)];
            }
            for j in 0..n_u {
                a_eq[(r, v_col(k, j))] = -model.b[(i, j)];
            }
            r += 1;
        }
    }
    for i in 0..n_x {
        a_eq[(r, s_col(t0, i))] = 1.0;
        r += 1;
    }

    let n_ub = t0 * n_f + 2 * t0 * n_x + 2 * t0 * n_u;
    let mut a_ub = DMatrix::zeros(n_ub, n_cols);
    let mut b_ub = DVector::zeros(n_ub);
    let mut r = 0;
    for k in 0..t0 {
        for row in 0..n_f {
            for j in 0..n_x {
                a_ub[(r, s_col(k, j))] = model.f[(row, j)];
            }
            for j in 0..n_u {
                a_ub[(r, v_col(k, j))] = model.g[(row, j)];
            }
            b_ub[r] = model.f_bound[row] - tightening.h_s[row];
            r += 1;
        }
    }
    for k in 0..t0 {
        for i in 0..n_x {
            a_ub[(r, s_col(k, i))] = 1.0;
            a_ub[(r, ax_col(k, i))] = -1.0;
            r += 1;
            a_ub[(r, s_col(k, i))] = -1.0;
            a_ub[(r, ax_col(k, i))] = -1.0;
            r += 1;
        }
        for i in 0..n_u {
            a_ub[(r, v_col(k, i))] = 1.0;
            a_ub[(r, au_col(k, i))] = -1.0;
            r += 1;
            a_ub[(r, v_col(k, i))] = -1.0;
            a_ub[(r, au_col(k, i))] = -1.0;
            r += 1;
        }
    }

    let mut cost = DVector::zeros(n_cols);
    for k in 0..t0 {
        for i in 0..n_x {
            cost[ax_col(k, i)] = cfg.weights.state[i];
        }
        for i in 0..n_u {
            cost[au_col(k, i)] = cfg.weights.input;
        }
    }
    let mut bounds = vec![Bounds::free(); n_cols];
    for b in bounds.iter_mut().skip(off_ax) {
        *b = Bounds::non_negative();
    }

    let lp = LinearProgram::new(cost)
        .with_ineq(a_ub, b_ub)
        .with_eq(a_eq, b_eq)
        .with_bounds(bounds);
    let sol = solve_lp(&lp)?;
    let x = match sol.status {
        LpStatus::Optimal => sol.x_opt.unwrap(),
        LpStatus::Infeasible => {
            return Err(Error::InitialTrajectoryInfeasible(format!(
                "no trajectory over {} stages reaches the origin under the tightened constraints",
                t0
            )))
        }
        LpStatus::Unbounded => {
            return Err(Error::NumericalBreakdown(
                "seed trajectory LP reported unbounded".into(),
            ))
        }
    };

    let inputs: Vec<DVector<f64>> = (0..t0)
        .map(|k| DVector::from_iterator(n_u, (0..n_u).map(|i| x[v_col(k, i)])))
        .collect();
    // Re-roll the states so stored transitions are dynamics-exact.
    let mut states = Vec::with_capacity(t0 + 1);
    states.push(x_start.clone());
    for v in &inputs {
        let next = &model.a * states.last().unwrap() + &model.b * v;
        states.push(next);
    }
    StoredTrajectory::from_rollout(states, inputs, 0, &cfg.weights)
}
