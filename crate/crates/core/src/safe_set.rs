//! Stored converged trajectories and the barycentric terminal cost.
//!
//! Each successful iteration contributes its nominal trajectory with
//! backward-accumulated cost-to-go. The convex hull of the stored points is
//! the terminal set of the receding-horizon problem, and the terminal cost
//! of a state is the cheapest convex combination of stored costs that
//! reproduces it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, Bounds, LinearProgram, LpStatus};

/// Points closer than this, per coordinate, are merged keeping the lower cost.
const POINT_DEDUP: f64 = 1e-9;

/// Stage-cost weights for `l(s, v) = state . |s| + input * ||v||_1`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageWeights {
    pub state: DVector<f64>,
    pub input: f64,
}

impl StageWeights {
    pub fn stage_cost(&self, state: &DVector<f64>, input: &DVector<f64>) -> f64 {
        self.state
            .iter()
            .zip(state.iter())
            .map(|(w, s)| w * s.abs())
            .sum::<f64>()
            + self.input * input.iter().map(|v| v.abs()).sum::<f64>()
    }
}

/// Backward accumulation `J_t = l(s_t, v_t) + J_{t+1}` with an implicit zero
/// beyond the last stage. States and inputs must pair up one to one.
pub fn cost_to_go(
    states: &[DVector<f64>],
    inputs: &[DVector<f64>],
    weights: &StageWeights,
) -> Result<Vec<f64>> {
    if states.len() != inputs.len() {
        return Err(Error::LengthMismatch(format!(
            "{} states vs {} inputs",
            states.len(),
            inputs.len()
        )));
    }
    let mut j = vec![0.0; states.len()];
    let mut acc = 0.0;
    for t in (0..states.len()).rev() {
        acc += weights.stage_cost(&states[t], &inputs[t]);
        j[t] = acc;
    }
    Ok(j)
}

/// One converged nominal trajectory with its cost-to-go values.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StoredTrajectory {
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub cost_to_go: Vec<f64>,
    pub iteration: usize,
}

impl StoredTrajectory {
    /// Builds a trajectory from a rollout: `states` has one more entry than
    /// `inputs`; a zero input is appended for the terminal sample and the
    /// cost-to-go is filled in.
    pub fn from_rollout(
        states: Vec<DVector<f64>>,
        mut inputs: Vec<DVector<f64>>,
        iteration: usize,
        weights: &StageWeights,
    ) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::LengthMismatch("empty trajectory".into()));
        }
        if states.len() != inputs.len() + 1 {
            return Err(Error::LengthMismatch(format!(
                "{} states need {} inputs, got {}",
                states.len(),
                states.len() - 1,
                inputs.len()
            )));
        }
        let n_u = inputs.first().map_or(1, |u| u.len());
        inputs.push(DVector::zeros(n_u));
        let j = cost_to_go(&states, &inputs, weights)?;
        Ok(StoredTrajectory {
            states,
            inputs,
            cost_to_go: j,
            iteration,
        })
    }

    pub fn total_cost(&self) -> f64 {
        self.cost_to_go.first().copied().unwrap_or(0.0)
    }
}

/// All stored trajectories plus the flattened point/cost data the terminal
/// LP consumes. Duplicate points keep the minimum cost, so the cost vector
/// represents the pointwise-minimum cost-to-go.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampledSafeSet {
    pub trajectories: Vec<StoredTrajectory>,
    pub point_matrix: DMatrix<f64>,
    pub cost_vector: DVector<f64>,
}

impl SampledSafeSet {
    pub fn new(state_dim: usize) -> Self {
        SampledSafeSet {
            trajectories: Vec::new(),
            point_matrix: DMatrix::zeros(state_dim, 0),
            cost_vector: DVector::zeros(0),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.point_matrix.nrows()
    }

    pub fn num_points(&self) -> usize {
        self.point_matrix.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.num_points() == 0
    }

    /// Appends a trajectory whose final raw state is within `eps_conv` of
    /// the origin; the tail sample is snapped to the exact origin with zero
    /// cost-to-go (the origin is a fixed point of the nominal dynamics, so
    /// the convex hull stays control invariant). Non-converged trajectories
    /// are rejected.
    pub fn add_trajectory(
        &self,
        mut traj: StoredTrajectory,
        eps_conv: f64,
        weights: &StageWeights,
    ) -> Result<SampledSafeSet> {
        let last = traj
            .states
            .last()
            .ok_or_else(|| Error::LengthMismatch("empty trajectory".into()))?;
        let norm = last.amax();
        if norm > eps_conv {
            return Err(Error::NotConverged {
                norm,
                threshold: eps_conv,
            });
        }
        let n_x = self.state_dim();
        let t_last = traj.states.len() - 1;
        traj.states[t_last] = DVector::zeros(n_x);
        let n_u = traj.inputs[t_last].len();
        traj.inputs[t_last] = DVector::zeros(n_u);
        traj.cost_to_go = cost_to_go(&traj.states, &traj.inputs, weights)?;

        let mut next = self.clone();
        next.trajectories.push(traj);
        next.rebuild();
        Ok(next)
    }

    fn rebuild(&mut self) {
        let n_x = self.state_dim();
        let mut pts: Vec<DVector<f64>> = Vec::new();
        let mut costs: Vec<f64> = Vec::new();
        for traj in &self.trajectories {
            for (s, &j) in traj.states.iter().zip(traj.cost_to_go.iter()) {
                match pts.iter().position(|p| (p - s).amax() <= POINT_DEDUP) {
                    Some(idx) => costs[idx] = costs[idx].min(j),
                    None => {
                        pts.push(s.clone());
                        costs.push(j);
                    }
                }
            }
        }
        let mut matrix = DMatrix::zeros(n_x, pts.len());
        for (c, p) in pts.iter().enumerate() {
            matrix.column_mut(c).copy_from(p);
        }
        self.point_matrix = matrix;
        self.cost_vector = DVector::from_vec(costs);
    }

    /// Barycentric terminal cost: the cheapest convex combination of stored
    /// points reproducing `s`, or infinity when `s` is outside the hull.
    pub fn query_terminal_cost(&self, s: &DVector<f64>) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::EmptySet(
                "terminal query on an empty safe set".into(),
            ));
        }
        if s.len() != self.state_dim() {
            return Err(Error::DimensionMismatch(format!(
                "query point has dimension {}, safe set stores {}",
                s.len(),
                self.state_dim()
            )));
        }
        let n = self.num_points();
        let n_x = self.state_dim();
        let mut a_eq = DMatrix::zeros(n_x + 1, n);
        a_eq.rows_mut(0, n_x).copy_from(&self.point_matrix);
        for c in 0..n {
            a_eq[(n_x, c)] = 1.0;
        }
        let mut b_eq = DVector::zeros(n_x + 1);
        b_eq.rows_mut(0, n_x).copy_from(s);
        b_eq[n_x] = 1.0;
        let lp = LinearProgram::new(self.cost_vector.clone())
            .with_eq(a_eq, b_eq)
            .with_bounds(vec![Bounds::non_negative(); n]);
        let r = solve_lp(&lp)?;
        match r.status {
            LpStatus::Optimal => Ok(r.objective_value.unwrap()),
            LpStatus::Infeasible => Ok(f64::INFINITY),
            LpStatus::Unbounded => Err(Error::NumericalBreakdown(
                "terminal cost reported unbounded".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn weights() -> StageWeights {
        StageWeights {
            state: dvector![1.0, 1.0],
            input: 10.0,
        }
    }

    fn origin_trajectory() -> StoredTrajectory {
        StoredTrajectory::from_rollout(vec![dvector![0.0, 0.0]], vec![], 0, &weights()).unwrap()
    }

    #[test]
    fn cost_to_go_all_zero() {
        let states = vec![dvector![0.0, 0.0]; 4];
        let inputs = vec![dvector![0.0]; 4];
        let j = cost_to_go(&states, &inputs, &weights()).unwrap();
        assert!(j.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cost_to_go_single_step_paper_weights() {
        let states = vec![dvector![1.0, 0.0], dvector![0.0, 0.0]];
        let inputs = vec![dvector![0.5], dvector![0.0]];
        let j = cost_to_go(&states, &inputs, &weights()).unwrap();
        assert_eq!(j, vec![6.0, 0.0]);
    }

    #[test]
    fn cost_to_go_three_step_hand_sum() {
        let states = vec![
            dvector![2.0, -1.0],
            dvector![1.0, 0.5],
            dvector![-0.25, 0.0],
            dvector![0.0, 0.0],
        ];
        let inputs = vec![dvector![0.1], dvector![-0.2], dvector![0.05], dvector![0.0]];
        // stage costs: 3+1=4, 1.5+2=3.5, 0.25+0.5=0.75, 0
        let j = cost_to_go(&states, &inputs, &weights()).unwrap();
        let expect = [8.25, 4.25, 0.75, 0.0];
        for (a, b) in j.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cost_to_go_length_mismatch() {
        let states = vec![dvector![0.0, 0.0]; 3];
        let inputs = vec![dvector![0.0]; 2];
        assert!(matches!(
            cost_to_go(&states, &inputs, &weights()),
            Err(Error::LengthMismatch(_))
        ));
    }

    #[test]
    fn add_origin_trajectory() {
        let ss = SampledSafeSet::new(2);
        let ss = ss
            .add_trajectory(origin_trajectory(), 1e-3, &weights())
            .unwrap();
        assert_eq!(ss.num_points(), 1);
        assert_eq!(ss.cost_vector[0], 0.0);
    }

    #[test]
    fn add_nonconverged_trajectory_rejected() {
        let eps = 1e-3;
        let traj = StoredTrajectory::from_rollout(
            vec![dvector![1.0, 0.0], dvector![2.0 * eps, 0.0]],
            vec![dvector![0.0]],
            1,
            &weights(),
        )
        .unwrap();
        let ss = SampledSafeSet::new(2);
        assert!(matches!(
            ss.add_trajectory(traj, eps, &weights()),
            Err(Error::NotConverged { .. })
        ));
    }

    #[test]
    fn added_trajectory_grows_points_and_snaps_tail() {
        let traj = StoredTrajectory::from_rollout(
            vec![dvector![1.0, 0.0], dvector![0.5, 0.1], dvector![1e-6, 0.0]],
            vec![dvector![0.3], dvector![-0.1]],
            0,
            &weights(),
        )
        .unwrap();
        let ss = SampledSafeSet::new(2)
            .add_trajectory(traj, 1e-3, &weights())
            .unwrap();
        assert_eq!(ss.num_points(), 3);
        let j_origin = ss.query_terminal_cost(&dvector![0.0, 0.0]).unwrap();
        assert!(j_origin.abs() < 1e-9);
        let t = &ss.trajectories[0];
        assert_eq!(t.states.last().unwrap().amax(), 0.0);
        assert_eq!(t.cost_to_go.last().copied().unwrap(), 0.0);
    }

    #[test]
    fn query_stored_point_returns_its_cost() {
        let traj = StoredTrajectory::from_rollout(
            vec![dvector![2.0, 0.0], dvector![0.0, 0.0]],
            vec![dvector![0.5]],
            0,
            &weights(),
        )
        .unwrap();
        let ss = SampledSafeSet::new(2)
            .add_trajectory(traj, 1e-3, &weights())
            .unwrap();
        // stored cost at (2,0): 2 + 5 = 7
        let j = ss.query_terminal_cost(&dvector![2.0, 0.0]).unwrap();
        assert!((j - 7.0).abs() < 1e-8);
    }

    #[test]
    fn query_outside_hull_is_infinite() {
        let ss = SampledSafeSet::new(2)
            .add_trajectory(origin_trajectory(), 1e-3, &weights())
            .unwrap();
        let j = ss.query_terminal_cost(&dvector![1.0, 0.0]).unwrap();
        assert!(j.is_infinite());
    }

    #[test]
    fn query_midpoint_interpolates() {
        // stored points (0,0) cost 0, (2,0) cost 4, (0,2) cost 8; the
        // midpoint of the latter two costs exactly 6 because no cheaper
        // combination represents (1,1).
        let pts = [
            (dvector![0.0, 0.0], 0.0),
            (dvector![2.0, 0.0], 4.0),
            (dvector![0.0, 2.0], 8.0),
        ];
        let mut matrix = DMatrix::zeros(2, 3);
        let mut costs = DVector::zeros(3);
        for (i, (p, c)) in pts.iter().enumerate() {
            matrix.column_mut(i).copy_from(p);
            costs[i] = *c;
        }
        let ss = SampledSafeSet {
            trajectories: vec![],
            point_matrix: matrix,
            cost_vector: costs,
        };
        let j = ss.query_terminal_cost(&dvector![1.0, 1.0]).unwrap();
        assert!((j - 6.0).abs() < 1e-8);
        let j2 = ss.query_terminal_cost(&dvector![0.5, 0.5]).unwrap();
        assert!(j2 <= 3.0 + 1e-8);
    }

    #[test]
    fn adding_trajectories_never_raises_costs() {
        let t1 = StoredTrajectory::from_rollout(
            vec![dvector![2.0, 0.0], dvector![0.0, 0.0]],
            vec![dvector![0.5]],
            0,
            &weights(),
        )
        .unwrap();
        let ss1 = SampledSafeSet::new(2)
            .add_trajectory(t1, 1e-3, &weights())
            .unwrap();
        let q1 = ss1.query_terminal_cost(&dvector![1.0, 0.0]).unwrap();
        let t2 = StoredTrajectory::from_rollout(
            vec![dvector![1.0, 0.0], dvector![0.0, 0.0]],
            vec![dvector![0.1]],
            1,
            &weights(),
        )
        .unwrap();
        let ss2 = ss1.add_trajectory(t2, 1e-3, &weights()).unwrap();
        let q2 = ss2.query_terminal_cost(&dvector![1.0, 0.0]).unwrap();
        assert!(q2 <= q1 + 1e-9);
    }

    #[test]
    fn terminal_cost_is_convex_between_stored_points() {
        let w = weights();
        let t1 = StoredTrajectory::from_rollout(
            vec![dvector![2.0, 1.0], dvector![0.8, -0.3], dvector![0.0, 0.0]],
            vec![dvector![0.4], dvector![-0.2]],
            0,
            &w,
        )
        .unwrap();
        let t2 = StoredTrajectory::from_rollout(
            vec![dvector![-1.5, 0.5], dvector![0.0, 0.0]],
            vec![dvector![0.6]],
            1,
            &w,
        )
        .unwrap();
        let ss = SampledSafeSet::new(2)
            .add_trajectory(t1, 1e-3, &w)
            .unwrap()
            .add_trajectory(t2, 1e-3, &w)
            .unwrap();
        let pts = [
            dvector![2.0, 1.0],
            dvector![0.8, -0.3],
            dvector![-1.5, 0.5],
            dvector![0.25, 0.35],
        ];
        for a in &pts {
            for b in &pts {
                let qa = ss.query_terminal_cost(a).unwrap();
                let qb = ss.query_terminal_cost(b).unwrap();
                if qa.is_finite() && qb.is_finite() {
                    let mid = (a + b) * 0.5;
                    let qm = ss.query_terminal_cost(&mid).unwrap();
                    assert!(
                        qm <= 0.5 * qa + 0.5 * qb + 1e-8,
                        "convexity broken: P({:?}) = {} > {}",
                        mid.as_slice(),
                        qm,
                        0.5 * qa + 0.5 * qb
                    );
                }
            }
        }
    }

    #[test]
    fn finite_cost_exactly_on_the_stored_hull() {
        // cross-check membership against the geometric hull of the points
        let w = weights();
        let t1 = StoredTrajectory::from_rollout(
            vec![dvector![2.0, 1.0], dvector![0.8, -0.3], dvector![0.0, 0.0]],
            vec![dvector![0.4], dvector![-0.2]],
            0,
            &w,
        )
        .unwrap();
        let t2 = StoredTrajectory::from_rollout(
            vec![dvector![-1.5, 0.5], dvector![0.0, 0.0]],
            vec![dvector![0.6]],
            1,
            &w,
        )
        .unwrap();
        let ss = SampledSafeSet::new(2)
            .add_trajectory(t1, 1e-3, &w)
            .unwrap()
            .add_trajectory(t2, 1e-3, &w)
            .unwrap();
        let verts: Vec<nalgebra::Vector2<f64>> = (0..ss.num_points())
            .map(|c| {
                nalgebra::Vector2::new(ss.point_matrix[(0, c)], ss.point_matrix[(1, c)])
            })
            .collect();
        let hull = crate::polytope::HPolytope::from_vertices_2d(&verts).unwrap();
        let probes = [
            dvector![0.0, 0.0],
            dvector![0.5, 0.2],
            dvector![1.9, 0.95],
            dvector![-1.0, 0.4],
            dvector![2.5, 1.0],
            dvector![-2.0, 0.0],
            dvector![0.0, 1.0],
        ];
        for p in &probes {
            let finite = ss.query_terminal_cost(p).unwrap().is_finite();
            let inside = hull.contains(p);
            // skip the knife-edge: points within tolerance of the boundary
            let slack = (hull.normals() * p - hull.offsets()).amax();
            if slack.abs() > 1e-6 {
                assert_eq!(
                    finite,
                    inside,
                    "membership mismatch at {:?} (slack {})",
                    p.as_slice(),
                    slack
                );
            }
        }
    }

    #[test]
    fn duplicate_points_keep_min_cost() {
        let t1 = StoredTrajectory::from_rollout(
            vec![dvector![1.0, 0.0], dvector![0.0, 0.0]],
            vec![dvector![0.9]],
            0,
            &weights(),
        )
        .unwrap();
        let t2 = StoredTrajectory::from_rollout(
            vec![dvector![1.0, 0.0], dvector![0.0, 0.0]],
            vec![dvector![0.1]],
            1,
            &weights(),
        )
        .unwrap();
        let ss = SampledSafeSet::new(2)
            .add_trajectory(t1, 1e-3, &weights())
            .unwrap()
            .add_trajectory(t2, 1e-3, &weights())
            .unwrap();
        assert_eq!(ss.num_points(), 2);
        let j = ss.query_terminal_cost(&dvector![1.0, 0.0]).unwrap();
        assert!((j - 2.0).abs() < 1e-8); // 1 + 10*0.1
    }
}
