//! Built-in smoke suite: quick closed-form checks across every layer,
//! runnable from the shipped binary without the test harness.

use nalgebra::{dmatrix, dvector, DMatrix, DVector};

use almpc_core::controller::{control_input, solve_mpc, ModelData, MpcConfig, MpcPlan};
use almpc_core::lp::{solve_lp, Bounds, LinearProgram, LpStatus};
use almpc_core::polytope::HPolytope;
use almpc_core::regulator::{inf_norm, lqr_gain, solve_dare, Gains};
use almpc_core::safe_set::{cost_to_go, SampledSafeSet, StageWeights, StoredTrajectory};
use almpc_core::simulator::{sample_disturbance, ChaCha8Rng, SeedableRng};
use almpc_core::uncertainty::{
    disturbance_support, tightening_vector, FeasibleParameterSet,
};

type Check = (&'static str, fn() -> Result<(), String>);

fn ok(cond: bool, msg: &str) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.to_string())
    }
}

fn near(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn theta0() -> HPolytope {
    HPolytope::axis_box(&[(-0.2, 0.2), (-0.1, 0.1)]).unwrap()
}

fn noise_box() -> HPolytope {
    HPolytope::axis_box(&[(-0.8, 0.8), (-0.8, 0.8)]).unwrap()
}

fn weights() -> StageWeights {
    StageWeights {
        state: dvector![1.0, 1.0],
        input: 10.0,
    }
}

fn model() -> ModelData {
    ModelData::new(
        dmatrix![1.2, 1.5; 0.0, 1.3],
        dmatrix![0.0; 1.0],
        DMatrix::identity(2, 2),
        dmatrix![1.0, 0.0; 0.0, 1.0; -1.0, 0.0; 0.0, -1.0; 0.0, 0.0; 0.0, 0.0],
        dmatrix![0.0; 0.0; 0.0; 0.0; 1.0; -1.0],
        dvector![10.0, 10.0, 10.0, 10.0, 1.0, 1.0],
    )
    .unwrap()
}

fn checks() -> Vec<Check> {
    vec![
        ("lp: single active bound", || {
            let lp = LinearProgram::new(dvector![1.0])
                .with_bounds(vec![Bounds::new(1.0, f64::INFINITY)]);
            let r = solve_lp(&lp).map_err(|e| e.to_string())?;
            ok(
                r.status == LpStatus::Optimal && near(r.objective_value.unwrap(), 1.0, 1e-8),
                "expected optimum 1 at x = 1",
            )
        }),
        ("lp: empty feasible set", || {
            let lp = LinearProgram::new(dvector![0.0])
                .with_ineq(dmatrix![1.0; -1.0], dvector![0.0, -1.0]);
            let r = solve_lp(&lp).map_err(|e| e.to_string())?;
            ok(r.status == LpStatus::Infeasible, "expected infeasible")
        }),
        ("lp: box corner optimum", || {
            let lp = LinearProgram::new(dvector![-1.0, -1.0])
                .with_bounds(vec![Bounds::new(0.0, 1.0); 2]);
            let r = solve_lp(&lp).map_err(|e| e.to_string())?;
            ok(
                r.status == LpStatus::Optimal && near(r.objective_value.unwrap(), -2.0, 1e-8),
                "expected optimum -2 at (1, 1)",
            )
        }),
        ("matrices: identity product", || {
            let m = dmatrix![1.2, 1.5; 0.0, 1.3];
            let i = DMatrix::<f64>::identity(2, 2);
            ok(inf_norm(&(&i * &m - &m)) == 0.0, "I*M must equal M")
        }),
        ("matrices: system times input column", || {
            let prod = dmatrix![1.2, 1.5; 0.0, 1.3] * dvector![0.0, 1.0];
            ok(
                near(prod[0], 1.5, 1e-15) && near(prod[1], 1.3, 1e-15),
                "A*[0;1] must be [1.5;1.3]",
            )
        }),
        ("matrices: transpose involution", || {
            let m = dmatrix![1.0, 2.0; 3.0, 4.0; 5.0, 6.0];
            ok(
                inf_norm(&(m.transpose().transpose() - &m)) == 0.0,
                "(M')' must equal M",
            )
        }),
        ("polytope: support of the noise box", || {
            let s = noise_box()
                .support(&dvector![1.0, 0.0])
                .map_err(|e| e.to_string())?;
            ok(near(s, 0.8, 1e-9), "support must be 0.8")
        }),
        ("polytope: zero direction support", || {
            let s = theta0()
                .support(&dvector![0.0, 0.0])
                .map_err(|e| e.to_string())?;
            ok(near(s, 0.0, 1e-12), "support must vanish")
        }),
        ("polytope: diagonal support of the offset box", || {
            let s = theta0()
                .support(&dvector![1.0, 1.0])
                .map_err(|e| e.to_string())?;
            ok(near(s, 0.3, 1e-9), "support must be 0.3")
        }),
        ("polytope: intersection is idempotent", || {
            let p = theta0();
            let q = p.intersect(&p).map_err(|e| e.to_string())?;
            ok(
                q.is_subset(&p).map_err(|e| e.to_string())?
                    && p.is_subset(&q).map_err(|e| e.to_string())?,
                "p intersect p must equal p",
            )
        }),
        ("polytope: interval overlap", || {
            let a = HPolytope::axis_box(&[(-1.0, 1.0)]).unwrap();
            let b = HPolytope::axis_box(&[(0.0, 2.0)]).unwrap();
            let c = a.intersect(&b).map_err(|e| e.to_string())?;
            let hi = c.support(&dvector![1.0]).map_err(|e| e.to_string())?;
            let lo = -c.support(&dvector![-1.0]).map_err(|e| e.to_string())?;
            ok(near(lo, 0.0, 1e-9) && near(hi, 1.0, 1e-9), "expected [0, 1]")
        }),
        ("polytope: reduce drops a duplicated face", || {
            let p = theta0();
            let doubled = p.intersect(&p).unwrap();
            let r = doubled.reduce().map_err(|e| e.to_string())?;
            ok(r.num_halfspaces() == 4, "duplicate rows must be removed")
        }),
        ("polytope: membership checks", || {
            let unit = HPolytope::axis_box(&[(-1.0, 1.0), (-1.0, 1.0)]).unwrap();
            ok(
                unit.contains(&dvector![0.0, 0.0])
                    && !unit.contains(&dvector![1.1, 0.0])
                    && theta0().contains(&dvector![0.01, 0.05]),
                "membership examples failed",
            )
        }),
        ("polytope: subset checks", || {
            let a = HPolytope::axis_box(&[(0.0, 1.0)]).unwrap();
            let b = HPolytope::axis_box(&[(-1.0, 2.0)]).unwrap();
            let half =
                HPolytope::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), dvector![0.1]).unwrap();
            ok(
                a.is_subset(&a).map_err(|e| e.to_string())?
                    && a.is_subset(&b).map_err(|e| e.to_string())?
                    && !theta0().is_subset(&half).map_err(|e| e.to_string())?,
                "subset examples failed",
            )
        }),
        ("polytope: unit box vertices", || {
            let unit = HPolytope::axis_box(&[(-1.0, 1.0), (-1.0, 1.0)]).unwrap();
            let v = unit.vertices_2d().map_err(|e| e.to_string())?;
            ok(v.len() == 4, "unit box must have 4 vertices")
        }),
        ("polytope: offset box vertices", || {
            let v = theta0().vertices_2d().map_err(|e| e.to_string())?;
            ok(
                v.len() == 4
                    && v.iter()
                        .any(|p| near(p.x, 0.2, 1e-9) && near(p.y, 0.1, 1e-9)),
                "offset box corners wrong",
            )
        }),
        ("polytope: Minkowski sum of boxes", || {
            let s = noise_box()
                .minkowski_sum_2d(&theta0())
                .map_err(|e| e.to_string())?;
            let expect = HPolytope::axis_box(&[(-1.0, 1.0), (-0.9, 0.9)]).unwrap();
            ok(
                s.is_subset(&expect).map_err(|e| e.to_string())?
                    && expect.is_subset(&s).map_err(|e| e.to_string())?,
                "box radii must add",
            )
        }),
        ("regulator: zero dynamics fixed point", || {
            let p = solve_dare(
                &DMatrix::zeros(2, 2),
                &dmatrix![0.0; 1.0],
                &DMatrix::identity(2, 2),
                &dmatrix![1.0],
            )
            .map_err(|e| e.to_string())?;
            ok(
                inf_norm(&(&p - &DMatrix::identity(2, 2))) < 1e-12,
                "P must equal Q when A = 0",
            )
        }),
        ("regulator: zero dynamics gain", || {
            let g = lqr_gain(
                &DMatrix::zeros(2, 2),
                &dmatrix![0.0; 1.0],
                &DMatrix::identity(2, 2),
                &dmatrix![1.0],
            )
            .map_err(|e| e.to_string())?;
            ok(
                inf_norm(&g.feedback) < 1e-12 && g.contraction_power == 1,
                "K must vanish and Psi contract at power 1",
            )
        }),
        ("uncertainty: lumped supports", || {
            let fps = FeasibleParameterSet::initial(theta0()).unwrap();
            let e = DMatrix::identity(2, 2);
            let s1 = disturbance_support(&noise_box(), &fps, &e, &dvector![1.0, 0.0])
                .map_err(|e| e.to_string())?;
            let s2 = disturbance_support(&noise_box(), &fps, &e, &dvector![0.0, 1.0])
                .map_err(|e| e.to_string())?;
            ok(
                near(s1, 1.0, 1e-9) && near(s2, 0.9, 1e-9),
                "supports must be 1.0 and 0.9",
            )
        }),
        ("uncertainty: no uncertainty, no tightening", || {
            let zero = HPolytope::axis_box(&[(0.0, 0.0), (0.0, 0.0)]).unwrap();
            let fps = FeasibleParameterSet::initial(zero.clone()).unwrap();
            let gains = lqr_gain(
                &dmatrix![1.2, 1.5; 0.0, 1.3],
                &dmatrix![0.0; 1.0],
                &DMatrix::identity(2, 2),
                &dmatrix![10.0],
            )
            .unwrap();
            let t = tightening_vector(
                &dmatrix![1.0, 0.0; 0.0, 1.0],
                &gains,
                &zero,
                &fps,
                &DMatrix::identity(2, 2),
            )
            .map_err(|e| e.to_string())?;
            ok(t.h_s.amax() < 1e-12, "tightening must vanish")
        }),
        ("uncertainty: nilpotent loop keeps only the first term", || {
            let gains = Gains {
                feedback: DMatrix::zeros(1, 2),
                closed_loop: DMatrix::zeros(2, 2),
                riccati: DMatrix::identity(2, 2),
                contraction_power: 1,
                contraction_factor: 0.0,
            };
            let fps = FeasibleParameterSet::initial(theta0()).unwrap();
            let t = tightening_vector(
                &dmatrix![1.0, 0.0],
                &gains,
                &noise_box(),
                &fps,
                &DMatrix::identity(2, 2),
            )
            .map_err(|e| e.to_string())?;
            ok(near(t.h_s[0], 1.0, 1e-9), "single-term sum must be 1.0")
        }),
        ("safe set: zero trajectory, zero cost", || {
            let j = cost_to_go(
                &vec![dvector![0.0, 0.0]; 3],
                &vec![dvector![0.0]; 3],
                &weights(),
            )
            .map_err(|e| e.to_string())?;
            ok(j.iter().all(|&v| v == 0.0), "costs must vanish")
        }),
        ("safe set: single-step cost", || {
            let j = cost_to_go(
                &[dvector![1.0, 0.0], dvector![0.0, 0.0]],
                &[dvector![0.5], dvector![0.0]],
                &weights(),
            )
            .map_err(|e| e.to_string())?;
            ok(j == vec![6.0, 0.0], "expected [6, 0]")
        }),
        ("safe set: origin membership and filter", || {
            let w = weights();
            let origin =
                StoredTrajectory::from_rollout(vec![dvector![0.0, 0.0]], vec![], 0, &w).unwrap();
            let ss = SampledSafeSet::new(2)
                .add_trajectory(origin, 1e-3, &w)
                .map_err(|e| e.to_string())?;
            let stray = StoredTrajectory::from_rollout(
                vec![dvector![1.0, 0.0], dvector![2e-3, 0.0]],
                vec![dvector![0.0]],
                1,
                &w,
            )
            .unwrap();
            ok(
                ss.query_terminal_cost(&dvector![0.0, 0.0])
                    .map_err(|e| e.to_string())?
                    .abs()
                    < 1e-9
                    && ss.add_trajectory(stray, 1e-3, &w).is_err(),
                "origin cost or convergence filter failed",
            )
        }),
        ("controller: feedforward at zero error", || {
            let gains = lqr_gain(
                &dmatrix![1.2, 1.5; 0.0, 1.3],
                &dmatrix![0.0; 1.0],
                &DMatrix::identity(2, 2),
                &dmatrix![10.0],
            )
            .unwrap();
            let plan = MpcPlan {
                states: vec![dvector![0.0, 0.0]; 2],
                inputs: vec![dvector![0.25]],
                multipliers: dvector![1.0],
                cost: 0.0,
            };
            let u = control_input(&dvector![1.0, 2.0], &dvector![1.0, 2.0], &plan, &gains);
            ok(near(u[0], 0.25, 1e-12), "u must equal v* when x = s")
        }),
        ("controller: origin fixed point", || {
            let w = weights();
            let origin =
                StoredTrajectory::from_rollout(vec![dvector![0.0, 0.0]], vec![], 0, &w).unwrap();
            let ss = SampledSafeSet::new(2).add_trajectory(origin, 1e-9, &w).unwrap();
            let t = almpc_core::uncertainty::TighteningVector {
                h_s: DVector::zeros(6),
                truncation_k: 1,
                tail_bound: DVector::zeros(6),
                iteration: 0,
            };
            let cfg = MpcConfig {
                horizon: 3,
                weights: w,
                eps_conv: 1e-3,
            };
            let sol = solve_mpc(&dvector![0.0, 0.0], &model(), &cfg, &t, &ss)
                .map_err(|e| e.to_string())?;
            let plan = sol.plan().ok_or("origin must be feasible")?;
            ok(plan.cost.abs() < 1e-9, "cost at the origin must vanish")
        }),
        ("simulator: degenerate box samples zero", || {
            let zero = HPolytope::axis_box(&[(0.0, 0.0), (0.0, 0.0)]).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let w = sample_disturbance(&mut rng, &zero).map_err(|e| e.to_string())?;
            ok(w.amax() == 0.0, "draw from a point must be that point")
        }),
        ("simulator: seeded draws repeat", || {
            let draws = |seed: u64| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..10)
                    .map(|_| sample_disturbance(&mut rng, &noise_box()).unwrap())
                    .collect::<Vec<_>>()
            };
            ok(
                format!("{:?}", draws(5)) == format!("{:?}", draws(5)),
                "same seed must reproduce the sequence",
            )
        }),
    ]
}

/// Runs every check, printing one line each; returns (passed, failed).
pub fn run_selftest() -> (usize, usize) {
    let mut passed = 0;
    let mut failed = 0;
    for (name, check) in checks() {
        match check() {
            Ok(()) => {
                println!("ok   {}", name);
                passed += 1;
            }
            Err(msg) => {
                println!("FAIL {}: {}", name, msg);
                failed += 1;
            }
        }
    }
    println!("selftest: {} passed, {} failed", passed, failed);
    (passed, failed)
}
