//! Independent oracle checks for the LP backend: brute-force vertex
//! enumeration on small random programs, strong duality from the returned
//! multipliers, and bytewise determinism.

use almpc_core::lp::{solve_lp, LinearProgram, LpStatus};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Enumerates all n-subsets of constraint rows, solves each square system,
/// keeps feasible intersection points, and returns the best objective.
/// Independent of the simplex path: nalgebra LU solves the subsets.
fn best_vertex_by_enumeration(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
) -> Option<(f64, DVector<f64>)> {
    let n = c.len();
    let m = a.nrows();
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut subset: Vec<usize> = (0..n).collect();
    loop {
        // solve the active set
        let mut sys = DMatrix::zeros(n, n);
        let mut rhs = DVector::zeros(n);
        for (k, &r) in subset.iter().enumerate() {
            sys.row_mut(k).copy_from(&a.row(r));
            rhs[k] = b[r];
        }
        if let Some(x) = sys.lu().solve(&rhs) {
            if x.iter().all(|v| v.is_finite()) {
                let resid = a * &x - b;
                if resid.iter().all(|&v| v <= 1e-7) {
                    let obj = c.dot(&x);
                    if best.as_ref().is_none_or(|(bo, _)| obj < *bo) {
                        best = Some((obj, x));
                    }
                }
            }
        }
        // next lexicographic subset
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if subset[i] < m - (n - i) {
                subset[i] += 1;
                for k in (i + 1)..n {
                    subset[k] = subset[k - 1] + 1;
                }
                break;
            }
        }
    }
}

struct RandomLp {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: DVector<f64>,
}

/// Random LP bounded by construction: a box on every variable plus up to
/// eight extra rows, some of which may cut away the whole box.
fn random_lp(rng: &mut ChaCha8Rng, force_feasible: bool) -> RandomLp {
    let n = rng.gen_range(1..=3usize);
    let m_extra = rng.gen_range(1..=8usize);
    let radius = rng.gen_range(1.0..5.0f64);
    let interior: DVector<f64> =
        DVector::from_iterator(n, (0..n).map(|_| rng.gen_range(-0.5..0.5) * radius));
    let m = 2 * n + m_extra;
    let mut a = DMatrix::zeros(m, n);
    let mut b = DVector::zeros(m);
    for j in 0..n {
        a[(j, j)] = 1.0;
        b[j] = radius;
        a[(n + j, j)] = -1.0;
        b[n + j] = radius;
    }
    for i in 0..m_extra {
        let row: DVector<f64> = DVector::from_iterator(n, (0..n).map(|_| rng.gen_range(-2.0..2.0)));
        let rhs = if force_feasible || rng.gen_bool(0.8) {
            // pass on the feasible side of the interior point with slack
            row.dot(&interior) + rng.gen_range(0.05..2.0)
        } else {
            row.dot(&interior) - rng.gen_range(0.5..4.0)
        };
        a.row_mut(2 * n + i).copy_from(&row.transpose());
        b[2 * n + i] = rhs;
    }
    let c = DVector::from_iterator(n, (0..n).map(|_| rng.gen_range(-2.0..2.0)));
    RandomLp { a, b, c }
}

#[test]
fn simplex_matches_vertex_enumeration_on_200_random_lps() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut n_feasible = 0;
    let mut n_infeasible = 0;
    for case in 0..200 {
        let lp_data = random_lp(&mut rng, false);
        let lp = LinearProgram::new(lp_data.c.clone())
            .with_ineq(lp_data.a.clone(), lp_data.b.clone());
        let solved = solve_lp(&lp).unwrap();
        let oracle = best_vertex_by_enumeration(&lp_data.a, &lp_data.b, &lp_data.c);
        match (&solved.status, &oracle) {
            (LpStatus::Optimal, Some((obj, _))) => {
                n_feasible += 1;
                let got = solved.objective_value.unwrap();
                assert!(
                    (got - obj).abs() <= 1e-6 * (1.0 + obj.abs()),
                    "case {}: simplex {} vs oracle {}",
                    case,
                    got,
                    obj
                );
            }
            (LpStatus::Infeasible, None) => n_infeasible += 1,
            (status, oracle) => panic!(
                "case {}: status {:?} disagrees with oracle {:?}",
                case,
                status,
                oracle.as_ref().map(|(o, _)| o)
            ),
        }
    }
    // the generator must exercise both outcomes
    assert!(n_feasible >= 100, "only {} feasible cases", n_feasible);
    assert!(n_infeasible >= 10, "only {} infeasible cases", n_infeasible);
}

#[test]
fn strong_duality_on_random_feasible_lps() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..100 {
        let lp_data = random_lp(&mut rng, true);
        let lp = LinearProgram::new(lp_data.c.clone())
            .with_ineq(lp_data.a.clone(), lp_data.b.clone());
        let solved = solve_lp(&lp).unwrap();
        assert_eq!(solved.status, LpStatus::Optimal, "case {}", case);
        let lam = solved.dual_ineq.unwrap();
        assert!(
            lam.iter().all(|&v| v >= -1e-9),
            "case {}: negative multiplier",
            case
        );
        let stationarity = &lp_data.c + lp_data.a.transpose() * &lam;
        assert!(
            stationarity.amax() < 1e-6,
            "case {}: stationarity residual {}",
            case,
            stationarity.amax()
        );
        let primal = solved.objective_value.unwrap();
        let dual = -lam.dot(&lp_data.b);
        assert!(
            (primal - dual).abs() < 1e-6 * (1.0 + primal.abs()),
            "case {}: primal {} vs dual {}",
            case,
            primal,
            dual
        );
    }
}

#[test]
fn identical_inputs_give_identical_outputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..20 {
        let lp_data = random_lp(&mut rng, false);
        let mk = || {
            LinearProgram::new(lp_data.c.clone()).with_ineq(lp_data.a.clone(), lp_data.b.clone())
        };
        let r1 = format!("{:?}", solve_lp(&mk()).unwrap());
        let r2 = format!("{:?}", solve_lp(&mk()).unwrap());
        assert_eq!(r1, r2);
    }
}

#[test]
fn optimal_points_sit_on_vertices() {
    // vertex-optimality: the returned point must match some enumerated
    // vertex, not an interior point
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let lp_data = random_lp(&mut rng, true);
        let lp = LinearProgram::new(lp_data.c.clone())
            .with_ineq(lp_data.a.clone(), lp_data.b.clone());
        let solved = solve_lp(&lp).unwrap();
        let x = solved.x_opt.unwrap();
        let n = x.len();
        // count active rows at the solution
        let active = (0..lp_data.a.nrows())
            .filter(|&i| {
                let v = lp_data.a.row(i).transpose().dot(&x) - lp_data.b[i];
                v.abs() <= 1e-6
            })
            .count();
        assert!(
            active >= n,
            "solution has only {} active rows in dimension {}",
            active,
            n
        );
    }
}
