//! Dense linear programming backend.
//!
//! Two-phase primal simplex on the standard-form reformulation. Entering
//! variables follow Dantzig's rule until a pivot budget is spent, then switch
//! permanently to Bland's rule so the iteration cannot cycle. Dense tableaus
//! are adequate here: the largest instances this crate builds have a few
//! hundred variables.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Componentwise feasibility tolerance used across the crate.
pub const TOL_FEAS: f64 = 1e-8;
/// Entries below this magnitude are never used as pivots.
const TOL_PIVOT: f64 = 1e-10;
/// Hard cap on simplex pivots per phase; exceeding it is reported as a
/// numerical breakdown, distinct from infeasibility.
const MAX_PIVOTS: usize = 200_000;

/// Per-variable bounds; infinities mean the side is unconstrained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub fn free() -> Self {
        Bounds {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    pub fn non_negative() -> Self {
        Bounds {
            lower: 0.0,
            upper: f64::INFINITY,
        }
    }

    pub fn new(lower: f64, upper: f64) -> Self {
        Bounds { lower, upper }
    }
}

/// min c'x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  bounds per variable.
#[derive(Clone, Debug)]
pub struct LinearProgram {
    pub objective: DVector<f64>,
    pub ineq: Option<(DMatrix<f64>, DVector<f64>)>,
    pub eq: Option<(DMatrix<f64>, DVector<f64>)>,
    pub bounds: Vec<Bounds>,
}

impl LinearProgram {
    pub fn new(objective: DVector<f64>) -> Self {
        let n = objective.len();
        LinearProgram {
            objective,
            ineq: None,
            eq: None,
            bounds: vec![Bounds::free(); n],
        }
    }

    pub fn with_ineq(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.ineq = Some((a, b));
        self
    }

    pub fn with_eq(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.eq = Some((a, b));
        self
    }

    pub fn with_bounds(mut self, bounds: Vec<Bounds>) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    fn check(&self) -> Result<()> {
        let n = self.num_vars();
        if let Some((a, b)) = &self.ineq {
            if a.ncols() != n || a.nrows() != b.len() {
                return Err(Error::DimensionMismatch(format!(
                    "ineq block is {}x{} with rhs of length {} for {} variables",
                    a.nrows(),
                    a.ncols(),
                    b.len(),
                    n
                )));
            }
        }
        if let Some((a, b)) = &self.eq {
            if a.ncols() != n || a.nrows() != b.len() {
                return Err(Error::DimensionMismatch(format!(
                    "eq block is {}x{} with rhs of length {} for {} variables",
                    a.nrows(),
                    a.ncols(),
                    b.len(),
                    n
                )));
            }
        }
        if self.bounds.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} bound pairs for {} variables",
                self.bounds.len(),
                n
            )));
        }
        for (j, bd) in self.bounds.iter().enumerate() {
            if bd.lower.is_finite() && bd.upper.is_finite() && bd.lower > bd.upper {
                return Err(Error::DimensionMismatch(format!(
                    "variable {} has lower bound {} above upper bound {}",
                    j, bd.lower, bd.upper
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Solver output. `x_opt`, `objective_value` and the dual multipliers are
/// present exactly when the status is `Optimal`.
///
/// Dual sign convention: at an optimum,
/// `c + A_ub' dual_ineq + A_eq' dual_eq = 0` with `dual_ineq >= 0`, so the
/// dual bound equals `-(dual_ineq . b_ub + dual_eq . b_eq)` for problems
/// whose variable bounds are expressed as explicit rows.
#[derive(Clone, Debug)]
pub struct LpResult {
    pub status: LpStatus,
    pub x_opt: Option<DVector<f64>>,
    pub objective_value: Option<f64>,
    pub dual_ineq: Option<DVector<f64>>,
    pub dual_eq: Option<DVector<f64>>,
}

impl LpResult {
    fn of_status(status: LpStatus) -> Self {
        LpResult {
            status,
            x_opt: None,
            objective_value: None,
            dual_ineq: None,
            dual_eq: None,
        }
    }
}

/// How each original variable maps into the nonnegative standard form.
#[derive(Clone, Copy, Debug)]
enum VarMap {
    /// x = lower + x'
    Shifted { col: usize, lower: f64 },
    /// x = upper - x'
    Flipped { col: usize, upper: f64 },
    /// x = x'_pos - x'_neg
    Split { pos: usize, neg: usize },
}

struct StandardForm {
    /// Equality system rows (slacks included), all rhs >= 0.
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    /// Cost over standard columns.
    cost: Vec<f64>,
    n_cols: usize,
    var_map: Vec<VarMap>,
    /// +-1 per row: sign applied to make the rhs nonnegative.
    row_sign: Vec<f64>,
    n_ineq: usize,
    n_eq: usize,
    /// Column of the slack variable per inequality-type row, if any.
    slack_col: Vec<Option<usize>>,
}

fn build_standard_form(lp: &LinearProgram) -> StandardForm {
    let n = lp.num_vars();
    let mut var_map = Vec::with_capacity(n);
    let mut n_struct = 0usize;
    let mut upper_rows: Vec<(usize, f64)> = Vec::new(); // (std col, bound)
    for bd in &lp.bounds {
        match (bd.lower.is_finite(), bd.upper.is_finite()) {
            (true, true) => {
                var_map.push(VarMap::Shifted {
                    col: n_struct,
                    lower: bd.lower,
                });
                upper_rows.push((n_struct, bd.upper - bd.lower));
                n_struct += 1;
            }
            (true, false) => {
                var_map.push(VarMap::Shifted {
                    col: n_struct,
                    lower: bd.lower,
                });
                n_struct += 1;
            }
            (false, true) => {
                var_map.push(VarMap::Flipped {
                    col: n_struct,
                    upper: bd.upper,
                });
                n_struct += 1;
            }
            (false, false) => {
                var_map.push(VarMap::Split {
                    pos: n_struct,
                    neg: n_struct + 1,
                });
                n_struct += 2;
            }
        }
    }

    let n_ineq = lp.ineq.as_ref().map_or(0, |(a, _)| a.nrows());
    let n_eq = lp.eq.as_ref().map_or(0, |(a, _)| a.nrows());
    let n_rows = n_ineq + upper_rows.len() + n_eq;
    let n_slack = n_ineq + upper_rows.len();
    let total_cols = n_struct + n_slack;

    let mut a = vec![vec![0.0; total_cols]; n_rows];
    let mut b = vec![0.0; n_rows];
    let mut slack_col = vec![None; n_rows];

    // Writes original row coefficients through the variable map and returns
    // the rhs correction from bound shifts.
    let emit = |row: &mut [f64], coeffs: &dyn Fn(usize) -> f64| -> f64 {
        let mut shift = 0.0;
        for (j, vm) in var_map.iter().enumerate() {
            let c = coeffs(j);
            if c == 0.0 {
                continue;
            }
            match *vm {
                VarMap::Shifted { col, lower } => {
                    row[col] += c;
                    shift += c * lower;
                }
                VarMap::Flipped { col, upper } => {
                    row[col] -= c;
                    shift += c * upper;
                }
                VarMap::Split { pos, neg } => {
                    row[pos] += c;
                    row[neg] -= c;
                }
            }
        }
        shift
    };

    let mut r = 0usize;
    if let Some((ai, bi)) = &lp.ineq {
        for i in 0..ai.nrows() {
            let shift = emit(&mut a[r], &|j| ai[(i, j)]);
            b[r] = bi[i] - shift;
            slack_col[r] = Some(n_struct + r);
            a[r][n_struct + r] = 1.0;
            r += 1;
        }
    }
    for (k, &(col, ub)) in upper_rows.iter().enumerate() {
        a[r][col] = 1.0;
        b[r] = ub;
        slack_col[r] = Some(n_struct + n_ineq + k);
        a[r][n_struct + n_ineq + k] = 1.0;
        r += 1;
    }
    if let Some((ae, be)) = &lp.eq {
        for i in 0..ae.nrows() {
            let shift = emit(&mut a[r], &|j| ae[(i, j)]);
            b[r] = be[i] - shift;
            r += 1;
        }
    }

    // Make every rhs nonnegative; remember the flips for the dual mapping.
    let mut row_sign = vec![1.0; n_rows];
    for i in 0..n_rows {
        if b[i] < 0.0 {
            row_sign[i] = -1.0;
            b[i] = -b[i];
            for v in a[i].iter_mut() {
                *v = -*v;
            }
        }
    }

    let mut cost = vec![0.0; total_cols];
    for (j, vm) in var_map.iter().enumerate() {
        let c = lp.objective[j];
        match *vm {
            VarMap::Shifted { col, .. } => cost[col] += c,
            VarMap::Flipped { col, .. } => cost[col] -= c,
            VarMap::Split { pos, neg } => {
                cost[pos] += c;
                cost[neg] -= c;
            }
        }
    }

    StandardForm {
        a,
        b,
        cost,
        n_cols: total_cols,
        var_map,
        row_sign,
        n_ineq,
        n_eq,
        slack_col,
    }
}

/// Tableau state for one simplex phase.
struct Tableau {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    basis: Vec<usize>,
    /// Reduced costs, updated per pivot.
    z: Vec<f64>,
    /// Columns at or beyond this index may never enter the basis.
    n_enterable: usize,
    /// Original standard-form row index per tableau row.
    row_ids: Vec<usize>,
}

enum PhaseOutcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let piv = self.a[row][col];
        let inv = 1.0 / piv;
        for v in self.a[row].iter_mut() {
            *v *= inv;
        }
        self.b[row] *= inv;
        self.a[row][col] = 1.0;
        for i in 0..self.a.len() {
            if i == row {
                continue;
            }
            let factor = self.a[i][col];
            if factor == 0.0 {
                continue;
            }
            for j in 0..self.a[i].len() {
                self.a[i][j] -= factor * self.a[row][j];
            }
            self.a[i][col] = 0.0;
            self.b[i] -= factor * self.b[row];
            if self.b[i] < 0.0 && self.b[i] > -TOL_PIVOT {
                self.b[i] = 0.0;
            }
        }
        let zf = self.z[col];
        if zf != 0.0 {
            for j in 0..self.z.len() {
                self.z[j] -= zf * self.a[row][j];
            }
            self.z[col] = 0.0;
        }
        self.basis[row] = col;
    }

    /// Runs simplex until optimal or unbounded. Dantzig entering rule first,
    /// Bland's smallest-index rule after `bland_after` pivots; the leaving
    /// tie-break is always smallest basic variable index.
    fn run(&mut self, bland_after: usize) -> Result<PhaseOutcome> {
        for iter in 0..MAX_PIVOTS {
            let bland = iter >= bland_after;
            let mut col = None;
            if bland {
                for j in 0..self.n_enterable {
                    if self.z[j] < -TOL_PIVOT {
                        col = Some(j);
                        break;
                    }
                }
            } else {
                let mut best = -TOL_PIVOT;
                for j in 0..self.n_enterable {
                    if self.z[j] < best {
                        best = self.z[j];
                        col = Some(j);
                    }
                }
            }
            let col = match col {
                Some(c) => c,
                None => return Ok(PhaseOutcome::Optimal),
            };

            let mut row: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for i in 0..self.a.len() {
                let aij = self.a[i][col];
                if aij > TOL_PIVOT {
                    let ratio = self.b[i] / aij;
                    let better = match row {
                        None => true,
                        Some(r) => {
                            ratio < best_ratio - TOL_PIVOT
                                || (ratio < best_ratio + TOL_PIVOT
                                    && self.basis[i] < self.basis[r])
                        }
                    };
                    if better {
                        best_ratio = ratio;
                        row = Some(i);
                    }
                }
            }
            match row {
                Some(r) => self.pivot(r, col),
                None => return Ok(PhaseOutcome::Unbounded),
            }
        }
        Err(Error::NumericalBreakdown(format!(
            "simplex exceeded {} pivots",
            MAX_PIVOTS
        )))
    }
}

/// Solves the linear program. Statuses cover the three classical outcomes;
/// structured errors are reserved for malformed input and numerical
/// breakdown.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpResult> {
    lp.check()?;
    let sf = build_standard_form(lp);
    let n_rows = sf.a.len();
    let n_cols = sf.n_cols;

    if n_rows == 0 {
        // Only the nonnegativity cone remains after the variable map; any
        // negative cost coefficient gives a feasible improving ray.
        if sf.cost.iter().any(|&c| c < -TOL_PIVOT) {
            return Ok(LpResult::of_status(LpStatus::Unbounded));
        }
        let x = recover_x(lp, &sf, &vec![0.0; n_cols]);
        let obj = lp.objective.dot(&x);
        return Ok(LpResult {
            status: LpStatus::Optimal,
            x_opt: Some(x),
            objective_value: Some(obj),
            dual_ineq: Some(DVector::zeros(0)),
            dual_eq: Some(DVector::zeros(0)),
        });
    }

    // Seed a basis from slacks where possible; remaining rows get artificials.
    let mut basis = vec![usize::MAX; n_rows];
    let mut needs_artificial = Vec::new();
    for (i, slot) in basis.iter_mut().enumerate() {
        match sf.slack_col[i] {
            Some(sc) if sf.row_sign[i] > 0.0 => *slot = sc,
            _ => needs_artificial.push(i),
        }
    }
    let n_art = needs_artificial.len();
    let total = n_cols + n_art;

    let mut tab_a: Vec<Vec<f64>> = sf
        .a
        .iter()
        .map(|row| {
            let mut r = row.clone();
            r.resize(total, 0.0);
            r
        })
        .collect();
    for (k, &i) in needs_artificial.iter().enumerate() {
        tab_a[i][n_cols + k] = 1.0;
        basis[i] = n_cols + k;
    }

    let bland_after = 20 * (n_rows + total).max(200);
    let row_ids: Vec<usize> = (0..n_rows).collect();

    let (a2, b2, basis2, row_ids2) = if n_art > 0 {
        // Phase one: minimize the sum of artificials.
        let mut z = vec![0.0; total];
        for &i in &needs_artificial {
            for j in 0..total {
                z[j] -= tab_a[i][j];
            }
        }
        for zj in z.iter_mut().take(total).skip(n_cols) {
            *zj = 0.0;
        }
        let mut tab = Tableau {
            a: tab_a,
            b: sf.b.clone(),
            basis,
            z,
            n_enterable: total,
            row_ids,
        };
        match tab.run(bland_after)? {
            PhaseOutcome::Unbounded => {
                return Err(Error::NumericalBreakdown(
                    "phase one reported unbounded".into(),
                ))
            }
            PhaseOutcome::Optimal => {}
        }
        let attained: f64 = (0..n_rows)
            .filter(|&i| tab.basis[i] >= n_cols)
            .map(|i| tab.b[i])
            .sum();
        if attained > 1e-7 {
            return Ok(LpResult::of_status(LpStatus::Infeasible));
        }

        // Drive remaining zero-level artificials out of the basis; rows with
        // no eligible pivot are redundant and dropped.
        let mut keep = vec![true; tab.a.len()];
        #[allow(clippy::needless_range_loop)] // the body pivots `tab` in place
        for i in 0..tab.a.len() {
            if tab.basis[i] >= n_cols {
                let mut pivoted = false;
                for j in 0..n_cols {
                    if tab.a[i][j].abs() > 1e-7 {
                        tab.pivot(i, j);
                        pivoted = true;
                        break;
                    }
                }
                keep[i] = pivoted;
            }
        }
        let mut a2 = Vec::new();
        let mut b2 = Vec::new();
        let mut basis2 = Vec::new();
        let mut ids2 = Vec::new();
        for (i, kept) in keep.iter().enumerate() {
            if *kept {
                let mut row = tab.a[i].clone();
                row.truncate(n_cols);
                a2.push(row);
                b2.push(tab.b[i]);
                basis2.push(tab.basis[i]);
                ids2.push(tab.row_ids[i]);
            }
        }
        (a2, b2, basis2, ids2)
    } else {
        for row in tab_a.iter_mut() {
            row.truncate(n_cols);
        }
        (tab_a, sf.b.clone(), basis, row_ids)
    };

    run_phase_two(lp, &sf, a2, b2, basis2, row_ids2, bland_after)
}

#[allow(clippy::too_many_arguments)]
fn run_phase_two(
    lp: &LinearProgram,
    sf: &StandardForm,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    basis: Vec<usize>,
    row_ids: Vec<usize>,
    bland_after: usize,
) -> Result<LpResult> {
    let n_cols = sf.n_cols;
    let mut z = sf.cost.clone();
    for (i, &bi) in basis.iter().enumerate() {
        let cb = sf.cost[bi];
        if cb != 0.0 {
            for j in 0..n_cols {
                z[j] -= cb * a[i][j];
            }
        }
    }
    for &bi in &basis {
        z[bi] = 0.0;
    }
    let mut tab = Tableau {
        a,
        b,
        basis,
        z,
        n_enterable: n_cols,
        row_ids,
    };
    match tab.run(bland_after)? {
        PhaseOutcome::Unbounded => return Ok(LpResult::of_status(LpStatus::Unbounded)),
        PhaseOutcome::Optimal => {}
    }

    // Refactorize: recompute basic values and duals from the pristine
    // standard-form columns so tableau drift does not leak into the result.
    let m = tab.a.len();
    let mut bmat = DMatrix::zeros(m, m);
    let mut cb = DVector::zeros(m);
    for (k, &bi) in tab.basis.iter().enumerate() {
        cb[k] = sf.cost[bi];
        for (i, &orig_row) in tab.row_ids.iter().enumerate() {
            bmat[(i, k)] = sf.a[orig_row][bi];
        }
    }
    let rhs = DVector::from_iterator(m, tab.row_ids.iter().map(|&r| sf.b[r]));
    let xb = bmat
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NumericalBreakdown("singular basis at optimum".into()))?;
    let y = bmat
        .transpose()
        .lu()
        .solve(&cb)
        .ok_or_else(|| Error::NumericalBreakdown("singular basis transpose".into()))?;

    let mut x_std = vec![0.0; n_cols];
    for (k, &bi) in tab.basis.iter().enumerate() {
        x_std[bi] = xb[k];
    }
    let x = recover_x(lp, sf, &x_std);
    let obj = lp.objective.dot(&x);

    // Duals of dropped (redundant) rows are zero.
    let mut y_full = vec![0.0; sf.a.len()];
    for (i, &orig_row) in tab.row_ids.iter().enumerate() {
        y_full[orig_row] = y[i];
    }
    let mut dual_ineq = DVector::zeros(sf.n_ineq);
    for i in 0..sf.n_ineq {
        dual_ineq[i] = -sf.row_sign[i] * y_full[i];
        if dual_ineq[i] < 0.0 && dual_ineq[i] > -1e-7 {
            dual_ineq[i] = 0.0;
        }
    }
    let eq_start = sf.a.len() - sf.n_eq;
    let mut dual_eq = DVector::zeros(sf.n_eq);
    for i in 0..sf.n_eq {
        dual_eq[i] = -sf.row_sign[eq_start + i] * y_full[eq_start + i];
    }

    // Final feasibility audit against the original data.
    if let Some((ai, bi)) = &lp.ineq {
        let resid = ai * &x - bi;
        if resid.iter().any(|&v| v > 1e-7) {
            return Err(Error::NumericalBreakdown(format!(
                "optimal vertex violates an inequality by {:.3e}",
                resid.iter().cloned().fold(f64::MIN, f64::max)
            )));
        }
    }
    if let Some((ae, be)) = &lp.eq {
        let resid = ae * &x - be;
        if resid.iter().any(|&v| v.abs() > 1e-7) {
            return Err(Error::NumericalBreakdown(format!(
                "optimal vertex violates an equality by {:.3e}",
                resid.iter().cloned().fold(0.0f64, |m, v| m.max(v.abs()))
            )));
        }
    }

    Ok(LpResult {
        status: LpStatus::Optimal,
        x_opt: Some(x),
        objective_value: Some(obj),
        dual_ineq: Some(dual_ineq),
        dual_eq: Some(dual_eq),
    })
}

fn recover_x(lp: &LinearProgram, sf: &StandardForm, x_std: &[f64]) -> DVector<f64> {
    let n = lp.num_vars();
    let mut x = DVector::zeros(n);
    for (j, vm) in sf.var_map.iter().enumerate() {
        x[j] = match *vm {
            VarMap::Shifted { col, lower } => lower + x_std[col],
            VarMap::Flipped { col, upper } => upper - x_std[col],
            VarMap::Split { pos, neg } => x_std[pos] - x_std[neg],
        };
    }
    x
}
