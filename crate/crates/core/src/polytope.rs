//! Halfspace-polytope kernel.
//!
//! `HPolytope` is the canonical carrier for every bounded set in the stack:
//! disturbance bounds, offset domains, lumped-disturbance sets, invariant-set
//! outer approximations and constraint boxes. All controller-path queries are
//! support evaluations, which are LPs in the halfspace representation; a
//! vertex representation exists only transiently in 2D for plots and the
//! Minkowski-sum oracle.

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LinearProgram, LpStatus, TOL_FEAS};

/// Vertices closer than this (per coordinate) are treated as duplicates.
const VERTEX_DEDUP: f64 = 1e-9;

/// `{ x : H x <= h }` with unit-norm rows.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HPolytope {
    normals: DMatrix<f64>,
    offsets: DVector<f64>,
}

impl HPolytope {
    /// Builds a polytope from raw halfspace data, normalizing each row to a
    /// unit Euclidean normal so tolerances act uniformly.
    pub fn new(normals: DMatrix<f64>, offsets: DVector<f64>) -> Result<Self> {
        if normals.nrows() != offsets.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} halfspace rows but {} offsets",
                normals.nrows(),
                offsets.len()
            )));
        }
        let mut normals = normals;
        let mut offsets = offsets;
        for i in 0..normals.nrows() {
            let norm = normals.row(i).norm();
            if norm < 1e-12 {
                return Err(Error::ZeroNormal(i));
            }
            for j in 0..normals.ncols() {
                normals[(i, j)] /= norm;
            }
            offsets[i] /= norm;
        }
        Ok(HPolytope { normals, offsets })
    }

    /// Axis-aligned box from per-coordinate `(lower, upper)` intervals.
    /// Degenerate intervals (`lower == upper`) are allowed.
    pub fn axis_box(intervals: &[(f64, f64)]) -> Result<Self> {
        let n = intervals.len();
        if n == 0 {
            return Err(Error::DimensionMismatch("empty box".into()));
        }
        for (j, &(lo, hi)) in intervals.iter().enumerate() {
            if lo > hi {
                return Err(Error::EmptySet(format!(
                    "box interval {} has lower {} above upper {}",
                    j, lo, hi
                )));
            }
        }
        let mut normals = DMatrix::zeros(2 * n, n);
        let mut offsets = DVector::zeros(2 * n);
        for (j, &(lo, hi)) in intervals.iter().enumerate() {
            normals[(j, j)] = 1.0;
            offsets[j] = hi;
            normals[(n + j, j)] = -1.0;
            offsets[n + j] = -lo;
        }
        Ok(HPolytope { normals, offsets })
    }

    pub fn dim(&self) -> usize {
        self.normals.ncols()
    }

    pub fn num_halfspaces(&self) -> usize {
        self.normals.nrows()
    }

    pub fn normals(&self) -> &DMatrix<f64> {
        &self.normals
    }

    pub fn offsets(&self) -> &DVector<f64> {
        &self.offsets
    }

    /// Checks nonemptiness by LP feasibility.
    pub fn validate_nonempty(&self) -> Result<()> {
        let lp = LinearProgram::new(DVector::zeros(self.dim()))
            .with_ineq(self.normals.clone(), self.offsets.clone());
        match solve_lp(&lp)?.status {
            LpStatus::Infeasible => Err(Error::EmptySet("polytope has no feasible point".into())),
            _ => Ok(()),
        }
    }

    /// max_{x in self} d.x, via LP. Errors if the set is empty or unbounded
    /// in direction `d`.
    pub fn support(&self, direction: &DVector<f64>) -> Result<f64> {
        if direction.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "direction has length {} for a {}-dimensional polytope",
                direction.len(),
                self.dim()
            )));
        }
        let lp = LinearProgram::new(-direction.clone())
            .with_ineq(self.normals.clone(), self.offsets.clone());
        let r = solve_lp(&lp)?;
        match r.status {
            LpStatus::Optimal => Ok(-r.objective_value.unwrap()),
            LpStatus::Unbounded => Err(Error::Unbounded(format!(
                "support in direction {:?}",
                direction.as_slice()
            ))),
            LpStatus::Infeasible => Err(Error::EmptySet("support of an empty polytope".into())),
        }
    }

    /// Row-concatenation of the halfspace descriptions; the result is not
    /// checked for emptiness.
    pub fn intersect(&self, other: &HPolytope) -> Result<HPolytope> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "intersecting {}-dim with {}-dim polytope",
                self.dim(),
                other.dim()
            )));
        }
        let m = self.num_halfspaces() + other.num_halfspaces();
        let mut normals = DMatrix::zeros(m, self.dim());
        let mut offsets = DVector::zeros(m);
        normals
            .rows_mut(0, self.num_halfspaces())
            .copy_from(&self.normals);
        normals
            .rows_mut(self.num_halfspaces(), other.num_halfspaces())
            .copy_from(&other.normals);
        offsets
            .rows_mut(0, self.num_halfspaces())
            .copy_from(&self.offsets);
        offsets
            .rows_mut(self.num_halfspaces(), other.num_halfspaces())
            .copy_from(&other.offsets);
        Ok(HPolytope { normals, offsets })
    }

    /// Minimal halfspace description of the same set: a row is dropped when
    /// maximizing it subject to the remaining rows cannot exceed its offset.
    pub fn reduce(&self) -> Result<HPolytope> {
        self.validate_nonempty()?;
        let mut rows: Vec<usize> = (0..self.num_halfspaces()).collect();
        let mut i = 0;
        while i < rows.len() {
            if rows.len() == 1 {
                break;
            }
            let candidate = rows[i];
            let others: Vec<usize> = rows
                .iter()
                .copied()
                .filter(|&r| r != candidate)
                .collect();
            let mut normals = DMatrix::zeros(others.len(), self.dim());
            let mut offsets = DVector::zeros(others.len());
            for (k, &r) in others.iter().enumerate() {
                normals.row_mut(k).copy_from(&self.normals.row(r));
                offsets[k] = self.offsets[r];
            }
            let lp = LinearProgram::new(-self.normals.row(candidate).transpose())
                .with_ineq(normals, offsets);
            let r = solve_lp(&lp)?;
            let redundant = match r.status {
                LpStatus::Optimal => {
                    -r.objective_value.unwrap() <= self.offsets[candidate] + TOL_FEAS
                }
                LpStatus::Unbounded => false,
                LpStatus::Infeasible => {
                    return Err(Error::EmptySet("reduce on an empty polytope".into()))
                }
            };
            if redundant {
                rows.remove(i);
            } else {
                i += 1;
            }
        }
        let mut normals = DMatrix::zeros(rows.len(), self.dim());
        let mut offsets = DVector::zeros(rows.len());
        for (k, &r) in rows.iter().enumerate() {
            normals.row_mut(k).copy_from(&self.normals.row(r));
            offsets[k] = self.offsets[r];
        }
        Ok(HPolytope { normals, offsets })
    }

    /// Membership within the crate feasibility tolerance.
    pub fn contains(&self, x: &DVector<f64>) -> bool {
        assert_eq!(
            x.len(),
            self.dim(),
            "point dimension {} vs polytope dimension {}",
            x.len(),
            self.dim()
        );
        let resid = &self.normals * x - &self.offsets;
        resid.iter().all(|&v| v <= TOL_FEAS)
    }

    /// `self` is contained in `other` iff every halfspace of `other` bounds
    /// the support of `self`.
    pub fn is_subset(&self, other: &HPolytope) -> Result<bool> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "subset test between {}-dim and {}-dim polytopes",
                self.dim(),
                other.dim()
            )));
        }
        for i in 0..other.num_halfspaces() {
            let d = other.normals.row(i).transpose();
            let s = self.support(&d)?;
            if s > other.offsets[i] + TOL_FEAS {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Vertices of a bounded 2D polytope in counter-clockwise order,
    /// deduplicated; ties in the ordering are broken by angle then radius.
    pub fn vertices_2d(&self) -> Result<Vec<Vector2<f64>>> {
        if self.dim() != 2 {
            return Err(Error::DimensionMismatch(format!(
                "vertex enumeration needs dimension 2, got {}",
                self.dim()
            )));
        }
        self.validate_nonempty()?;
        for d in [
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![-1.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0]),
            DVector::from_vec(vec![0.0, -1.0]),
        ] {
            self.support(&d)?; // errors if unbounded
        }

        let m = self.num_halfspaces();
        let mut verts: Vec<Vector2<f64>> = Vec::new();
        for i in 0..m {
            for j in (i + 1)..m {
                let (a1, b1) = (self.normals.row(i), self.offsets[i]);
                let (a2, b2) = (self.normals.row(j), self.offsets[j]);
                let det = a1[0] * a2[1] - a1[1] * a2[0];
                if det.abs() < 1e-12 {
                    continue;
                }
                let x = (b1 * a2[1] - b2 * a1[1]) / det;
                let y = (a1[0] * b2 - a2[0] * b1) / det;
                let p = DVector::from_vec(vec![x, y]);
                if self.contains(&p) {
                    let v = Vector2::new(x, y);
                    if !verts
                        .iter()
                        .any(|w| (w - v).abs().max() <= VERTEX_DEDUP)
                    {
                        verts.push(v);
                    }
                }
            }
        }
        if verts.is_empty() {
            return Err(Error::EmptySet(
                "no vertices found for a nonempty bounded polytope".into(),
            ));
        }
        let centroid = verts.iter().sum::<Vector2<f64>>() / verts.len() as f64;
        verts.sort_by(|a, b| {
            let (da, db) = (a - centroid, b - centroid);
            let (ta, tb) = (da.y.atan2(da.x), db.y.atan2(db.x));
            ta.partial_cmp(&tb)
                .unwrap()
                .then(da.norm().partial_cmp(&db.norm()).unwrap())
        });
        Ok(verts)
    }

    /// Minkowski sum of two bounded 2D polytopes via pairwise vertex sums
    /// followed by a convex hull.
    pub fn minkowski_sum_2d(&self, other: &HPolytope) -> Result<HPolytope> {
        let va = self.vertices_2d()?;
        let vb = other.vertices_2d()?;
        let mut sums = Vec::with_capacity(va.len() * vb.len());
        for a in &va {
            for b in &vb {
                sums.push(a + b);
            }
        }
        HPolytope::from_vertices_2d(&sums)
    }

    /// Halfspace description of the convex hull of the given points.
    /// Handles the degenerate point and segment cases so that zero-width
    /// sets (for example a deterministic disturbance) stay representable.
    pub fn from_vertices_2d(points: &[Vector2<f64>]) -> Result<HPolytope> {
        if points.is_empty() {
            return Err(Error::EmptySet("hull of no points".into()));
        }
        let hull = convex_hull_2d(points);
        match hull.len() {
            1 => {
                let p = hull[0];
                HPolytope::axis_box(&[(p.x, p.x), (p.y, p.y)])
            }
            2 => {
                let (a, b) = (hull[0], hull[1]);
                let d = b - a;
                let len = d.norm();
                let t = d / len; // tangent
                let n = Vector2::new(t.y, -t.x); // normal
                let normals = DMatrix::from_row_slice(
                    4,
                    2,
                    &[n.x, n.y, -n.x, -n.y, t.x, t.y, -t.x, -t.y],
                );
                let offsets =
                    DVector::from_vec(vec![n.dot(&a), -n.dot(&a), t.dot(&b), -t.dot(&a)]);
                HPolytope::new(normals, offsets)
            }
            k => {
                let mut normals = DMatrix::zeros(k, 2);
                let mut offsets = DVector::zeros(k);
                for i in 0..k {
                    let a = hull[i];
                    let b = hull[(i + 1) % k];
                    let d = b - a;
                    // outward normal of a CCW edge
                    let n = Vector2::new(d.y, -d.x);
                    normals[(i, 0)] = n.x;
                    normals[(i, 1)] = n.y;
                    offsets[i] = n.dot(&a);
                }
                HPolytope::new(normals, offsets)
            }
        }
    }
}

/// Monotone-chain convex hull, CCW. Pops only on exact non-left turns, so
/// micro-turns from last-ulp coordinate noise never evict a true extreme
/// point; collinear clutter is removed afterwards by perpendicular
/// deviation, which is scale-aware where a raw cross-product threshold is
/// not.
fn convex_hull_2d(points: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut pts: Vec<Vector2<f64>> = Vec::new();
    for p in points {
        if !pts.iter().any(|q| (q - p).abs().max() <= VERTEX_DEDUP) {
            pts.push(*p);
        }
    }
    pts.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap().then(a.y.partial_cmp(&b.y).unwrap()));
    if pts.len() <= 2 {
        return pts;
    }
    let cross = |o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>| {
        (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
    };
    let mut lower: Vec<Vector2<f64>> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0
        {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Vector2<f64>> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0
        {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() < 3 {
        let mut ends = vec![pts[0], *pts.last().unwrap()];
        ends.dedup_by(|a, b| (*a - *b).abs().max() <= VERTEX_DEDUP);
        return ends;
    }

    // Drop vertices within VERTEX_DEDUP of the chord of their neighbors.
    let mut hull = lower;
    loop {
        let k = hull.len();
        if k <= 3 {
            break;
        }
        let mut removed = false;
        let mut i = 0;
        while i < hull.len() && hull.len() > 3 {
            let k = hull.len();
            let prev = hull[(i + k - 1) % k];
            let here = hull[i];
            let next = hull[(i + 1) % k];
            let chord = next - prev;
            let len = chord.norm();
            let deviation = if len > 0.0 {
                ((here.x - prev.x) * chord.y - (here.y - prev.y) * chord.x).abs() / len
            } else {
                0.0
            };
            if deviation <= VERTEX_DEDUP {
                hull.remove(i);
                removed = true;
            } else {
                i += 1;
            }
        }
        if !removed {
            break;
        }
    }
    hull
}
