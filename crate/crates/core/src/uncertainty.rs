//! Offset-domain estimation and constraint tightening.
//!
//! The feasible parameter set is the polytope of constant offsets consistent
//! with every recorded transition and the disturbance bound; it only ever
//! shrinks. The lumped disturbance is the Minkowski sum of the process-noise
//! set and the image of the offset domain, and the tightening vector bounds
//! the worst-case constraint contribution of the error state over all time.
//!
//! The infinite Minkowski sum behind the invariant set is never formed.
//! Supports add over Minkowski sums, so the tightening consumes only support
//! values of the lumped set along transposed closed-loop powers, truncated
//! with a certified geometric tail from the contraction certificate.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::polytope::HPolytope;
use crate::regulator::{inf_norm, Gains};

/// Absolute ceiling for the certified truncation tail. Stricter than any
/// constraint scale this crate meets, so the truncation error never shows
/// up at feasibility tolerances.
pub const TAIL_TOL: f64 = 1e-9;

/// Offset domain after `iteration` updates; keeps its predecessor so nesting
/// can be audited.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeasibleParameterSet {
    pub theta: HPolytope,
    pub iteration: usize,
    pub parent: Option<Box<FeasibleParameterSet>>,
}

impl FeasibleParameterSet {
    /// Wraps the initial offset domain; it must be nonempty.
    pub fn initial(theta0: HPolytope) -> Result<Self> {
        theta0.validate_nonempty()?;
        Ok(FeasibleParameterSet {
            theta: theta0,
            iteration: 0,
            parent: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.theta.dim()
    }
}

/// One realized closed-loop transition `x_next = A x_prev + B u_prev + ...`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub x_prev: DVector<f64>,
    pub u_prev: DVector<f64>,
    pub x_next: DVector<f64>,
    pub iteration: usize,
    pub time: usize,
}

/// Certified per-row upper bound on the error-state constraint contribution.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TighteningVector {
    pub h_s: DVector<f64>,
    pub truncation_k: usize,
    pub tail_bound: DVector<f64>,
    pub iteration: usize,
}

/// Intersects the current offset domain with the halfspaces implied by the
/// recorded transitions: for each disturbance-set row `(n_w, c_w)` and each
/// record with residual `r = x_next - A x_prev - B u_prev`, the offset must
/// satisfy `(-n_w' E) theta <= c_w - n_w' r`. The result is reduced to a
/// minimal description and the iteration count advances.
pub fn fps_update(
    prev: &FeasibleParameterSet,
    records: &[TransitionRecord],
    noise_set: &HPolytope,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    e: &DMatrix<f64>,
) -> Result<FeasibleParameterSet> {
    let n_x = a.nrows();
    let p = prev.dim();
    if e.nrows() != n_x || e.ncols() != p || noise_set.dim() != n_x {
        return Err(Error::DimensionMismatch(
            "offset map or noise set does not match the state dimension".into(),
        ));
    }

    let mut cut_normals: Vec<f64> = Vec::new();
    let mut cut_offsets: Vec<f64> = Vec::new();
    let mut n_cuts = 0usize;
    for rec in records {
        let residual = &rec.x_next - a * &rec.x_prev - b * &rec.u_prev;
        for i in 0..noise_set.num_halfspaces() {
            let n_w = noise_set.normals().row(i);
            let rhs = noise_set.offsets()[i] - (n_w * &residual)[0];
            let row = -(n_w * e);
            if row.norm() < 1e-12 {
                // The cut does not constrain theta; it must already hold.
                if rhs < -crate::lp::TOL_FEAS {
                    return Err(Error::EmptyParameterSet(format!(
                        "record at iteration {}, time {} violates the noise bound outright",
                        rec.iteration, rec.time
                    )));
                }
                continue;
            }
            cut_normals.extend(row.iter());
            cut_offsets.push(rhs);
            n_cuts += 1;
        }
    }

    let intersected = if n_cuts == 0 {
        prev.theta.clone()
    } else {
        let cuts = HPolytope::new(
            DMatrix::from_row_slice(n_cuts, p, &cut_normals),
            DVector::from_vec(cut_offsets),
        )?;
        prev.theta.intersect(&cuts)?
    };
    let reduced = intersected.reduce().map_err(|err| match err {
        Error::EmptySet(_) => Error::EmptyParameterSet(
            "the recorded data is inconsistent with the noise bound and offset domain".into(),
        ),
        other => other,
    })?;
    Ok(FeasibleParameterSet {
        theta: reduced,
        iteration: prev.iteration + 1,
        parent: Some(Box::new(prev.clone())),
    })
}

/// Support of the lumped disturbance set `W (+) E Theta` in direction `d`,
/// evaluated without forming the sum.
pub fn disturbance_support(
    noise_set: &HPolytope,
    fps: &FeasibleParameterSet,
    e: &DMatrix<f64>,
    d: &DVector<f64>,
) -> Result<f64> {
    let et_d = e.transpose() * d;
    Ok(noise_set.support(d)? + fps.theta.support(&et_d)?)
}

/// Support oracle over a fixed polytope: vertex scan in 2D, LP otherwise.
/// The tightening loops evaluate thousands of directions against the same
/// set, so the 2D fast path matters.
enum SupportOracle<'a> {
    Vertices(Vec<DVector<f64>>),
    Lp(&'a HPolytope),
}

impl<'a> SupportOracle<'a> {
    fn new(p: &'a HPolytope) -> Result<Self> {
        if p.dim() == 2 {
            let verts = p
                .vertices_2d()?
                .into_iter()
                .map(|v| DVector::from_vec(vec![v.x, v.y]))
                .collect();
            Ok(SupportOracle::Vertices(verts))
        } else {
            Ok(SupportOracle::Lp(p))
        }
    }

    fn support(&self, d: &DVector<f64>) -> Result<f64> {
        match self {
            SupportOracle::Vertices(vs) => Ok(vs
                .iter()
                .map(|v| v.dot(d))
                .fold(f64::NEG_INFINITY, f64::max)),
            SupportOracle::Lp(p) => p.support(d),
        }
    }
}

struct LumpedSupport<'a> {
    noise: SupportOracle<'a>,
    theta: SupportOracle<'a>,
    e_t: DMatrix<f64>,
}

impl<'a> LumpedSupport<'a> {
    fn new(
        noise_set: &'a HPolytope,
        fps: &'a FeasibleParameterSet,
        e: &DMatrix<f64>,
    ) -> Result<Self> {
        Ok(LumpedSupport {
            noise: SupportOracle::new(noise_set)?,
            theta: SupportOracle::new(&fps.theta)?,
            e_t: e.transpose(),
        })
    }

    fn support(&self, d: &DVector<f64>) -> Result<f64> {
        Ok(self.noise.support(d)? + self.theta.support(&(&self.e_t * d))?)
    }

    /// Radius of the smallest origin-centered box containing the lumped set.
    fn box_radius(&self, n_x: usize) -> Result<f64> {
        let mut radius = 0.0f64;
        for j in 0..n_x {
            let mut d = DVector::zeros(n_x);
            d[j] = 1.0;
            radius = radius.max(self.support(&d)?);
            d[j] = -1.0;
            radius = radius.max(self.support(&d)?);
        }
        Ok(radius)
    }
}

/// Geometric data for the certified tail: with `gamma = ||Psi^cp||_inf < 1`
/// and `C = sum_{s<cp} ||Psi^s||_inf`, the tail of the support series past
/// `k` is at most `rho_D * ||(Psi^k)' phi||_1 * C / (1 - gamma)`.
struct TailCertificate {
    series_bound: f64, // C / (1 - gamma)
    block: usize,      // contraction power
}

impl TailCertificate {
    fn new(gains: &Gains) -> Result<Self> {
        if gains.contraction_factor >= 1.0 {
            return Err(Error::NoContraction(gains.contraction_power));
        }
        let n = gains.closed_loop.nrows();
        let mut c = 0.0;
        let mut power = DMatrix::identity(n, n);
        for _ in 0..gains.contraction_power {
            c += inf_norm(&power);
            power = &power * &gains.closed_loop;
        }
        Ok(TailCertificate {
            series_bound: c / (1.0 - gains.contraction_factor),
            block: gains.contraction_power,
        })
    }

    fn tail(&self, rho: f64, w_k: &DVector<f64>) -> f64 {
        rho * w_k.iter().map(|v| v.abs()).sum::<f64>() * self.series_bound
    }
}

/// Sums `max(0, supp(D, (Psi^i)' phi_r))` for `i < k` plus the certified
/// tail, per constraint row. The per-term clamp makes the bound valid for
/// every finite time, not only the limit set, which matters once adaptation
/// moves the lumped set off the origin. `k` is the smallest multiple of the
/// contraction power whose tail certificate falls below [`TAIL_TOL`].
pub fn tightening_vector(
    phi: &DMatrix<f64>,
    gains: &Gains,
    noise_set: &HPolytope,
    fps: &FeasibleParameterSet,
    e: &DMatrix<f64>,
) -> Result<TighteningVector> {
    tightening_impl(phi, gains, noise_set, fps, e, None)
}

/// Same as [`tightening_vector`] but with a caller-pinned truncation depth,
/// so tightenings from different offset domains stay comparable term by
/// term. The certified tail is still added.
pub fn tightening_vector_with_truncation(
    phi: &DMatrix<f64>,
    gains: &Gains,
    noise_set: &HPolytope,
    fps: &FeasibleParameterSet,
    e: &DMatrix<f64>,
    truncation_k: usize,
) -> Result<TighteningVector> {
    tightening_impl(phi, gains, noise_set, fps, e, Some(truncation_k))
}

fn tightening_impl(
    phi: &DMatrix<f64>,
    gains: &Gains,
    noise_set: &HPolytope,
    fps: &FeasibleParameterSet,
    e: &DMatrix<f64>,
    fixed_k: Option<usize>,
) -> Result<TighteningVector> {
    let n_x = gains.closed_loop.nrows();
    if phi.ncols() != n_x {
        return Err(Error::DimensionMismatch(format!(
            "Phi has {} columns for state dimension {}",
            phi.ncols(),
            n_x
        )));
    }
    let cert = TailCertificate::new(gains)?;
    let lumped = LumpedSupport::new(noise_set, fps, e)?;
    let rho = lumped.box_radius(n_x)?;
    let psi_t = gains.closed_loop.transpose();
    let n_f = phi.nrows();

    let mut sums = vec![0.0f64; n_f];
    let mut dirs: Vec<DVector<f64>> = (0..n_f).map(|r| phi.row(r).transpose()).collect();
    let mut k = 0usize;
    'outer: loop {
        for _ in 0..cert.block {
            for r in 0..n_f {
                let term = lumped.support(&dirs[r])?;
                sums[r] += term.max(0.0);
                dirs[r] = &psi_t * &dirs[r];
            }
            k += 1;
            if let Some(target) = fixed_k {
                if k >= target {
                    break 'outer;
                }
            }
        }
        if fixed_k.is_none() {
            let worst = dirs
                .iter()
                .map(|d| cert.tail(rho, d))
                .fold(0.0f64, f64::max);
            if worst < TAIL_TOL || k > 1_000_000 {
                break;
            }
        }
    }

    let tail_bound = DVector::from_iterator(n_f, dirs.iter().map(|d| cert.tail(rho, d)));
    let h_s = DVector::from_iterator(n_f, (0..n_f).map(|r| sums[r] + tail_bound[r]));
    Ok(TighteningVector {
        h_s,
        truncation_k: k,
        tail_bound,
        iteration: fps.iteration,
    })
}

/// Outer approximation of the error invariant set as an intersection of
/// supporting halfspaces along equally spaced directions. Unlike the
/// tightening vector, the terms are not clamped: this approximates the limit
/// set itself, for plots and nesting checks.
pub fn mrpi_outer_2d(
    gains: &Gains,
    noise_set: &HPolytope,
    fps: &FeasibleParameterSet,
    e: &DMatrix<f64>,
    n_directions: usize,
) -> Result<HPolytope> {
    mrpi_outer_impl(gains, noise_set, fps, e, n_directions, None)
}

/// [`mrpi_outer_2d`] with a pinned truncation depth for comparable nesting.
pub fn mrpi_outer_2d_with_truncation(
    gains: &Gains,
    noise_set: &HPolytope,
    fps: &FeasibleParameterSet,
    e: &DMatrix<f64>,
    n_directions: usize,
    truncation_k: usize,
) -> Result<HPolytope> {
    mrpi_outer_impl(gains, noise_set, fps, e, n_directions, Some(truncation_k))
}

fn mrpi_outer_impl(
    gains: &Gains,
    noise_set: &HPolytope,
    fps: &FeasibleParameterSet,
    e: &DMatrix<f64>,
    n_directions: usize,
    fixed_k: Option<usize>,
) -> Result<HPolytope> {
    let n_x = gains.closed_loop.nrows();
    if n_x != 2 {
        return Err(Error::DimensionMismatch(format!(
            "outer approximation is 2D only, state dimension is {}",
            n_x
        )));
    }
    if n_directions < 3 {
        return Err(Error::DimensionMismatch(
            "need at least three directions".into(),
        ));
    }
    let cert = TailCertificate::new(gains)?;
    let lumped = LumpedSupport::new(noise_set, fps, e)?;
    let rho = lumped.box_radius(n_x)?;
    let psi_t = gains.closed_loop.transpose();

    let mut normals = DMatrix::zeros(n_directions, 2);
    let mut offsets = DVector::zeros(n_directions);
    for q in 0..n_directions {
        let angle = 2.0 * std::f64::consts::PI * (q as f64) / (n_directions as f64);
        let d0 = DVector::from_vec(vec![angle.cos(), angle.sin()]);
        let mut d = d0.clone();
        let mut sum = 0.0;
        let mut k = 0usize;
        'outer: loop {
            for _ in 0..cert.block {
                sum += lumped.support(&d)?;
                d = &psi_t * &d;
                k += 1;
                if let Some(target) = fixed_k {
                    if k >= target {
                        break 'outer;
                    }
                }
            }
            if fixed_k.is_none() && (cert.tail(rho, &d) < TAIL_TOL || k > 1_000_000) {
                break;
            }
        }
        sum += cert.tail(rho, &d);
        normals[(q, 0)] = d0[0];
        normals[(q, 1)] = d0[1];
        offsets[q] = sum;
    }
    HPolytope::new(normals, offsets)
}
