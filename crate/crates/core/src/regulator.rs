//! Fixed stabilizing feedback: Riccati recursion, LQR gain and a certified
//! contraction power for the closed loop.
//!
//! The contraction certificate is the induced infinity norm of a matrix
//! power, `||Psi^k||_inf < 1`, not a spectral-radius estimate; it feeds a
//! sound geometric tail bound for the invariant-set truncation downstream.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DARE_TOL: f64 = 1e-12;
const DARE_MAX_ITERS: usize = 10_000;
const MAX_CONTRACTION_POWER: usize = 200;

/// Feedback data for `u = K (x - s) + v` with `Psi = A + B K`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Gains {
    /// LQR feedback gain, `n_u x n_x`.
    pub feedback: DMatrix<f64>,
    /// Closed-loop matrix `A + B K`.
    pub closed_loop: DMatrix<f64>,
    /// Riccati fixed point.
    pub riccati: DMatrix<f64>,
    /// Smallest `k` with `||Psi^k||_inf < 1`.
    pub contraction_power: usize,
    /// `||Psi^contraction_power||_inf`, strictly below one.
    pub contraction_factor: f64,
}

/// Induced infinity norm (maximum absolute row sum).
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Fixed point of the discrete Riccati recursion by value iteration,
/// started at `Q`, run until successive iterates differ by less than
/// `1e-12` in max-abs entry.
pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || q.nrows() != n || q.ncols() != n {
        return Err(Error::DimensionMismatch(
            "A must be square and B, Q conformable".into(),
        ));
    }
    let nu = b.ncols();
    if r.nrows() != nu || r.ncols() != nu {
        return Err(Error::DimensionMismatch(format!(
            "R is {}x{} but the input dimension is {}",
            r.nrows(),
            r.ncols(),
            nu
        )));
    }
    let mut p = q.clone();
    let mut residual = f64::INFINITY;
    for _ in 0..DARE_MAX_ITERS {
        let btp = b.transpose() * &p;
        let gain_denominator = r + &btp * b;
        let inv = gain_denominator.try_inverse().ok_or_else(|| {
            Error::NumericalBreakdown("R + B'PB not invertible in the Riccati step".into())
        })?;
        let next = q + a.transpose() * &p * a - a.transpose() * &p * b * inv * &btp * a;
        residual = inf_norm(&(&next - &p));
        p = next;
        if residual < DARE_TOL {
            return Ok(p);
        }
    }
    Err(Error::RiccatiDiverged {
        iterations: DARE_MAX_ITERS,
        residual,
    })
}

/// LQR gain `K = -(R + B'PB)^{-1} B'PA`, the closed loop `Psi = A + BK`,
/// and the smallest power of `Psi` that contracts in the infinity norm.
pub fn lqr_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<Gains> {
    let p = solve_dare(a, b, q, r)?;
    let btp = b.transpose() * &p;
    let inv = (r + &btp * b).try_inverse().ok_or_else(|| {
        Error::NumericalBreakdown("R + B'PB not invertible at the fixed point".into())
    })?;
    let feedback = -(inv * &btp * a);
    let closed_loop = a + b * &feedback;

    let mut power = DMatrix::identity(a.nrows(), a.nrows());
    for k in 1..=MAX_CONTRACTION_POWER {
        power = &power * &closed_loop;
        let norm = inf_norm(&power);
        if norm < 1.0 {
            return Ok(Gains {
                feedback,
                closed_loop,
                riccati: p,
                contraction_power: k,
                contraction_factor: norm,
            });
        }
    }
    Err(Error::NoContraction(MAX_CONTRACTION_POWER))
}
