//! Adaptive learning tube MPC for uncertain constrained linear systems
//! performing iterative tasks.
//!
//! The stack is layered bottom-up:
//! - [`lp`]: dense two-phase simplex, the single optimization backend;
//! - [`polytope`]: halfspace-polytope kernel (supports, intersection,
//!   redundancy removal, 2D vertex enumeration, Minkowski sums);
//! - [`regulator`]: Riccati recursion, LQR gain and closed-loop contraction
//!   certificate;
//! - [`uncertainty`]: set-membership offset estimation, lumped disturbance
//!   supports and certified constraint-tightening vectors;
//! - [`safe_set`]: stored converged trajectories with barycentric
//!   cost-to-go queries;
//! - [`controller`]: the finite-horizon robust problem as one LP, the
//!   applied control law and the seed-trajectory synthesizer;
//! - [`simulator`]: seeded closed-loop experiments, adaptation on or off,
//!   paired baseline comparisons and structured logs.

pub mod controller;
pub mod error;
pub mod lp;
pub mod polytope;
pub mod regulator;
pub mod safe_set;
pub mod simulator;
pub mod uncertainty;

pub use error::{Error, Result};
pub use lp::{solve_lp, Bounds, LinearProgram, LpResult, LpStatus, TOL_FEAS};
pub use polytope::HPolytope;
pub use regulator::{lqr_gain, solve_dare, Gains};
