//! Shared error type for the control stack.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or vector shapes do not conform.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A halfspace normal has (numerically) zero length.
    #[error("zero normal row at index {0}")]
    ZeroNormal(usize),

    /// An operation required a nonempty set but got an empty one.
    #[error("empty set: {0}")]
    EmptySet(String),

    /// A linear program or support evaluation is unbounded.
    #[error("unbounded: {0}")]
    Unbounded(String),

    /// The simplex iteration limit was exceeded (cycling guard).
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    /// Riccati value iteration failed to converge.
    #[error("riccati recursion did not converge within {iterations} iterations (residual {residual:.3e})")]
    RiccatiDiverged { iterations: usize, residual: f64 },

    /// No matrix power of the closed loop contracts in the infinity norm.
    #[error("feedback gain fails to stabilize: no power k <= {0} has ||Psi^k||_inf < 1")]
    NoContraction(usize),

    /// The parameter-set intersection became empty; the data contradicts the
    /// assumed noise bound or initial offset domain.
    #[error("feasible parameter set became empty: {0}")]
    EmptyParameterSet(String),

    /// A trajectory did not end close enough to the origin to be stored.
    #[error("trajectory not converged: terminal state norm {norm:.3e} exceeds {threshold:.3e}")]
    NotConverged { norm: f64, threshold: f64 },

    /// Paired lists have different lengths.
    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    /// The synthesis LP for the seed trajectory has no solution.
    #[error("initial trajectory infeasible: {0}; raise the trajectory horizon or move the start state inward")]
    InitialTrajectoryInfeasible(String),

    /// The receding-horizon problem became infeasible mid-run.
    #[error("MPC infeasible at iteration {iteration}, step {time}: {details}")]
    MpcInfeasible {
        iteration: usize,
        time: usize,
        details: String,
    },

    /// Disturbance sampling needs an axis-aligned box.
    #[error("disturbance set is not an axis-aligned box: {0}")]
    NonBoxDisturbance(String),

    /// An experiment configuration field failed validation.
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
