//! Error type shared across the crate.

use thiserror::Error;

/// Errors surfaced by constructors and solvers.
///
/// Solver non-convergence is deliberately not an error: solvers return a
/// result carrying a `converged` flag and the best iterate found, so
/// callers can inspect near-misses. Errors are reserved for malformed
/// inputs and for infeasible subproblems that make the requested
/// quantity undefined. The one exception is [`KwError::NonConvergence`],
/// raised by analyzers whose output is meaningless without a converged
/// equilibrium underneath.
#[derive(Debug, Error)]
pub enum KwError {
    /// Dimension of a plan, price, or prior does not match the state space.
    #[error("dimension mismatch: expected {expected} states, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The state space must contain at least one state.
    #[error("state space must be non-empty")]
    EmptyStateSpace,

    /// A prior set needs at least one vertex.
    #[error("prior set must contain at least one probability vector")]
    EmptyPriorSet,

    /// Probability vector with a negative entry or mass not summing to one.
    #[error("invalid probability vector at index {index}: {reason}")]
    InvalidProbability { index: usize, reason: String },

    /// Negative entry where a nonnegative quantity is required.
    #[error("{what} must be nonnegative, found {value} at state {state}")]
    NegativeEntry {
        what: &'static str,
        value: f64,
        state: usize,
    },

    /// Parameter outside its admissible range.
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// Economy-level inconsistency (agent counts, endowment dimensions).
    #[error("invalid economy: {0}")]
    InvalidEconomy(String),

    /// The feasible set of an optimization subproblem is empty.
    #[error("infeasible subproblem: {0}")]
    Infeasible(String),

    /// The objective of an LP subproblem is unbounded above.
    #[error("unbounded subproblem: {0}")]
    Unbounded(String),

    /// A prerequisite solve stalled above its tolerance.
    #[error("solver stalled at residual {residual:e}, tolerance {tol:e}")]
    NonConvergence { residual: f64, tol: f64 },
}
