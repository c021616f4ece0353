//! Error type shared by every module of the crate.

use crate::mesh::Field;

/// Errors raised by grid construction, assembly, solvers and experiments.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("degenerate bounds: upper ({upper}) must exceed lower ({lower})")]
    DegenerateBounds { lower: f64, upper: f64 },

    #[error("grid needs at least {min} nodes per axis, got {got}")]
    TooFewNodes { min: usize, got: usize },

    #[error("axis lengths must match on a uniform grid: {len_x} vs {len_y}")]
    UnequalAxes { len_x: f64, len_y: f64 },

    #[error("ball of radius {r} at {x0:?} is not contained in the box (margin h = {margin})")]
    BallNotContained { x0: [f64; 2], r: f64, margin: f64 },

    #[error("ball of radius {r} at {x0:?} contains no grid node")]
    EmptyBall { x0: [f64; 2], r: f64 },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("field has {got} values but the grid has {expected} nodes")]
    FieldLength { expected: usize, got: usize },

    #[error("field contains a non-finite value at node {node}")]
    NonFiniteField { node: usize },

    #[error("fractional order s = {s} must lie in (0, 1)")]
    InvalidOrder { s: f64 },

    #[error("region of restriction is empty")]
    EmptyRegion,

    #[error("eigensolve did not converge after {iterations} iterations (residual {residual:.3e})")]
    EigenNonConvergence { iterations: usize, residual: f64 },

    #[error("matrix is not positive definite (factorization failed)")]
    NotPositiveDefinite,

    #[error("bracket expansion exceeded the safety cap {cap} while the excess stayed <= 0")]
    BracketCap { cap: f64 },

    #[error("energy descent stagnated at residual {residual:.3e} (tolerance {tolerance:.3e})")]
    DescentStagnation {
        residual: f64,
        tolerance: f64,
        /// Last iterate, so callers can inspect or reuse it.
        iterate: Field,
    },

    #[error("Newton Jacobian is singular at residual {residual:.3e}")]
    SingularJacobian { residual: f64 },

    #[error("time step {dt} violates the reaction-Lipschitz bound; admissible dt <= {admissible}")]
    DtTooLarge { dt: f64, admissible: f64 },

    #[error("solution blew past the guard {guard} at t = {t} (sup = {sup})")]
    BlowUp { t: f64, sup: f64, guard: f64 },

    #[error("initial data are not ordered: v0 < w0 at node {node}")]
    NotOrdered { node: usize },

    #[error("base scenario has no resource gap (c0 = {c0} <= 0); re-scan the domain")]
    NoGap { c0: f64 },

    #[error("no tau in the sweep list produced a nontrivial steady state (all below the branching threshold)")]
    SweepAllTrivial,

    #[error("no candidate ball fits inside the domain")]
    NoCandidateBall,

    #[error("least-squares system is singular even with ridge rho = {rho:.3e}")]
    SingularLeastSquares { rho: f64 },

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
