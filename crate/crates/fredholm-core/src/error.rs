//! Crate-wide error type.
//!
//! All fallible operations return [`Result`]. Errors that abort an otherwise
//! well-posed computation (a truncation target that cannot be certified, a
//! residual that fails its tolerance) carry the best value obtained so far,
//! so callers can degrade gracefully instead of recomputing.

use num_complex::Complex64;
use thiserror::Error;

use crate::series::MinorValue;

/// Alias used by every fallible function in the crate.
pub type Result<T, E = FredholmError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum FredholmError {
    /// A kernel evaluation produced NaN or ±∞. The point is reported so the
    /// offending kernel expression can be inspected at exactly that argument.
    #[error("kernel value is not finite at (s, t) = ({s:.6e}, {t:.6e})")]
    NonFiniteKernel { s: f64, t: f64 },

    /// A user-supplied function (right-hand side, integrand) produced NaN or
    /// ±∞ at a quadrature node.
    #[error("integrand value is not finite at x = {x:.6e}")]
    NonFiniteIntegrand { x: f64 },

    #[error("unknown catalog kernel '{0}'")]
    UnknownKernel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("failed to parse expression: {0}")]
    Expr(String),

    #[error("unsupported quadrature kind '{0}'")]
    UnsupportedQuadrature(String),

    #[error("quadrature with {requested} nodes is outside the supported range {min}..={max}")]
    NodeCountOutOfRange {
        requested: usize,
        min: usize,
        max: usize,
    },

    #[error("node generation did not converge for n = {0}")]
    NodeGeneration(usize),

    /// Trace-bound estimation found a significantly negative eigenvalue in a
    /// matrix that is positive semi-definite in exact arithmetic; the chosen
    /// rule cannot resolve the kernel.
    #[error(
        "discretised Gram matrix has eigenvalue {value:.3e} below the tolerance {tol:.3e}; \
         increase the node count or the truncation radius"
    )]
    IndefiniteGram { value: f64, tol: f64 },

    #[error("matrix decomposition failed: {0}")]
    Decomposition(String),

    #[error("compound determinant order {requested} exceeds the supported maximum {max}")]
    CompoundTooLarge { requested: usize, max: usize },

    /// The minor series cannot reach the requested truncation target within
    /// the configured tuple budget. `best` is the deepest certified value.
    #[error(
        "truncation target {target:.3e} is unreachable within the tuple budget: \
         certified bound {bound:.3e} after {terms} series terms",
        bound = best.truncation_bound,
        terms = best.terms_used
    )]
    TruncationUnreachable { target: f64, best: Box<MinorValue> },

    /// The a-priori tail bound does not drop below the target within the
    /// supported series depth (the bound grows like c^n before the factorial
    /// takes over, and extreme inputs can push the crossover out of range).
    #[error(
        "series tail bound does not reach {target:.3e} within {max_terms} terms \
         (best bound {achieved:.3e})"
    )]
    TargetOutOfReach {
        target: f64,
        max_terms: usize,
        achieved: f64,
    },

    #[error("series evaluation requires {needed} tuples, over the budget of {budget}")]
    TupleBudget { needed: u128, budget: u64 },

    /// No (d, r) with a minor above the threshold was found; either the grid
    /// misses the kernel's support or `d_max` is too small.
    #[error(
        "index search at λ = {lambda:?} found no nonzero minor with p ≤ {d_max}, r ≤ {r_max} \
         (threshold {tau:.3e})"
    )]
    IndexNotFound {
        lambda: Complex64,
        d_max: usize,
        r_max: usize,
        tau: f64,
    },

    /// A user-supplied zero threshold sits below the numerical error bar of
    /// the minors it is supposed to classify, so "zero" and "noise" would be
    /// indistinguishable.
    #[error(
        "zero threshold {tau:.3e} is below the minor error bar {error_bar:.3e}; \
         raise it to at least {required:.3e}"
    )]
    ThresholdBelowNoise {
        tau: f64,
        error_bar: f64,
        required: f64,
    },

    /// The assembled solution failed its residual check. The offending report
    /// is carried so the caller can still inspect pairings and condition data.
    #[error("solution residual {residual:.3e} exceeds the tolerance {tol:.3e}")]
    ResidualExceeded {
        residual: f64,
        tol: f64,
        report: Box<crate::solver::SolutionReport>,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
