//! Numerical Fredholm theory for second-kind integral equations on the real line.
//!
//! The equations handled here have the form
//!
//! ```text
//! f(s) + ∫ T_λ(s, t) f(t) dt = g(s),      T_λ(s, t) = H(s, t) − λ S(s, t),
//! ```
//!
//! with the integral over all of ℝ and a kernel that depends linearly on the
//! complex parameter λ. Instead of discretising and inverting, the library
//! works with the classical determinant apparatus: compound (block) kernel
//! determinants, their integrated series coefficients, and the Fredholm minors
//! `D_p` built from them. Everything downstream — locating the spectral index
//! of a given λ, producing null-space bases, and writing down the solution or
//! the solvability obstruction — is expressed through evaluations of those
//! minors, so the numerical story stays close to the analytic one and every
//! reported value carries an explicit truncation estimate.
//!
//! The modules are layered roughly bottom-up:
//!
//! * [`expr`] — tiny arithmetic grammar for user-supplied kernels and data,
//! * [`quadrature`] — rules for integrals over ℝ with decaying integrands,
//! * [`kernels`] — kernel pairs `(H, S)`, a built-in catalog, trace bounds,
//! * [`compounds`] — block determinants and their exact λ-derivatives,
//! * [`series`] — minor series `D_p` with certified truncation control,
//! * [`spectral_index`] — the (d, r) index search and base-point refinement,
//! * [`solver`] — null bases, solvability tests, and resolvent-form solutions,
//! * [`nystrom`] — an independent discretised oracle for cross-checking.

pub mod compounds;
pub mod error;
pub mod expr;
pub mod kernels;
pub mod nystrom;
pub mod quadrature;
pub mod series;
pub mod solver;
pub mod spectral_index;

pub use error::{FredholmError, Result};
pub use kernels::{DecayEnvelope, KernelPair, TraceBounds};
pub use nystrom::{DiscreteSystem, NystromOutcome, VonKochCheck};
pub use quadrature::{QuadratureKind, QuadratureRule};
pub use series::{EvalParams, MinorRequest, MinorValue};
pub use solver::{RightHandSide, SolutionHandle, SolutionReport, SolveOptions};
pub use spectral_index::{IndexReport, IndexSearchConfig};

/// Complex scalar used throughout: kernels, determinants, and solutions are
/// all complex-valued even when the input data is real, because λ is complex.
pub type Complex = num_complex::Complex64;
