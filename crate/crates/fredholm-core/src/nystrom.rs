//! Finite-dimensional oracle: the equation on quadrature nodes.
//!
//! Collocating the second-kind equation on a rule's nodes turns it into the
//! linear system `(I + K·W)f = g` with `K[i][j] = T_λ(x_i, x_j)` and
//! `W = diag(weights)`. Two things make this worth having next to the series
//! machinery:
//!
//! * the von Koch identity — the node-discretized determinant series at
//!   `p = 0` is a *finite* sum that equals `det(I + K·W)` exactly, so
//!   comparing the two validates compound determinants, tuple enumeration,
//!   and weighting with zero modeling error;
//! * an independent solver (LU, or SVD when the system is near-singular)
//!   to cross-check null dimensions and solutions from the minor formulas.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{FredholmError, Result};
use crate::kernels::KernelPair;
use crate::quadrature::QuadratureRule;
use crate::series::TupleEngine;

/// Largest node count [`von_koch_check`] accepts; the exact expansion sums
/// `2^N` determinants.
pub const VON_KOCH_MAX_NODES: usize = 24;

/// The collocated equation: nodes, kernel samples, and the λ they were
/// taken at.
#[derive(Debug, Clone)]
pub struct DiscreteSystem {
    /// Rule supplying the nodes and weights.
    pub rule: QuadratureRule,
    /// Kernel samples `K[i][j] = T_λ(x_i, x_j)`.
    pub kmat: DMatrix<Complex64>,
    /// Spectral parameter the samples were taken at.
    pub lambda: Complex64,
}

impl DiscreteSystem {
    /// The system matrix `I + K·W`.
    pub fn system_matrix(&self) -> DMatrix<Complex64> {
        let n = self.rule.nodes.len();
        let mut a = DMatrix::identity(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] += self.kmat[(i, j)] * self.rule.weights[j];
            }
        }
        a
    }
}

/// Sample the kernel on the rule's node grid.
pub fn discretize(k: &KernelPair, q: &QuadratureRule, lambda: Complex64) -> Result<DiscreteSystem> {
    let n = q.nodes.len();
    let rows: Vec<Vec<Complex64>> = q
        .nodes
        .par_iter()
        .map(|&x| q.nodes.iter().map(|&y| k.eval_t(lambda, x, y)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let kmat = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    Ok(DiscreteSystem { rule: q.clone(), kmat, lambda })
}

/// Both sides of the discrete determinant identity.
#[derive(Debug, Clone, Copy)]
pub struct VonKochCheck {
    /// The node-discretized determinant series (finite, exact).
    pub lhs: Complex64,
    /// `det(I + K·W)` by pivoted LU.
    pub rhs: Complex64,
    /// `|lhs − rhs| / (1 + |rhs|)`.
    pub gap: f64,
}

/// Evaluate the discretized determinant series against `det(I + K·W)`.
///
/// The identity is exact in exact arithmetic, so any gap beyond rounding
/// points at the series machinery itself, not at quadrature error.
pub fn von_koch_check(sys: &DiscreteSystem) -> Result<VonKochCheck> {
    let n = sys.rule.nodes.len();
    if n > VON_KOCH_MAX_NODES {
        return Err(FredholmError::InvalidParameter(format!(
            "von Koch expansion sums 2^N determinants; N = {n} exceeds the cap of {VON_KOCH_MAX_NODES}"
        )));
    }
    // Feed the sampled kernel through the very tuple engine the series uses:
    // with the samples as the affine table's constant part and λ = 0, each
    // level sums the weighted principal minors of the sample matrix.
    let table: Vec<Complex64> = (0..n * n).map(|idx| sys.kmat[(idx / n, idx % n)]).collect();
    let engine = TupleEngine::from_t_table(table, sys.rule.weights.clone());
    let mut lhs = Complex64::ZERO;
    for level in 0..=n {
        lhs += engine.sum_level(level, &[Complex64::ZERO], 0)[0];
    }
    let rhs = sys.system_matrix().lu().determinant();
    let gap = (lhs - rhs).norm() / (1.0 + rhs.norm());
    Ok(VonKochCheck { lhs, rhs, gap })
}

/// Result of solving the collocated system.
#[derive(Debug, Clone)]
pub enum NystromOutcome {
    /// The system was comfortably regular; `solution` holds `f` on nodes.
    Regular { solution: Vec<Complex64> },
    /// The system is numerically singular. Carries the null-space data and a
    /// least-squares surrogate so callers can still measure compatibility.
    Degenerate {
        /// Number of singular values under the rank threshold.
        null_dim: usize,
        /// Right null vectors (node samples), one per deficient direction.
        null_basis: Vec<Vec<Complex64>>,
        /// Left null vectors; `g` is compatible iff orthogonal to these.
        adjoint_null_basis: Vec<Vec<Complex64>>,
        /// Minimum-norm least-squares solution.
        least_squares: Vec<Complex64>,
        /// `‖A·x − g‖ / max(‖g‖, ε)` of the least-squares solution.
        compatibility_residual: f64,
    },
}

/// Rank-decision threshold: `N · machine-ε · σ_max · 10³`.
fn rank_threshold(n: usize, sigma_max: f64) -> f64 {
    n as f64 * f64::EPSILON * sigma_max * 1e3
}

/// Solve `(I + K·W)f = g` on the nodes.
///
/// A comfortably regular system is solved by pivoted LU. When the smallest
/// singular value falls under the rank threshold the degenerate path reports
/// the null space and a least-squares compatibility check instead; that is a
/// typed outcome, not an error.
pub fn nystrom_solve(sys: &DiscreteSystem, g: &[Complex64]) -> Result<NystromOutcome> {
    let n = sys.rule.nodes.len();
    if g.len() != n {
        return Err(FredholmError::InvalidParameter(format!(
            "right-hand side has {} samples for {n} nodes",
            g.len()
        )));
    }
    let a = sys.system_matrix();
    let rhs = DVector::from_column_slice(g);
    let svd = a.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().copied().fold(0.0f64, f64::max);
    let sigma_min = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    let threshold = rank_threshold(n, sigma_max);
    if sigma_min >= threshold {
        let solution = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| FredholmError::Decomposition("LU solve failed on a system the SVD called regular".into()))?;
        return Ok(NystromOutcome::Regular { solution: solution.iter().copied().collect() });
    }

    let u = svd.u.as_ref().expect("singular vectors requested");
    let v_t = svd.v_t.as_ref().expect("singular vectors requested");
    let mut null_basis = Vec::new();
    let mut adjoint_null_basis = Vec::new();
    for (i, &sigma) in svd.singular_values.iter().enumerate() {
        if sigma < threshold {
            null_basis.push(v_t.row(i).iter().map(|z| z.conj()).collect());
            adjoint_null_basis.push(u.column(i).iter().copied().collect());
        }
    }
    let null_dim = null_basis.len();
    let least_squares = svd
        .solve(&rhs, threshold)
        .map_err(|e| FredholmError::Decomposition(e.to_string()))?;
    let g_norm = rhs.norm().max(f64::EPSILON);
    let compatibility_residual = (&a * &least_squares - &rhs).norm() / g_norm;
    Ok(NystromOutcome::Degenerate {
        null_dim,
        null_basis,
        adjoint_null_basis,
        least_squares: least_squares.iter().copied().collect(),
        compatibility_residual,
    })
}
