//! Null bases, solvability test, and the explicit general solution.
//!
//! Once [`crate::spectral_index`] has produced an [`IndexReport`] — the null
//! dimension `d`, base points, and a nonvanishing pivot minor `δ` — the
//! second-kind equation
//!
//! ```text
//! f(s) + ∫ T_λ₀(s, t) f(t) dt = g(s)
//! ```
//!
//! is solved in closed form: the homogeneous null space is spanned by minors
//! with one base point freed, solvability is `d` orthogonality conditions
//! against the adjoint null functions, and the particular solution is a
//! resolvent-like integral built from the next minor up, `D_{d+1}/δ`.
//!
//! All function-valued results are lazy evaluator handles; the resolvent
//! minor is memoized per `(s, node)` pair since residual checks and output
//! sampling revisit the same quadrature nodes for many `s`.

use std::fmt;
use std::sync::Arc;

use dashmap::DashMap;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{FredholmError, Result};
use crate::expr::Expr;
use crate::kernels::{KernelPair, TraceBounds};
use crate::quadrature::QuadratureRule;
use crate::series::{minor_dp, EvalParams, MinorRequest};
use crate::spectral_index::IndexReport;

/// Right-hand side `g` with a quadrature estimate of its `L²` norm.
#[derive(Clone)]
pub struct RightHandSide {
    eval_g: Arc<dyn Fn(f64) -> Complex64 + Send + Sync>,
    /// `‖g‖` under the rule the side was constructed with.
    pub norm_estimate: f64,
}

impl fmt::Debug for RightHandSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RightHandSide").field("norm_estimate", &self.norm_estimate).finish()
    }
}

impl RightHandSide {
    /// Wrap a closure, estimating `‖g‖` on the rule's nodes. Fails if the
    /// closure returns a non-finite value at any node.
    pub fn from_fn(
        g: impl Fn(f64) -> Complex64 + Send + Sync + 'static,
        q: &QuadratureRule,
    ) -> Result<Self> {
        let mut norm_sq = 0.0;
        for (&x, &w) in q.nodes.iter().zip(&q.weights) {
            let v = g(x);
            if !v.is_finite() {
                return Err(FredholmError::NonFiniteIntegrand { x });
            }
            norm_sq += w * v.norm_sqr();
        }
        Ok(Self { eval_g: Arc::new(g), norm_estimate: norm_sq.sqrt() })
    }

    /// Parse an expression in the variable `s` (the dummy `t` is rejected).
    pub fn from_expr(text: &str, q: &QuadratureRule) -> Result<Self> {
        let expr = Expr::parse(text)?;
        if expr.uses_t() {
            return Err(FredholmError::Expr(
                "right-hand side must be a function of s alone".into(),
            ));
        }
        Self::from_fn(move |s| Complex64::new(expr.eval(s, 0.0), 0.0), q)
    }

    /// Evaluate `g(s)`.
    pub fn eval(&self, s: f64) -> Complex64 {
        (self.eval_g)(s)
    }
}

/// A lazily evaluated null-basis function, normalized to unit `L²` norm
/// under the quadrature rule it was built with.
#[derive(Clone)]
pub struct BasisFunction {
    raw: Arc<dyn Fn(f64) -> Result<Complex64> + Send + Sync>,
    /// Quadrature `L²` norm of the raw minor before normalization.
    pub raw_norm: f64,
}

impl fmt::Debug for BasisFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BasisFunction").field("raw_norm", &self.raw_norm).finish()
    }
}

impl BasisFunction {
    /// Evaluate the normalized basis function.
    pub fn eval(&self, x: f64) -> Result<Complex64> {
        Ok((self.raw)(x)? / self.raw_norm)
    }
}

/// Lazily evaluated particular solution.
#[derive(Clone)]
pub struct SolutionHandle {
    eval_f: Arc<dyn Fn(f64) -> Result<Complex64> + Send + Sync>,
}

impl fmt::Debug for SolutionHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SolutionHandle")
    }
}

impl SolutionHandle {
    /// Evaluate the particular solution at one point.
    pub fn eval(&self, s: f64) -> Result<Complex64> {
        (self.eval_f)(s)
    }

    /// Evaluate on a grid, in parallel.
    pub fn sample(&self, grid: &[f64]) -> Result<Vec<Complex64>> {
        grid.par_iter().map(|&s| self.eval(s)).collect()
    }
}

/// Everything [`solve`] establishes about the equation at `λ₀`.
#[derive(Debug, Clone)]
pub struct SolutionReport {
    /// The index data the solution was built on.
    pub index: IndexReport,
    /// Pairings `⟨g, ψ_l⟩` against the normalized adjoint basis.
    pub adjoint_pairings: Vec<Complex64>,
    /// Whether all pairings vanish within tolerance.
    pub solvable: bool,
    /// Particular solution; present exactly when `solvable`.
    pub particular: Option<SolutionHandle>,
    /// Normalized basis of the homogeneous null space (length `d`).
    pub homogeneous_basis: Vec<BasisFunction>,
    /// Sup norm of the equation residual over the quadrature nodes.
    pub residual_sup: f64,
    /// Weighted `L²` norm of the equation residual over the nodes.
    pub residual_l2: f64,
    /// Pivot size `|δ|` relative to the largest minor magnitude seen while
    /// building the bases; values near zero flag a fragile pivot.
    pub condition: f64,
}

/// Tolerances and cost settings for [`solve`].
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Pairings up to this multiple of `‖g‖` count as zero.
    pub solvability_rel: f64,
    /// Residual allowance as a multiple of `‖g‖ + ‖f‖`.
    pub residual_rel: f64,
    /// Accuracy and cost targets for the underlying series evaluations.
    pub eval: EvalParams,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { solvability_rel: 1e-6, residual_rel: 1e-6, eval: EvalParams::default() }
    }
}

/// Evaluator for the order-`d` minor with one coordinate freed.
fn minor_with_free_slot(
    k: &KernelPair,
    q: &QuadratureRule,
    b: &TraceBounds,
    idx: &IndexReport,
    slot: usize,
    free_is_s: bool,
    eval: EvalParams,
) -> impl Fn(f64) -> Result<Complex64> + Send + Sync {
    let k = k.clone();
    let q = q.clone();
    let b = b.clone();
    let base_s = idx.base_s.clone();
    let base_t = idx.base_t.clone();
    let lambda0 = idx.lambda0;
    let r = idx.r;
    let d = idx.d;
    move |x: f64| {
        let mut s_points = base_s.clone();
        let mut t_points = base_t.clone();
        if free_is_s {
            s_points[slot] = x;
        } else {
            t_points[slot] = x;
        }
        let req = MinorRequest {
            p: d,
            s_points,
            t_points,
            lambda: lambda0,
            derivative_order: r,
            target_eps: eval.target_eps,
        };
        Ok(minor_dp(&k, &q, &req, &b, eval.max_tuples)?.value)
    }
}

/// Quadrature `L²` norm and sup of a fallible function on the rule's nodes.
fn node_norms(
    f: &(impl Fn(f64) -> Result<Complex64> + Sync),
    q: &QuadratureRule,
) -> Result<(f64, f64)> {
    let values: Vec<Complex64> = q.nodes.par_iter().map(|&x| f(x)).collect::<Result<_>>()?;
    let mut norm_sq = 0.0;
    let mut sup = 0.0f64;
    for (v, &w) in values.iter().zip(&q.weights) {
        norm_sq += w * v.norm_sqr();
        sup = sup.max(v.norm());
    }
    Ok((norm_sq.sqrt(), sup))
}

fn build_basis(
    k: &KernelPair,
    q: &QuadratureRule,
    b: &TraceBounds,
    idx: &IndexReport,
    free_is_s: bool,
    conjugate: bool,
    eval: EvalParams,
) -> Result<(Vec<BasisFunction>, f64)> {
    let mut basis = Vec::with_capacity(idx.d);
    let mut max_magnitude = 0.0f64;
    for slot in 0..idx.d {
        let raw_minor = minor_with_free_slot(k, q, b, idx, slot, free_is_s, eval);
        let raw: Arc<dyn Fn(f64) -> Result<Complex64> + Send + Sync> = if conjugate {
            Arc::new(move |x| Ok(raw_minor(x)?.conj()))
        } else {
            Arc::new(raw_minor)
        };
        let (norm, sup) = node_norms(&|x| raw(x), q)?;
        if !(norm > 0.0) {
            return Err(FredholmError::InvalidParameter(format!(
                "null-basis function {slot} has zero quadrature norm; \
                 the base points do not resolve the null space on this rule"
            )));
        }
        max_magnitude = max_magnitude.max(sup);
        basis.push(BasisFunction { raw, raw_norm: norm });
    }
    Ok((basis, max_magnitude))
}

/// Basis `φ_i` of the homogeneous equation `f + ∫T_λ₀(·,t)f(t)dt = 0`:
/// the order-`d` minor with the free variable in the `i`-th first-argument
/// slot, normalized. Empty when `d = 0`.
pub fn homogeneous_basis(
    k: &KernelPair,
    q: &QuadratureRule,
    b: &TraceBounds,
    idx: &IndexReport,
    eval: &EvalParams,
) -> Result<Vec<BasisFunction>> {
    Ok(build_basis(k, q, b, idx, true, false, *eval)?.0)
}

/// Basis `ψ_l` of the adjoint equation `f(t) + ∫conj(T_λ₀(s,t))f(s)ds = 0`:
/// the conjugated order-`d` minor with the free variable in the `l`-th
/// second-argument slot, normalized. Empty when `d = 0`.
pub fn adjoint_basis(
    k: &KernelPair,
    q: &QuadratureRule,
    b: &TraceBounds,
    idx: &IndexReport,
    eval: &EvalParams,
) -> Result<Vec<BasisFunction>> {
    Ok(build_basis(k, q, b, idx, false, true, *eval)?.0)
}

/// Solve `f + ∫T_λ₀(·,t)f(t)dt = g` at the index report's `λ₀`.
///
/// Pairings `⟨g, ψ_l⟩` decide solvability (Fredholm alternative). When they
/// vanish within tolerance, the particular solution
/// `f(s) = g(s) − ∫ D_{d+1}(s,·)/δ · g(t) dt` is assembled and its equation
/// residual is measured on the quadrature nodes; a residual above tolerance
/// is an error that still carries the full report for inspection.
pub fn solve(
    k: &KernelPair,
    q: &QuadratureRule,
    b: &TraceBounds,
    idx: &IndexReport,
    g: &RightHandSide,
    opts: &SolveOptions,
) -> Result<SolutionReport> {
    let (homogeneous, max_phi) = build_basis(k, q, b, idx, true, false, opts.eval)?;
    let (adjoint, max_psi) = build_basis(k, q, b, idx, false, true, opts.eval)?;
    let condition = {
        let scale = max_phi.max(max_psi).max(idx.delta.norm());
        idx.delta.norm() / scale
    };

    // ⟨g, ψ_l⟩ with the Hermitian quadrature inner product.
    let mut pairings = Vec::with_capacity(idx.d);
    for psi in &adjoint {
        let psi_nodes: Vec<Complex64> =
            q.nodes.par_iter().map(|&x| psi.eval(x)).collect::<Result<_>>()?;
        let mut acc = Complex64::ZERO;
        for ((&x, &w), psi_v) in q.nodes.iter().zip(&q.weights).zip(&psi_nodes) {
            acc += w * g.eval(x) * psi_v.conj();
        }
        pairings.push(acc);
    }
    let pair_tol = opts.solvability_rel * g.norm_estimate;
    let solvable = pairings.iter().all(|p| p.norm() <= pair_tol);

    if !solvable {
        return Ok(SolutionReport {
            index: idx.clone(),
            adjoint_pairings: pairings,
            solvable: false,
            particular: None,
            homogeneous_basis: homogeneous,
            residual_sup: 0.0,
            residual_l2: 0.0,
            condition,
        });
    }

    let particular = particular_handle(k, q, b, idx, g, opts.eval);

    // Equation residual on the nodes: f + T f − g.
    let f_nodes: Vec<Complex64> =
        q.nodes.par_iter().map(|&x| particular.eval(x)).collect::<Result<_>>()?;
    let mut t_matrix = vec![Complex64::ZERO; q.nodes.len() * q.nodes.len()];
    for (i, &x) in q.nodes.iter().enumerate() {
        for (j, &y) in q.nodes.iter().enumerate() {
            t_matrix[i * q.nodes.len() + j] = k.eval_t(idx.lambda0, x, y)?;
        }
    }
    let mut residual_sup = 0.0f64;
    let mut residual_sq = 0.0f64;
    let mut f_norm_sq = 0.0f64;
    for (i, &x) in q.nodes.iter().enumerate() {
        let mut integral = Complex64::ZERO;
        for (j, &w) in q.weights.iter().enumerate() {
            integral += w * t_matrix[i * q.nodes.len() + j] * f_nodes[j];
        }
        let r = f_nodes[i] + integral - g.eval(x);
        residual_sup = residual_sup.max(r.norm());
        residual_sq += q.weights[i] * r.norm_sqr();
        f_norm_sq += q.weights[i] * f_nodes[i].norm_sqr();
    }
    let residual_l2 = residual_sq.sqrt();

    let report = SolutionReport {
        index: idx.clone(),
        adjoint_pairings: pairings,
        solvable: true,
        particular: Some(particular),
        homogeneous_basis: homogeneous,
        residual_sup,
        residual_l2,
        condition,
    };
    let tol = opts.residual_rel * (g.norm_estimate + f_norm_sq.sqrt());
    if residual_l2 > tol {
        return Err(FredholmError::ResidualExceeded {
            residual: residual_l2,
            tol,
            report: Box::new(report),
        });
    }
    Ok(report)
}

/// Build the lazy particular-solution evaluator
/// `f(s) = g(s) − Σ_j w_j · D_{d+1}(s, s′…; x_j, t′…)/δ · g(x_j)`,
/// memoizing the resolvent minor per `(s, node)` pair.
fn particular_handle(
    k: &KernelPair,
    q: &QuadratureRule,
    b: &TraceBounds,
    idx: &IndexReport,
    g: &RightHandSide,
    eval: EvalParams,
) -> SolutionHandle {
    let k = k.clone();
    let q_owned = q.clone();
    let b = b.clone();
    let g = g.clone();
    let base_s = idx.base_s.clone();
    let base_t = idx.base_t.clone();
    let lambda0 = idx.lambda0;
    let r = idx.r;
    let d = idx.d;
    let delta = idx.delta;
    let g_nodes: Vec<Complex64> = q.nodes.iter().map(|&x| g.eval(x)).collect();
    let memo: Arc<DashMap<(u64, usize), Complex64>> = Arc::new(DashMap::new());
    let eval_f = move |s: f64| -> Result<Complex64> {
        let mut acc = Complex64::ZERO;
        for (j, (&x, &w)) in q_owned.nodes.iter().zip(&q_owned.weights).enumerate() {
            let key = (s.to_bits(), j);
            let resolvent = if let Some(hit) = memo.get(&key) {
                *hit
            } else {
                let mut s_points = Vec::with_capacity(d + 1);
                s_points.push(s);
                s_points.extend_from_slice(&base_s);
                let mut t_points = Vec::with_capacity(d + 1);
                t_points.push(x);
                t_points.extend_from_slice(&base_t);
                let req = MinorRequest {
                    p: d + 1,
                    s_points,
                    t_points,
                    lambda: lambda0,
                    derivative_order: r,
                    target_eps: eval.target_eps,
                };
                let v = minor_dp(&k, &q_owned, &req, &b, eval.max_tuples)?.value / delta;
                *memo.entry(key).or_insert(v)
            };
            acc += w * resolvent * g_nodes[j];
        }
        Ok(g.eval(s) - acc)
    };
    SolutionHandle { eval_f: Arc::new(eval_f) }
}
