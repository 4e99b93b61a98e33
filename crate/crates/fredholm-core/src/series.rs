//! Determinant-series evaluation with certified truncation.
//!
//! The modified minor `D_p(λ)` is a series `Σ_n B_n^p(λ)` whose coefficients
//! are weighted sums of compound determinants over quadrature-node tuples.
//! This module evaluates the coefficients, decides where the series may be
//! cut so the discarded tail provably stays below a target, and reports the
//! achieved bounds next to every value.
//!
//! Two error sources are tracked separately:
//!
//! * **truncation**: the tail `Σ_{n>N}` of the analytic series, bounded via
//!   Hadamard-type estimates built from [`TraceBounds`];
//! * **quadrature**: mass of the kernel outside the integration window,
//!   bounded via the fitted decay envelope.
//!
//! Node tuples are enumerated in strictly increasing order. A tuple with a
//! repeated node yields a compound determinant with two equal rows, which
//! vanishes identically in `λ` (all derivatives included), so skipping those
//! tuples is exact and the `1/n!` symmetry factor cancels against the `n!`
//! orderings of each surviving tuple.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::compounds::{affine_det_derivative, binomial, Combinations};
use crate::error::{FredholmError, Result};
use crate::kernels::{KernelPair, TraceBounds};
use crate::quadrature::QuadratureRule;

/// Hard ceiling on the truncation depth the planner will consider.
pub const MAX_SERIES_DEPTH: usize = 512;

/// Number of terms tabulated when bounding series tails; beyond this the
/// remainder is closed with a geometric majorant.
const BOUND_TABLE_LEN: usize = 600;

/// Fixed work-unit size for the deterministic parallel reduction. Chunks are
/// assigned by rank, summed independently, and folded in rank order, so the
/// result is bit-identical for any thread count.
const CHUNK: u64 = 4096;

/// Cost ceiling for single-coefficient evaluation via [`coeff_bnp`].
const COEFF_TUPLE_CAP: u64 = 100_000_000;

/// Accuracy and cost targets shared by the higher-level drivers.
#[derive(Debug, Clone, Copy)]
pub struct EvalParams {
    /// Requested bound on the truncated series tail.
    pub target_eps: f64,
    /// Ceiling on the total number of node tuples evaluated per minor.
    pub max_tuples: u64,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self { target_eps: 1e-6, max_tuples: 20_000_000 }
    }
}

/// A single minor evaluation: which minor, where, and how accurately.
#[derive(Debug, Clone)]
pub struct MinorRequest {
    /// Order `p` of the minor (number of fixed point pairs).
    pub p: usize,
    /// Fixed first-argument points `s_1, …, s_p`.
    pub s_points: Vec<f64>,
    /// Fixed second-argument points `t_1, …, t_p`.
    pub t_points: Vec<f64>,
    /// Spectral parameter the series is evaluated at.
    pub lambda: Complex64,
    /// Order of the `λ`-derivative to evaluate (`0` for the minor itself).
    pub derivative_order: usize,
    /// Requested bound on the truncated tail.
    pub target_eps: f64,
}

/// A minor value together with the accounting that certifies it.
#[derive(Debug, Clone)]
pub struct MinorValue {
    /// The evaluated (derivative of the) minor.
    pub value: Complex64,
    /// Number of series terms summed (`N + 1` for depth `N`), at least one.
    pub terms_used: usize,
    /// Certified bound on the discarded series tail.
    pub truncation_bound: f64,
    /// Estimated kernel mass lost outside the quadrature window.
    pub quadrature_tail: f64,
}

/// Per-term bound table for `|B_n^p|`-type estimates.
///
/// Entry `n` bounds the `n`-th term of the series for the `j`-th derivative;
/// derivative orders are handled with a Cauchy estimate on a disk of radius
/// one around the evaluation radius, which multiplies the table by `j!` and
/// widens the geometric factor.
struct BoundTable {
    terms: Vec<f64>,
    /// Geometric ratio majorant valid past the end of the table.
    closing_ratio: f64,
}

impl BoundTable {
    fn build(b: &TraceBounds, p: usize, rho: f64, derivative_order: usize) -> Self {
        let eff_rho = if derivative_order == 0 { rho } else { rho + 1.0 };
        let c = (2.0 * (1.0 + eff_rho * eff_rho)).sqrt();
        let j_factor: f64 = (1..=derivative_order).map(|k| k as f64).product();
        let ln_m = if b.sup_diag > 0.0 { b.sup_diag.ln() } else { f64::NEG_INFINITY };
        let ln_c = c.ln();
        let mx = b.trace_a.max(b.trace_a_tilde);
        let mn = b.trace_a.min(b.trace_a_tilde);

        let mut ln_fact = 0.0f64;
        let mut terms = Vec::with_capacity(BOUND_TABLE_LEN + 1);
        for n in 0..=BOUND_TABLE_LEN {
            if n > 0 {
                ln_fact += (n as f64).ln();
            }
            // 2p·ln M with the convention that M = 0 kills every p ≥ 1 term.
            let diag_part = if p == 0 {
                0.0
            } else if b.sup_diag == 0.0 {
                terms.push(0.0);
                continue;
            } else {
                2.0 * p as f64 * ln_m
            };
            // ln(trÃ^n + trA^n) − ln 2, with x^0 = 1 even for zero traces.
            let trace_part = if n == 0 {
                0.0
            } else if mx == 0.0 {
                terms.push(0.0);
                continue;
            } else {
                let ratio = if mn == 0.0 { 0.0 } else { (mn / mx).powi(n as i32) };
                n as f64 * mx.ln() + (1.0 + ratio).ln() - std::f64::consts::LN_2
            };
            let ln_term = diag_part + (p + n) as f64 * ln_c + trace_part - ln_fact;
            terms.push(j_factor * ln_term.exp());
        }
        let closing_ratio = c * mx / (BOUND_TABLE_LEN as f64 + 1.0);
        Self { terms, closing_ratio }
    }

    /// Sum of all bound terms with index strictly greater than `depth`.
    fn tail_after(&self, depth: usize) -> f64 {
        let start = depth + 1;
        let mut tail = if self.closing_ratio < 1.0 {
            self.terms[BOUND_TABLE_LEN] * self.closing_ratio / (1.0 - self.closing_ratio)
        } else {
            f64::INFINITY
        };
        for n in (start..=BOUND_TABLE_LEN).rev() {
            tail += self.terms[n];
        }
        tail
    }
}

/// Certified bound on `|Σ_{n>depth}|` of the order-`p` series (or of its
/// `derivative_order`-th `λ`-derivative) on the disk `|λ| ≤ rho`.
pub fn tail_bound(b: &TraceBounds, p: usize, rho: f64, derivative_order: usize, depth: usize) -> f64 {
    BoundTable::build(b, p, rho, derivative_order).tail_after(depth)
}

/// Smallest depth `N` such that the series tail past `N` is provably below
/// `target_eps` on the disk `|λ| ≤ rho`.
pub fn truncation_n(b: &TraceBounds, p: usize, rho: f64, target_eps: f64) -> Result<usize> {
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(FredholmError::InvalidParameter(format!("evaluation radius must be finite and non-negative, got {rho}")));
    }
    if !(target_eps > 0.0) {
        return Err(FredholmError::InvalidParameter(format!("tail target must be positive, got {target_eps}")));
    }
    let table = BoundTable::build(b, p, rho, 0);
    plan_depth(&table, target_eps)
}

fn plan_depth(table: &BoundTable, target_eps: f64) -> Result<usize> {
    let mut achieved = f64::INFINITY;
    for depth in 0..=MAX_SERIES_DEPTH {
        achieved = table.tail_after(depth);
        if achieved <= target_eps {
            return Ok(depth);
        }
    }
    Err(FredholmError::TargetOutOfReach {
        target: target_eps,
        max_terms: MAX_SERIES_DEPTH,
        achieved,
    })
}

/// Kernel tables sampled on the fixed points and quadrature nodes, split into
/// the four blocks a bordered compound determinant is assembled from.
pub(crate) struct TupleEngine {
    p: usize,
    nodes: usize,
    h_pp: Vec<Complex64>,
    s_pp: Vec<Complex64>,
    h_px: Vec<Complex64>,
    s_px: Vec<Complex64>,
    h_xp: Vec<Complex64>,
    s_xp: Vec<Complex64>,
    h_xx: Vec<Complex64>,
    s_xx: Vec<Complex64>,
    weights: Vec<f64>,
}

impl TupleEngine {
    pub(crate) fn from_kernel(
        k: &KernelPair,
        rule: &QuadratureRule,
        s_points: &[f64],
        t_points: &[f64],
    ) -> Result<Self> {
        let p = s_points.len();
        let nodes = rule.nodes.len();
        let mut eng = Self {
            p,
            nodes,
            h_pp: vec![Complex64::ZERO; p * p],
            s_pp: vec![Complex64::ZERO; p * p],
            h_px: vec![Complex64::ZERO; p * nodes],
            s_px: vec![Complex64::ZERO; p * nodes],
            h_xp: vec![Complex64::ZERO; nodes * p],
            s_xp: vec![Complex64::ZERO; nodes * p],
            h_xx: vec![Complex64::ZERO; nodes * nodes],
            s_xx: vec![Complex64::ZERO; nodes * nodes],
            weights: rule.weights.clone(),
        };
        for (r, &s) in s_points.iter().enumerate() {
            for (c, &t) in t_points.iter().enumerate() {
                eng.h_pp[r * p + c] = k.eval_h(s, t)?;
                eng.s_pp[r * p + c] = k.eval_s(s, t)?;
            }
            for (c, &x) in rule.nodes.iter().enumerate() {
                eng.h_px[r * nodes + c] = k.eval_h(s, x)?;
                eng.s_px[r * nodes + c] = k.eval_s(s, x)?;
            }
        }
        for (r, &x) in rule.nodes.iter().enumerate() {
            for (c, &t) in t_points.iter().enumerate() {
                eng.h_xp[r * p + c] = k.eval_h(x, t)?;
                eng.s_xp[r * p + c] = k.eval_s(x, t)?;
            }
            for (c, &y) in rule.nodes.iter().enumerate() {
                eng.h_xx[r * nodes + c] = k.eval_h(x, y)?;
                eng.s_xx[r * nodes + c] = k.eval_s(x, y)?;
            }
        }
        Ok(eng)
    }

    /// Engine over a pre-evaluated node table (order zero, nothing to
    /// subtract): the `H` block is the supplied table and `S` is zero, so
    /// evaluating at `λ = 0` sums determinants of the table itself.
    pub(crate) fn from_t_table(t_xx: Vec<Complex64>, weights: Vec<f64>) -> Self {
        let nodes = weights.len();
        debug_assert_eq!(t_xx.len(), nodes * nodes);
        Self {
            p: 0,
            nodes,
            h_pp: Vec::new(),
            s_pp: Vec::new(),
            h_px: Vec::new(),
            s_px: Vec::new(),
            h_xp: Vec::new(),
            s_xp: Vec::new(),
            s_xx: vec![Complex64::ZERO; nodes * nodes],
            h_xx: t_xx,
            weights,
        }
    }

    /// Number of node tuples at series level `n`.
    pub(crate) fn level_tuples(&self, n: usize) -> u128 {
        binomial(self.nodes, n)
    }

    /// Sum of weighted bordered determinants over all level-`n` tuples, for
    /// each requested `λ` and derivative order `j`, reduced deterministically.
    pub(crate) fn sum_level(&self, n: usize, lambdas: &[Complex64], j: usize) -> Vec<Complex64> {
        let total = self.level_tuples(n);
        if total == 0 {
            return vec![Complex64::ZERO; lambdas.len()];
        }
        let m = self.p + n;
        if n == 0 {
            let mut h = self.h_pp.clone();
            let mut s = self.s_pp.clone();
            let mut scratch = vec![Complex64::ZERO; m * m];
            return lambdas
                .iter()
                .map(|&l| affine_det_derivative(&mut h, &mut s, m, l, j, &mut scratch))
                .collect();
        }
        let total = total as u64;
        let n_chunks = total.div_ceil(CHUNK);
        let partials: Vec<Vec<Complex64>> = (0..n_chunks)
            .into_par_iter()
            .map(|ci| {
                let mut acc = vec![Complex64::ZERO; lambdas.len()];
                let mut h = vec![Complex64::ZERO; m * m];
                let mut s = vec![Complex64::ZERO; m * m];
                let mut scratch = vec![Complex64::ZERO; m * m];
                let mut combos = Combinations::from_rank(self.nodes, n, (ci * CHUNK) as u128);
                for _ in 0..CHUNK {
                    let Some(tuple) = combos.next_combination() else { break };
                    self.gather(tuple, &mut h, &mut s);
                    let w: f64 = tuple.iter().map(|&xi| self.weights[xi]).product();
                    for (slot, &l) in acc.iter_mut().zip(lambdas) {
                        *slot += w * affine_det_derivative(&mut h, &mut s, m, l, j, &mut scratch);
                    }
                }
                acc
            })
            .collect();
        let mut out = vec![Complex64::ZERO; lambdas.len()];
        for part in partials {
            for (slot, v) in out.iter_mut().zip(part) {
                *slot += v;
            }
        }
        out
    }

    /// Assemble the bordered `(p+n)×(p+n)` tables for one node tuple.
    fn gather(&self, tuple: &[usize], h: &mut [Complex64], s: &mut [Complex64]) {
        let p = self.p;
        let n = tuple.len();
        let m = p + n;
        for r in 0..p {
            for c in 0..p {
                h[r * m + c] = self.h_pp[r * p + c];
                s[r * m + c] = self.s_pp[r * p + c];
            }
            for (c, &xi) in tuple.iter().enumerate() {
                h[r * m + p + c] = self.h_px[r * self.nodes + xi];
                s[r * m + p + c] = self.s_px[r * self.nodes + xi];
            }
        }
        for (i, &xi) in tuple.iter().enumerate() {
            let row = (p + i) * m;
            for c in 0..p {
                h[row + c] = self.h_xp[xi * p + c];
                s[row + c] = self.s_xp[xi * p + c];
            }
            for (c, &eta) in tuple.iter().enumerate() {
                h[row + p + c] = self.h_xx[xi * self.nodes + eta];
                s[row + p + c] = self.s_xx[xi * self.nodes + eta];
            }
        }
    }
}

/// Single series coefficient `B_n^p(λ)` (or its `j`-th `λ`-derivative) under
/// the given quadrature rule.
///
/// Levels deeper than the node count are exactly zero for the discretized
/// series and return zero without work; below that, the tuple count is capped
/// to keep a single coefficient from consuming unbounded time.
pub fn coeff_bnp(
    k: &KernelPair,
    q: &QuadratureRule,
    n: usize,
    p: usize,
    s_points: &[f64],
    t_points: &[f64],
    lambda: Complex64,
    derivative_order: usize,
) -> Result<Complex64> {
    check_points(p, s_points, t_points)?;
    if n > q.nodes.len() {
        return Ok(Complex64::ZERO);
    }
    let needed = binomial(q.nodes.len(), n);
    if needed > COEFF_TUPLE_CAP as u128 {
        return Err(FredholmError::TupleBudget { needed, budget: COEFF_TUPLE_CAP });
    }
    let engine = TupleEngine::from_kernel(k, q, s_points, t_points)?;
    Ok(engine.sum_level(n, &[lambda], derivative_order)[0])
}

fn check_points(p: usize, s_points: &[f64], t_points: &[f64]) -> Result<()> {
    if s_points.len() != p || t_points.len() != p {
        return Err(FredholmError::InvalidParameter(format!(
                "order {p} minor needs {p} fixed points per side, got {} and {}",
                s_points.len(),
                t_points.len()
            )));
    }
    if let Some(bad) = s_points.iter().chain(t_points).find(|v| !v.is_finite()) {
        return Err(FredholmError::InvalidParameter(format!("fixed points must be finite, got {bad}")));
    }
    Ok(())
}

/// Evaluation plan shared by [`minor_dp`] and [`minor_dp_scan`]: how deep to
/// sum, what tail bound that depth certifies, and whether the tuple budget
/// forced the cut short of the certified target.
struct LevelPlan {
    /// Levels `0..=depth` are summed.
    depth: usize,
    /// Tail bound certified at the planning radius.
    bound_at_plan_radius: f64,
    /// Depth is exact (finite-rank vanishing), not an analytic estimate.
    rank_exact: bool,
    /// The budget cut the sum before the target depth; the value is then
    /// best-effort and the bound honest but above target.
    degraded: bool,
    /// Tuples the full certified depth would have needed.
    full_cost: u128,
}

fn plan_levels(
    k: &KernelPair,
    b: &TraceBounds,
    p: usize,
    rho: f64,
    derivative_order: usize,
    target_eps: f64,
    nodes: usize,
    max_tuples: u64,
) -> Result<(LevelPlan, BoundTable)> {
    let table = BoundTable::build(b, p, rho, derivative_order);
    // Finite rank r kills every level with p + n > r, making the cut exact.
    let rank_stop: Option<usize> = k.finite_rank().map(|r| r.saturating_sub(p));
    let analytic = plan_depth(&table, target_eps);
    let (depth, rank_exact) = match (rank_stop, analytic) {
        (Some(rs), Ok(d)) if d <= rs => (d, false),
        (Some(rs), _) => (rs, true),
        (None, Ok(d)) => (d, false),
        (None, Err(e)) => return Err(e),
    };
    // Levels past the node count cost nothing and contribute exactly zero to
    // the discretized series, so only the reachable levels are budgeted.
    let mut full_cost: u128 = 0;
    let mut afford: Option<usize> = None;
    for n in 0..=depth.min(nodes) {
        full_cost += binomial(nodes, n);
        if full_cost <= max_tuples as u128 {
            afford = Some(n);
        }
    }
    let plan = match afford {
        // The zeroth level alone is over budget: nothing useful can be summed.
        None => return Err(FredholmError::TupleBudget { needed: 1, budget: max_tuples }),
        Some(a) if a >= depth.min(nodes) => LevelPlan {
            depth,
            bound_at_plan_radius: if rank_exact { 0.0 } else { table.tail_after(depth) },
            rank_exact,
            degraded: false,
            full_cost,
        },
        Some(a) => LevelPlan {
            depth: a,
            bound_at_plan_radius: table.tail_after(a),
            rank_exact: false,
            degraded: true,
            full_cost,
        },
    };
    Ok((plan, table))
}

/// Estimated kernel mass escaping the quadrature window, one escaping
/// coordinate at a time, weighted by the same Hadamard factors that bound the
/// series terms.
fn quadrature_tail(table: &BoundTable, b: &TraceBounds, q: &QuadratureRule, depth: usize, rho: f64, derivative_order: usize) -> f64 {
    if depth == 0 {
        return 0.0;
    }
    let tau = b.envelope.tail_mass(q.truncation_radius);
    if tau == 0.0 {
        return 0.0;
    }
    let eff_rho = if derivative_order == 0 { rho } else { rho + 1.0 };
    let c = (2.0 * (1.0 + eff_rho * eff_rho)).sqrt();
    let mut sum = 0.0;
    for n in 1..=depth.min(BOUND_TABLE_LEN) {
        sum += n as f64 * table.terms[n - 1];
    }
    tau * c * sum
}

/// Evaluate one modified minor to the requested tail target.
///
/// The series is cut at the smallest depth whose certified tail fits under
/// `req.target_eps`, or at the exact finite-rank cutoff when the kernel
/// carries one. If the node-tuple budget `max_tuples` cannot cover that
/// depth, the deepest affordable partial sum is still computed and returned
/// inside the error, with its honestly larger tail bound.
pub fn minor_dp(
    k: &KernelPair,
    q: &QuadratureRule,
    req: &MinorRequest,
    b: &TraceBounds,
    max_tuples: u64,
) -> Result<MinorValue> {
    check_points(req.p, &req.s_points, &req.t_points)?;
    if !(req.target_eps > 0.0) {
        return Err(FredholmError::InvalidParameter(format!("tail target must be positive, got {}", req.target_eps)));
    }
    let rho = req.lambda.norm();
    let (plan, table) = plan_levels(
        k,
        b,
        req.p,
        rho,
        req.derivative_order,
        req.target_eps,
        q.nodes.len(),
        max_tuples,
    )?;
    let engine = TupleEngine::from_kernel(k, q, &req.s_points, &req.t_points)?;
    let mut value = Complex64::ZERO;
    for n in 0..=plan.depth.min(q.nodes.len()) {
        value += engine.sum_level(n, &[req.lambda], req.derivative_order)[0];
    }
    let out = MinorValue {
        value,
        terms_used: plan.depth + 1,
        truncation_bound: plan.bound_at_plan_radius,
        quadrature_tail: quadrature_tail(&table, b, q, plan.depth, rho, req.derivative_order),
    };
    if plan.degraded {
        return Err(FredholmError::TruncationUnreachable {
            target: req.target_eps,
            best: Box::new(out),
        });
    }
    Ok(out)
}

/// Evaluate one minor on a whole grid of `λ` values, reusing a single kernel
/// table and a single truncation depth planned at the largest radius in the
/// grid; per-`λ` tail bounds are then re-certified at each point's own radius.
#[allow(clippy::too_many_arguments)]
pub fn minor_dp_scan(
    k: &KernelPair,
    q: &QuadratureRule,
    p: usize,
    s_points: &[f64],
    t_points: &[f64],
    lambdas: &[Complex64],
    b: &TraceBounds,
    target_eps: f64,
    max_tuples: u64,
) -> Result<Vec<MinorValue>> {
    check_points(p, s_points, t_points)?;
    if lambdas.is_empty() {
        return Ok(Vec::new());
    }
    if !(target_eps > 0.0) {
        return Err(FredholmError::InvalidParameter(format!("tail target must be positive, got {target_eps}")));
    }
    let rho_max = lambdas.iter().map(|l| l.norm()).fold(0.0f64, f64::max);
    let (plan, _) = plan_levels(k, b, p, rho_max, 0, target_eps, q.nodes.len(), max_tuples)?;
    if plan.degraded {
        // A scan has no single best-effort value to hand back; refuse instead.
        return Err(FredholmError::TupleBudget { needed: plan.full_cost, budget: max_tuples });
    }
    let engine = TupleEngine::from_kernel(k, q, s_points, t_points)?;
    let mut values = vec![Complex64::ZERO; lambdas.len()];
    for n in 0..=plan.depth.min(q.nodes.len()) {
        for (acc, v) in values.iter_mut().zip(engine.sum_level(n, lambdas, 0)) {
            *acc += v;
        }
    }
    Ok(lambdas
        .iter()
        .zip(values)
        .map(|(l, value)| {
            let rho = l.norm();
            let table = BoundTable::build(b, p, rho, 0);
            let truncation_bound = if plan.rank_exact { 0.0 } else { table.tail_after(plan.depth) };
            MinorValue {
                value,
                terms_used: plan.depth + 1,
                truncation_bound,
                quadrature_tail: quadrature_tail(&table, b, q, plan.depth, rho, 0),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::estimate_trace_bounds;
    use crate::quadrature::{build_rule, QuadratureKind};
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    const SQRT_HALF_PI: f64 = 1.253_314_137_315_500_3;

    fn gl64() -> QuadratureRule {
        build_rule(QuadratureKind::GaussLegendreTruncated, 64, 6.0).unwrap()
    }

    fn rank_one() -> KernelPair {
        KernelPair::builtin("separable-gaussian", &[]).unwrap()
    }

    fn bounds_for(k: &KernelPair, q: &QuadratureRule) -> TraceBounds {
        estimate_trace_bounds(k, q).unwrap()
    }

    #[test]
    fn zeroth_coefficient_of_first_minor_is_the_kernel_itself() {
        let k = rank_one();
        let q = gl64();
        let lambda = Complex64::new(0.3, -0.2);
        let got = coeff_bnp(&k, &q, 0, 1, &[0.4], &[-0.7], lambda, 0).unwrap();
        let want = k.eval_t(lambda, 0.4, -0.7).unwrap();
        assert_relative_eq!(got.re, want.re, max_relative = 1e-14);
        assert_relative_eq!(got.im, want.im, max_relative = 1e-14);
    }

    #[test]
    fn first_coefficient_integrates_the_kernel_diagonal() {
        // For H = 0, S = e^{-s²-t²}: B_1^0(λ) = -λ ∫ e^{-2ξ²} dξ = -λ √(π/2).
        let k = rank_one();
        let q = gl64();
        let lambda = Complex64::new(0.7, 0.3);
        let got = coeff_bnp(&k, &q, 1, 0, &[], &[], lambda, 0).unwrap();
        let want = -lambda * SQRT_HALF_PI;
        assert_relative_eq!(got.re, want.re, epsilon = 1e-8);
        assert_relative_eq!(got.im, want.im, epsilon = 1e-8);
    }

    #[test]
    fn second_coefficient_of_rank_one_kernel_vanishes() {
        let k = rank_one();
        let q = gl64();
        let got = coeff_bnp(&k, &q, 2, 0, &[], &[], Complex64::new(1.0, 0.0), 0).unwrap();
        assert!(got.norm() < 1e-10, "rank-one second coefficient was {got}");
    }

    #[test]
    fn coefficient_levels_past_the_node_count_are_exactly_zero() {
        let k = rank_one();
        let q = build_rule(QuadratureKind::GaussLegendreTruncated, 8, 6.0).unwrap();
        let got = coeff_bnp(&k, &q, 9, 0, &[], &[], Complex64::new(0.5, 0.0), 0).unwrap();
        assert_eq!(got, Complex64::ZERO);
    }

    #[test]
    fn truncation_depth_is_zero_for_trace_free_bounds() {
        let b = crate::kernels::trace_bounds_from_parts(1.0, 0.0, 0.0, crate::kernels::DecayEnvelope::Exponential { amplitude: 1.0, rate: 1.0 }).unwrap();
        assert_eq!(truncation_n(&b, 0, 1.0, 1e-8).unwrap(), 0);
    }

    #[test]
    fn truncation_depth_matches_hand_computed_unit_trace_case() {
        // M = 1, trA = trÃ = 1, ρ = 1 ⟹ c = 2 and the n-th bound is 2^n/n!;
        // the first depth whose tail Σ_{n>N} 2^n/n! clears 1e-8 is N = 15.
        let b = crate::kernels::trace_bounds_from_parts(1.0, 1.0, 1.0, crate::kernels::DecayEnvelope::Exponential { amplitude: 1.0, rate: 1.0 }).unwrap();
        assert_eq!(truncation_n(&b, 0, 1.0, 1e-8).unwrap(), 15);
    }

    #[test]
    fn truncation_depth_grows_with_minor_order() {
        let b = crate::kernels::trace_bounds_from_parts(1.5, 1.0, 1.2, crate::kernels::DecayEnvelope::Exponential { amplitude: 1.0, rate: 1.0 }).unwrap();
        let n0 = truncation_n(&b, 0, 1.0, 1e-8).unwrap();
        let n1 = truncation_n(&b, 1, 1.0, 1e-8).unwrap();
        let n2 = truncation_n(&b, 2, 1.0, 1e-8).unwrap();
        assert!(n0 <= n1 && n1 <= n2, "depths not monotone: {n0}, {n1}, {n2}");
    }

    #[test]
    fn unreachable_tail_target_reports_the_achieved_bound() {
        let b = crate::kernels::trace_bounds_from_parts(1.0, 1e6, 1e6, crate::kernels::DecayEnvelope::Exponential { amplitude: 1.0, rate: 1.0 }).unwrap();
        let err = truncation_n(&b, 0, 1.0, 1e-12).unwrap_err();
        match err {
            FredholmError::TargetOutOfReach { achieved, .. } => {
                assert!(achieved > 1e-12)
            }
            other => panic!("expected TargetOutOfReach, got {other:?}"),
        }
    }

    #[test]
    fn determinant_of_rank_one_kernel_matches_closed_form() {
        // D_0(λ) = 1 - λ√(π/2) for H = 0, S = e^{-s²-t²}.
        let k = rank_one();
        let q = gl64();
        let b = bounds_for(&k, &q);
        let req = MinorRequest {
            p: 0,
            s_points: vec![],
            t_points: vec![],
            lambda: Complex64::new(1.0, 0.0),
            derivative_order: 0,
            target_eps: 1e-8,
        };
        let out = minor_dp(&k, &q, &req, &b, 1_000_000).unwrap();
        assert_relative_eq!(out.value.re, 1.0 - SQRT_HALF_PI, epsilon = 1e-8);
        assert!(out.value.im.abs() < 1e-12);
        assert_eq!(out.terms_used, 2, "rank-one series has exactly two levels");
        assert_eq!(out.truncation_bound, 0.0, "finite-rank cut is exact");
        assert!(out.quadrature_tail < 1e-6 && out.quadrature_tail >= 0.0);
    }

    #[test]
    fn determinant_with_pure_h_part_matches_closed_form() {
        // H = e^{-(s-σ)²-(t+σ)²} with σ = 0 and amplitude 1, S evaluated at
        // λ = 0: det(I + H) = 1 + √(π/2).
        let k = KernelPair::builtin("gaussian-product", &[0.0, 1.0, 0.0]).unwrap();
        let q = gl64();
        let b = bounds_for(&k, &q);
        let req = MinorRequest {
            p: 0,
            s_points: vec![],
            t_points: vec![],
            lambda: Complex64::ZERO,
            derivative_order: 0,
            target_eps: 1e-8,
        };
        let out = minor_dp(&k, &q, &req, &b, 10_000_000).unwrap();
        assert_relative_eq!(out.value.re, 1.0 + SQRT_HALF_PI, epsilon = 1e-8);
        assert!(out.value.im.abs() < 1e-12);
    }

    #[test]
    fn kernel_that_is_identically_zero_gives_unit_determinant() {
        let k = rank_one();
        let q = gl64();
        let b = bounds_for(&k, &q);
        let req = MinorRequest {
            p: 0,
            s_points: vec![],
            t_points: vec![],
            lambda: Complex64::ZERO,
            derivative_order: 0,
            target_eps: 1e-10,
        };
        let out = minor_dp(&k, &q, &req, &b, 1_000_000).unwrap();
        assert_relative_eq!(out.value.re, 1.0, epsilon = 1e-14);
        assert!(out.value.im.abs() < 1e-15);
    }

    #[test]
    fn first_derivative_matches_finite_differences() {
        let k = rank_one();
        let q = gl64();
        let b = bounds_for(&k, &q);
        let at = Complex64::new(0.3, 0.0);
        let h = 1e-5;
        let eval = |l: Complex64, j: usize| {
            let req = MinorRequest {
                p: 0,
                s_points: vec![],
                t_points: vec![],
                lambda: l,
                derivative_order: j,
                target_eps: 1e-8,
            };
            minor_dp(&k, &q, &req, &b, 1_000_000).unwrap().value
        };
        let fd = (eval(at + h, 0) - eval(at - h, 0)) / (2.0 * h);
        let exact = eval(at, 1);
        assert_relative_eq!(exact.re, -SQRT_HALF_PI, epsilon = 1e-8);
        assert_relative_eq!(fd.re, exact.re, epsilon = 1e-6);
        assert!(exact.im.abs() < 1e-12);
    }

    #[test]
    fn derivative_past_rank_cutoff_is_zero_with_exact_bound() {
        let k = rank_one();
        let q = gl64();
        let b = bounds_for(&k, &q);
        let req = MinorRequest {
            p: 0,
            s_points: vec![],
            t_points: vec![],
            lambda: Complex64::new(0.5, 0.0),
            derivative_order: 2,
            target_eps: 1e-8,
        };
        let out = minor_dp(&k, &q, &req, &b, 1_000_000).unwrap();
        assert!(out.value.norm() < 1e-12, "second derivative of a degree-one determinant must vanish, got {}", out.value);
        assert_eq!(out.truncation_bound, 0.0);
    }

    #[test]
    fn series_truncated_at_certified_depth_is_stationary() {
        // Entirety in practice: summing five levels past the planned depth
        // cannot move a finite-rank determinant at all.
        let k = KernelPair::builtin("finite-rank-sum", &[2.0]).unwrap();
        let q = build_rule(QuadratureKind::GaussLegendreTruncated, 16, 6.0).unwrap();
        let engine = TupleEngine::from_kernel(&k, &q, &[], &[]).unwrap();
        let mut rng_lambdas = Vec::new();
        for i in 0..20 {
            let angle = i as f64 * 0.314_159;
            rng_lambdas.push(Complex64::from_polar(0.05 + 0.95 * (i as f64 / 19.0), angle));
        }
        let mut base = vec![Complex64::ZERO; rng_lambdas.len()];
        for n in 0..=2 {
            for (acc, v) in base.iter_mut().zip(engine.sum_level(n, &rng_lambdas, 0)) {
                *acc += v;
            }
        }
        let mut extended = base.clone();
        for n in 3..=7 {
            for (acc, v) in extended.iter_mut().zip(engine.sum_level(n, &rng_lambdas, 0)) {
                *acc += v;
            }
        }
        for (b0, b1) in base.iter().zip(&extended) {
            assert!((b0 - b1).norm() < 1e-10, "series moved past its rank cutoff: {b0} vs {b1}");
        }
    }

    #[test]
    fn scan_of_a_single_point_agrees_with_single_evaluation() {
        let k = rank_one();
        let q = gl64();
        let b = bounds_for(&k, &q);
        let lambda = Complex64::new(0.8, -0.1);
        let req = MinorRequest {
            p: 0,
            s_points: vec![],
            t_points: vec![],
            lambda,
            derivative_order: 0,
            target_eps: 1e-8,
        };
        let single = minor_dp(&k, &q, &req, &b, 1_000_000).unwrap();
        let scan = minor_dp_scan(&k, &q, 0, &[], &[], &[lambda], &b, 1e-8, 1_000_000).unwrap();
        assert_eq!(scan.len(), 1);
        assert_eq!(scan[0].value, single.value, "scan and single evaluation share the code path");
    }

    #[test]
    fn scan_matches_closed_form_along_a_real_interval() {
        let k = rank_one();
        let q = gl64();
        let b = bounds_for(&k, &q);
        let lambdas: Vec<Complex64> =
            (0..21).map(|i| Complex64::new(-2.0 + 0.2 * i as f64, 0.0)).collect();
        let scan = minor_dp_scan(&k, &q, 0, &[], &[], &lambdas, &b, 1e-8, 1_000_000).unwrap();
        for (l, mv) in lambdas.iter().zip(&scan) {
            let want = 1.0 - l.re * SQRT_HALF_PI;
            assert_relative_eq!(mv.value.re, want, epsilon = 1e-8);
            assert!(mv.value.im.abs() < 1e-12);
            assert!(mv.truncation_bound <= 1e-8 || mv.truncation_bound == 0.0);
        }
    }

    #[test]
    fn scan_respects_conjugate_symmetry_for_real_kernels() {
        let k = KernelPair::builtin("gaussian-product", &[0.4]).unwrap();
        let q = build_rule(QuadratureKind::GaussLegendreTruncated, 18, 6.0).unwrap();
        let b = bounds_for(&k, &q);
        let lambda = Complex64::new(0.4, 0.8);
        let scan = minor_dp_scan(
            &k,
            &q,
            0,
            &[],
            &[],
            &[lambda, lambda.conj()],
            &b,
            1e-4,
            50_000_000,
        )
        .unwrap();
        let diff = (scan[0].value.conj() - scan[1].value).norm();
        assert!(diff < 1e-12, "conjugate symmetry violated by {diff}");
    }

    #[test]
    fn budget_shortfall_returns_best_effort_value_with_honest_bound() {
        let k = KernelPair::builtin("gaussian-product", &[0.4]).unwrap();
        let q = gl64();
        let b = bounds_for(&k, &q);
        let req = MinorRequest {
            p: 0,
            s_points: vec![],
            t_points: vec![],
            lambda: Complex64::new(1.0, 0.0),
            derivative_order: 0,
            target_eps: 1e-6,
        };
        let err = minor_dp(&k, &q, &req, &b, 1_000).unwrap_err();
        match err {
            FredholmError::TruncationUnreachable { target, best } => {
                assert_eq!(target, 1e-6);
                assert!(best.value.is_finite(), "partial sum must still be returned");
                assert!(best.terms_used >= 1);
                assert!(
                    best.truncation_bound > 1e-6,
                    "degraded bound {} should sit above the target",
                    best.truncation_bound
                );
            }
            other => panic!("expected TruncationUnreachable, got {other:?}"),
        }
    }

    #[test]
    fn scan_refuses_budgets_below_its_shared_depth() {
        let k = KernelPair::builtin("gaussian-product", &[0.4]).unwrap();
        let q = gl64();
        let b = bounds_for(&k, &q);
        let err = minor_dp_scan(
            &k,
            &q,
            0,
            &[],
            &[],
            &[Complex64::new(1.0, 0.0)],
            &b,
            1e-6,
            1_000,
        )
        .unwrap_err();
        match err {
            FredholmError::TupleBudget { needed, budget } => {
                assert!(needed > 1_000);
                assert_eq!(budget, 1_000);
            }
            other => panic!("expected TupleBudget, got {other:?}"),
        }
    }

    #[test]
    fn fixed_point_count_must_match_minor_order() {
        let k = rank_one();
        let q = gl64();
        let b = bounds_for(&k, &q);
        let req = MinorRequest {
            p: 2,
            s_points: vec![0.0],
            t_points: vec![0.0, 1.0],
            lambda: Complex64::ZERO,
            derivative_order: 0,
            target_eps: 1e-6,
        };
        assert!(matches!(
            minor_dp(&k, &q, &req, &b, 1_000).unwrap_err(),
            FredholmError::InvalidParameter(_)
        ));
    }

    #[test]
    fn first_minor_of_rank_one_kernel_is_proportional_to_the_factors() {
        // For S = a(s)a(t) the bordered 2×2 integrand factorizes and cancels,
        // so every level past the zeroth vanishes and D_1(s,t;λ) = -λ a(s)a(t).
        let k = rank_one();
        let q = gl64();
        let b = bounds_for(&k, &q);
        let lambda = Complex64::new(0.6, 0.0);
        let (s, t) = (0.3, -0.5);
        let req = MinorRequest {
            p: 1,
            s_points: vec![s],
            t_points: vec![t],
            lambda,
            derivative_order: 0,
            target_eps: 1e-8,
        };
        let out = minor_dp(&k, &q, &req, &b, 1_000_000).unwrap();
        let a = |x: f64| (-x * x).exp();
        let want = -lambda.re * a(s) * a(t);
        assert_relative_eq!(out.value.re, want, epsilon = 1e-8);
        assert!(out.value.im.abs() < 1e-12);
    }
}
