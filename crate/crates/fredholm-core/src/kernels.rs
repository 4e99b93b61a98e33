//! Kernel pairs `(H, S)` for the parameter-linear kernel `T_λ = H − λS`.
//!
//! A [`KernelPair`] owns the two factor kernels as closures plus the metadata
//! the rest of the library needs: a label for reports, an effective support
//! radius for choosing default truncation radii, and — when known — a bound
//! on the rank of `T_λ` as an operator. The rank bound is what makes the
//! determinant series cheap for separable kernels: every series coefficient
//! whose block order exceeds the rank vanishes identically, so the series is
//! finite and its truncation error is exactly zero.
//!
//! [`estimate_trace_bounds`] produces the Carleman-type data (`M`, `tr A`,
//! `tr Ã`) that drives the a-priori truncation bound of the minor series, by
//! discretising the positive operators `A² = H*H + S*S` and `Ã² = HH* + SS*`
//! and taking matrix square roots. The same pass fits a [`DecayEnvelope`] to
//! the diagonal of the square roots, which later converts "what the rule
//! doesn't see beyond its truncation radius" into a reportable tail estimate.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{FredholmError, Result};
use crate::expr::Expr;
use crate::quadrature::QuadratureRule;

/// Shared evaluation closure for one factor kernel.
pub type KernelFn = Arc<dyn Fn(f64, f64) -> Complex64 + Send + Sync>;

/// The kernel pair `(H, S)` defining `T_λ(s, t) = H(s, t) − λ S(s, t)`.
#[derive(Clone)]
pub struct KernelPair {
    h: KernelFn,
    s: KernelFn,
    label: String,
    decay_radius: f64,
    finite_rank: Option<usize>,
}

impl fmt::Debug for KernelPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelPair")
            .field("label", &self.label)
            .field("decay_radius", &self.decay_radius)
            .field("finite_rank", &self.finite_rank)
            .finish_non_exhaustive()
    }
}

impl KernelPair {
    /// Wraps two closures as a kernel pair.
    ///
    /// `decay_radius` is the radius outside which both kernels are
    /// negligible for the intended accuracy; default quadrature choices are
    /// derived from it. `finite_rank`, when given, must bound the rank of
    /// `H − λS` for **every** λ (e.g. the dimension of a shared separable
    /// basis); it licenses exact truncation of the minor series.
    pub fn new(
        label: impl Into<String>,
        h: KernelFn,
        s: KernelFn,
        decay_radius: f64,
        finite_rank: Option<usize>,
    ) -> Self {
        KernelPair {
            h,
            s,
            label: label.into(),
            decay_radius,
            finite_rank,
        }
    }

    /// Builds a pair from expression strings in the grammar of [`crate::expr`].
    ///
    /// `None` for either factor means that factor is identically zero. No
    /// rank bound is inferred from expressions — the series machinery then
    /// relies purely on the analytic truncation bound.
    pub fn from_exprs(
        label: impl Into<String>,
        expr_h: Option<&str>,
        expr_s: Option<&str>,
        decay_radius: f64,
    ) -> Result<Self> {
        let zero: KernelFn = Arc::new(|_, _| Complex64::new(0.0, 0.0));
        let h = match expr_h {
            Some(src) => {
                let e = Expr::parse(src)?;
                let f: KernelFn = Arc::new(move |s, t| Complex64::new(e.eval(s, t), 0.0));
                f
            }
            None => zero.clone(),
        };
        let s = match expr_s {
            Some(src) => {
                let e = Expr::parse(src)?;
                let f: KernelFn = Arc::new(move |s, t| Complex64::new(e.eval(s, t), 0.0));
                f
            }
            None => zero,
        };
        Ok(KernelPair::new(label, h, s, decay_radius, None))
    }

    /// Instantiates a catalog kernel by name. Parameters are positional with
    /// defaults; see `docs/kernels.md` for formulas and exact constants.
    pub fn builtin(name: &str, params: &[f64]) -> Result<Self> {
        match name {
            "separable-gaussian" => separable_gaussian(params),
            "separable-rational" => separable_rational(params),
            "exp-decay" => exp_decay(params),
            "gaussian-product" => gaussian_product(params),
            "finite-rank-sum" => finite_rank_sum(params),
            other => Err(FredholmError::UnknownKernel(other.to_string())),
        }
    }

    /// Names accepted by [`KernelPair::builtin`].
    pub fn catalog() -> &'static [&'static str] {
        &[
            "separable-gaussian",
            "separable-rational",
            "exp-decay",
            "gaussian-product",
            "finite-rank-sum",
        ]
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn decay_radius(&self) -> f64 {
        self.decay_radius
    }

    pub fn finite_rank(&self) -> Option<usize> {
        self.finite_rank
    }

    /// Raw `H` evaluation without finiteness checks (hot paths check once at
    /// table-assembly time instead).
    #[inline]
    pub fn h(&self, s: f64, t: f64) -> Complex64 {
        (self.h)(s, t)
    }

    /// Raw `S` evaluation without finiteness checks.
    #[inline]
    pub fn s_part(&self, s: f64, t: f64) -> Complex64 {
        (self.s)(s, t)
    }

    /// Checked `H(s, t)`.
    pub fn eval_h(&self, s: f64, t: f64) -> Result<Complex64> {
        finite_at(self.h(s, t), s, t)
    }

    /// Checked `S(s, t)`.
    pub fn eval_s(&self, s: f64, t: f64) -> Result<Complex64> {
        finite_at(self.s_part(s, t), s, t)
    }

    /// Checked `T_λ(s, t) = H(s, t) − λ S(s, t)`.
    pub fn eval_t(&self, lambda: Complex64, s: f64, t: f64) -> Result<Complex64> {
        finite_at(self.h(s, t) - lambda * self.s_part(s, t), s, t)
    }
}

#[inline]
fn finite_at(v: Complex64, s: f64, t: f64) -> Result<Complex64> {
    if v.re.is_finite() && v.im.is_finite() {
        Ok(v)
    } else {
        Err(FredholmError::NonFiniteKernel { s, t })
    }
}

fn param(params: &[f64], i: usize, default: f64) -> f64 {
    params.get(i).copied().unwrap_or(default)
}

fn check_arity(name: &str, params: &[f64], max: usize) -> Result<()> {
    if params.len() > max {
        return Err(FredholmError::InvalidParameter(format!(
            "'{name}' takes at most {max} parameters, got {}",
            params.len()
        )));
    }
    Ok(())
}

fn separable_gaussian(params: &[f64]) -> Result<KernelPair> {
    check_arity("separable-gaussian", params, 1)?;
    let amp = param(params, 0, 1.0);
    if !amp.is_finite() {
        return Err(FredholmError::InvalidParameter(
            "separable-gaussian amplitude must be finite".into(),
        ));
    }
    let zero: KernelFn = Arc::new(|_, _| Complex64::new(0.0, 0.0));
    let s: KernelFn = Arc::new(move |x, y| Complex64::new(amp * (-x * x - y * y).exp(), 0.0));
    Ok(KernelPair::new(
        format!("separable-gaussian(amp={amp})"),
        zero,
        s,
        4.0,
        Some(1),
    ))
}

fn separable_rational(params: &[f64]) -> Result<KernelPair> {
    check_arity("separable-rational", params, 1)?;
    let amp = param(params, 0, 1.0);
    if !amp.is_finite() {
        return Err(FredholmError::InvalidParameter(
            "separable-rational amplitude must be finite".into(),
        ));
    }
    let zero: KernelFn = Arc::new(|_, _| Complex64::new(0.0, 0.0));
    let s: KernelFn =
        Arc::new(move |x, y| Complex64::new(amp / ((1.0 + x * x) * (1.0 + y * y)), 0.0));
    // Algebraic decay: the effective radius for ~1e-10 tails is large, and
    // the double-exponential rule is the right companion (see docs).
    Ok(KernelPair::new(
        format!("separable-rational(amp={amp})"),
        zero,
        s,
        1000.0,
        Some(1),
    ))
}

fn exp_decay(params: &[f64]) -> Result<KernelPair> {
    check_arity("exp-decay", params, 1)?;
    let alpha = param(params, 0, 1.0);
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(FredholmError::InvalidParameter(
            "exp-decay rate must be positive".into(),
        ));
    }
    let zero: KernelFn = Arc::new(|_, _| Complex64::new(0.0, 0.0));
    let s: KernelFn =
        Arc::new(move |x, y| Complex64::new((-alpha * (x.abs() + y.abs())).exp(), 0.0));
    Ok(KernelPair::new(
        format!("exp-decay(alpha={alpha})"),
        zero,
        s,
        14.0 / alpha,
        Some(1),
    ))
}

fn gaussian_product(params: &[f64]) -> Result<KernelPair> {
    check_arity("gaussian-product", params, 3)?;
    let gamma = param(params, 0, 0.0);
    let h_amp = param(params, 1, 0.5);
    let h_shift = param(params, 2, 0.5);
    if !(gamma.is_finite() && gamma.abs() < 2.0) {
        return Err(FredholmError::InvalidParameter(format!(
            "gaussian-product coupling must satisfy |gamma| < 2, got {gamma}"
        )));
    }
    if !h_amp.is_finite() || !h_shift.is_finite() {
        return Err(FredholmError::InvalidParameter(
            "gaussian-product h_amp and h_shift must be finite".into(),
        ));
    }
    let h: KernelFn = Arc::new(move |s, t| {
        let ds = s - h_shift;
        let dt = t + h_shift;
        Complex64::new(h_amp * (-ds * ds - dt * dt).exp(), 0.0)
    });
    let s_fn: KernelFn =
        Arc::new(move |s, t| Complex64::new((-s * s - t * t + gamma * s * t).exp(), 0.0));
    // With no cross-coupling both factors are separable: rank 1 each, and
    // the pair bound is the sum of the ranks. A nonzero coupling makes S
    // genuinely non-separable.
    let rank = if gamma == 0.0 {
        Some(if h_amp == 0.0 { 1 } else { 2 })
    } else {
        None
    };
    let radius = 4.0 / (1.0 - gamma.abs() / 2.0).sqrt();
    Ok(KernelPair::new(
        format!("gaussian-product(gamma={gamma}, h_amp={h_amp}, h_shift={h_shift})"),
        h,
        s_fn,
        radius,
        rank,
    ))
}

/// Orthonormal Hermite function `ψ_k(x) = H_k(x) e^{−x²/2} / √(2^k k! √π)`,
/// evaluated by the stable normalized recurrence.
pub fn hermite_function(k: usize, x: f64) -> f64 {
    let psi0 = (-0.5 * x * x).exp() / std::f64::consts::PI.powf(0.25);
    if k == 0 {
        return psi0;
    }
    let mut prev = psi0;
    let mut cur = std::f64::consts::SQRT_2 * x * psi0;
    for j in 2..=k {
        let jf = j as f64;
        let next = x * (2.0 / jf).sqrt() * cur - ((jf - 1.0) / jf).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    cur
}

fn finite_rank_sum(params: &[f64]) -> Result<KernelPair> {
    check_arity("finite-rank-sum", params, 2)?;
    let rank_f = param(params, 0, 2.0);
    let degenerate = param(params, 1, 0.0);
    if rank_f.fract() != 0.0 || !(1.0..=8.0).contains(&rank_f) {
        return Err(FredholmError::InvalidParameter(format!(
            "finite-rank-sum rank must be an integer in 1..=8, got {rank_f}"
        )));
    }
    if degenerate != 0.0 && degenerate != 1.0 {
        return Err(FredholmError::InvalidParameter(
            "finite-rank-sum degenerate flag must be 0 or 1".into(),
        ));
    }
    let rank = rank_f as usize;
    // H = Σ ψ_k ⊗ ψ_k; S = Σ σ_k ψ_k ⊗ ψ_k with σ_k = 1/(k+1), or all
    // σ_k = 1 in the degenerate variant (one characteristic value of full
    // multiplicity instead of a chain of simple ones).
    let sigmas: Vec<f64> = (0..rank)
        .map(|k| {
            if degenerate == 1.0 {
                1.0
            } else {
                1.0 / (k + 1) as f64
            }
        })
        .collect();
    let h: KernelFn = Arc::new(move |s, t| {
        let mut acc = 0.0;
        for k in 0..rank {
            acc += hermite_function(k, s) * hermite_function(k, t);
        }
        Complex64::new(acc, 0.0)
    });
    let sig = sigmas.clone();
    let s_fn: KernelFn = Arc::new(move |s, t| {
        let mut acc = 0.0;
        for (k, sigma) in sig.iter().enumerate() {
            acc += sigma * hermite_function(k, s) * hermite_function(k, t);
        }
        Complex64::new(acc, 0.0)
    });
    // H and S share the eigenbasis {ψ_k}, so H − λS stays inside its span.
    Ok(KernelPair::new(
        format!(
            "finite-rank-sum(rank={rank}{})",
            if degenerate == 1.0 { ", degenerate" } else { "" }
        ),
        h,
        s_fn,
        4.0 + 0.6 * rank as f64,
        Some(rank),
    ))
}

/// A pointwise upper bound `d(x) ≤ env(x)` for the diagonals of the Carleman
/// square roots, valid for `|x|` beyond the fitted region's onset. Used to
/// estimate what a truncated rule misses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DecayEnvelope {
    /// `amplitude · e^{−rate |x|}`
    Exponential { amplitude: f64, rate: f64 },
    /// `amplitude / |x|^order`
    Power { amplitude: f64, order: f64 },
}

impl DecayEnvelope {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            DecayEnvelope::Exponential { amplitude, rate } => amplitude * (-rate * x.abs()).exp(),
            DecayEnvelope::Power { amplitude, order } => amplitude / x.abs().powf(order),
        }
    }

    /// Two-sided tail mass `∫_{|x|>R} env(x) dx`; infinite when the envelope
    /// is not integrable (power order ≤ 1).
    pub fn tail_mass(&self, radius: f64) -> f64 {
        match *self {
            DecayEnvelope::Exponential { amplitude, rate } => {
                2.0 * amplitude / rate * (-rate * radius).exp()
            }
            DecayEnvelope::Power { amplitude, order } => {
                if order > 1.0 {
                    2.0 * amplitude * radius.powf(1.0 - order) / (order - 1.0)
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

/// Carleman-type bounds extracted from a kernel pair on a quadrature rule.
///
/// `A = (H*H + S*S)^{1/2}` acts in the second argument, `Ã = (HH* + SS*)^{1/2}`
/// in the first. `sup_diag` is `M = max(sup Ã(s,s)^{1/2}, sup A(t,t)^{1/2})`,
/// taken over the rule's nodes *and* a dense auxiliary grid via Nyström
/// extension of the eigenfunctions (node sampling alone can miss the peak
/// between nodes). The traces are the nuclear norms of the discretised
/// square roots.
#[derive(Debug, Clone)]
pub struct TraceBounds {
    pub sup_diag: f64,
    pub trace_a: f64,
    pub trace_a_tilde: f64,
    /// Largest relative change in any of the three quantities when the rule
    /// is refined (doubled); a proxy for the discretisation error.
    pub refinement_error: f64,
    /// Fitted pointwise bound for `max(A(x,x), Ã(x,x))` outside the core.
    pub envelope: DecayEnvelope,
}

/// Discretises `A` and `Ã`, returning traces, the sup of the diagonal square
/// roots, a refinement-based error estimate, and a fitted decay envelope.
///
/// Fails if the rule has fewer than 16 nodes, if a kernel value is not
/// finite, or if the discretised Gram matrix has an eigenvalue more negative
/// than `−1e−8 · λ_max` (positive semi-definiteness lost — the rule does not
/// resolve the kernel).
pub fn estimate_trace_bounds(k: &KernelPair, rule: &QuadratureRule) -> Result<TraceBounds> {
    if rule.len() < 16 {
        return Err(FredholmError::InvalidConfig(format!(
            "trace-bound estimation needs at least 16 nodes, got {}",
            rule.len()
        )));
    }
    let coarse = trace_pass(k, rule)?;
    let fine_rule = rule.refined()?;
    let fine = trace_pass(k, &fine_rule)?;

    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
    let refinement_error = rel(coarse.m, fine.m)
        .max(rel(coarse.trace_a, fine.trace_a))
        .max(rel(coarse.trace_a_tilde, fine.trace_a_tilde));

    let envelope = fit_envelope(&fine_rule.nodes, &fine.diag_max);

    Ok(TraceBounds {
        sup_diag: fine.m,
        trace_a: fine.trace_a,
        trace_a_tilde: fine.trace_a_tilde,
        refinement_error,
        envelope,
    })
}

struct TracePass {
    m: f64,
    trace_a: f64,
    trace_a_tilde: f64,
    /// `max(A(x_i,x_i), Ã(x_i,x_i))` per node, for envelope fitting.
    diag_max: Vec<f64>,
}

fn trace_pass(k: &KernelPair, rule: &QuadratureRule) -> Result<TracePass> {
    let n = rule.len();
    let mut hmat = DMatrix::<Complex64>::zeros(n, n);
    let mut smat = DMatrix::<Complex64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let (x, y) = (rule.nodes[i], rule.nodes[j]);
            hmat[(i, j)] = finite_at(k.h(x, y), x, y)?;
            smat[(i, j)] = finite_at(k.s_part(x, y), x, y)?;
        }
    }
    let w = &rule.weights;

    // Gram kernels: C_A = H*WH + S*WS (acts on the second argument),
    // C_Ã = HWH* + SWS* (first argument).
    let row_scaled = |m: &DMatrix<Complex64>| {
        let mut scaled = m.clone();
        for i in 0..n {
            for j in 0..n {
                scaled[(i, j)] *= w[i];
            }
        }
        scaled
    };
    let col_scaled = |m: &DMatrix<Complex64>| {
        let mut scaled = m.clone();
        for i in 0..n {
            for j in 0..n {
                scaled[(i, j)] *= w[j];
            }
        }
        scaled
    };
    let c_a = hmat.adjoint() * row_scaled(&hmat) + smat.adjoint() * row_scaled(&smat);
    let c_at = col_scaled(&hmat) * hmat.adjoint() + col_scaled(&smat) * smat.adjoint();

    let a = gram_sqrt(&c_a, w)?;
    let at = gram_sqrt(&c_at, w)?;

    // Dense-grid Nyström extension of the diagonals: catches peaks that sit
    // between quadrature nodes (rules rarely place a node at the maximum).
    let x_max = rule.nodes.iter().fold(0.0_f64, |acc, &x| acc.max(x.abs()));
    let grid: Vec<f64> = (0..=400)
        .map(|i| -x_max + 2.0 * x_max * i as f64 / 400.0)
        .collect();
    let kernel_cols = |x: f64, second_arg_free: bool| -> Result<Vec<Complex64>> {
        // r_j = sqrt(w_j) C(x, x_j) assembled from fresh kernel columns.
        let mut hx = vec![Complex64::default(); n];
        let mut sx = vec![Complex64::default(); n];
        for (i, &xi) in rule.nodes.iter().enumerate() {
            if second_arg_free {
                hx[i] = finite_at(k.h(xi, x), xi, x)?;
                sx[i] = finite_at(k.s_part(xi, x), xi, x)?;
            } else {
                hx[i] = finite_at(k.h(x, xi), x, xi)?;
                sx[i] = finite_at(k.s_part(x, xi), x, xi)?;
            }
        }
        let mut r = vec![Complex64::default(); n];
        for j in 0..n {
            let mut acc = Complex64::default();
            for i in 0..n {
                if second_arg_free {
                    acc += w[i] * (hx[i].conj() * hmat[(i, j)] + sx[i].conj() * smat[(i, j)]);
                } else {
                    acc += w[i]
                        * (hx[i] * hmat[(j, i)].conj() + sx[i] * smat[(j, i)].conj());
                }
            }
            r[j] = Complex64::new(w[j].sqrt(), 0.0) * acc;
        }
        Ok(r)
    };
    let mut sup_a = a.diag.iter().fold(0.0_f64, |acc, &d| acc.max(d));
    let mut sup_at = at.diag.iter().fold(0.0_f64, |acc, &d| acc.max(d));
    for &x in &grid {
        sup_a = sup_a.max(extension_diag(&kernel_cols(x, true)?, &a));
        sup_at = sup_at.max(extension_diag(&kernel_cols(x, false)?, &at));
    }

    let m = sup_a.max(sup_at).max(0.0).sqrt();
    let diag_max: Vec<f64> = (0..n).map(|i| a.diag[i].max(at.diag[i])).collect();
    Ok(TracePass {
        m,
        trace_a: a.trace,
        trace_a_tilde: at.trace,
        diag_max,
    })
}

struct GramSqrt {
    trace: f64,
    diag: Vec<f64>,
    mu: Vec<f64>,
    vecs: DMatrix<Complex64>,
}

/// Given a Gram kernel matrix `C` (PSD in exact arithmetic), computes
/// spectral data of `B = W^{1/2} C W^{1/2}`: the square-root trace
/// `Σ √μ_k`, and the square-root diagonal `(B^{1/2})_{ii} / w_i`.
fn gram_sqrt(c: &DMatrix<Complex64>, w: &[f64]) -> Result<GramSqrt> {
    let n = w.len();
    let mut b = c.clone();
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] *= Complex64::new((w[i] * w[j]).sqrt(), 0.0);
        }
    }
    // Symmetrise to kill rounding skew before the Hermitian eigensolver.
    let b = (&b + b.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(b);
    let max_eig = eig
        .eigenvalues
        .iter()
        .fold(0.0_f64, |acc, &m| acc.max(m.abs()));
    let tol = 1e-8 * max_eig.max(1e-300);
    // Eigenvalues are only determined to ~n·ε·‖B‖; keeping smaller ones
    // would let the square root amplify pure noise into the trace
    // (n eigenvalues of size ε contribute n·√ε ≈ 1e-6).
    let noise = max_eig * n as f64 * f64::EPSILON;
    let mut mu = vec![0.0; n];
    for (i, &m) in eig.eigenvalues.iter().enumerate() {
        if m < -tol {
            return Err(FredholmError::IndefiniteGram { value: m, tol });
        }
        mu[i] = if m <= noise { 0.0 } else { m };
    }
    let trace = mu.iter().map(|m| m.sqrt()).sum();
    let mut diag = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for (j, &m) in mu.iter().enumerate() {
            acc += eig.eigenvectors[(i, j)].norm_sqr() * m.sqrt();
        }
        diag[i] = acc / w[i];
    }
    Ok(GramSqrt {
        trace,
        diag,
        mu,
        vecs: eig.eigenvectors,
    })
}

/// Nyström extension of the square-root diagonal to an off-grid point:
/// `A(x,x) = Σ_k μ_k^{−3/2} |Σ_j r_j v_k[j]|²` over well-resolved modes,
/// where `r_j = √w_j C(x, x_j)`.
fn extension_diag(r: &[Complex64], g: &GramSqrt) -> f64 {
    let mu_max = g.mu.iter().fold(0.0_f64, |a, &m| a.max(m));
    let cutoff = 1e-10 * mu_max;
    let n = r.len();
    let mut acc = 0.0;
    for k in 0..n {
        let mu = g.mu[k];
        if mu <= cutoff {
            continue;
        }
        let mut proj = Complex64::default();
        for j in 0..n {
            proj += r[j] * g.vecs[(j, k)];
        }
        acc += proj.norm_sqr() / (mu * mu.sqrt());
    }
    acc
}

/// Fits a decay envelope to diagonal samples on the outer part of the node
/// range, comparing an exponential and a power-law model in log space and
/// inflating the winner so it dominates every fitted sample (×2 on top).
fn fit_envelope(nodes: &[f64], diag: &[f64]) -> DecayEnvelope {
    let x_max = nodes.iter().fold(0.0_f64, |a, &x| a.max(x.abs()));
    let collect = |onset: f64| -> Vec<(f64, f64)> {
        let mut pts = Vec::new();
        for (&x, &d) in nodes.iter().zip(diag) {
            if x.abs() >= onset && x.abs() > 0.0 && d > 1e-280 {
                pts.push((x.abs(), d));
            }
        }
        pts
    };
    let mut pts = collect(x_max / 3.0);
    if pts.len() < 4 {
        pts = collect(0.0);
    }
    if pts.len() < 2 {
        // Diagonal already at the noise floor everywhere that matters.
        return DecayEnvelope::Exponential {
            amplitude: 1e-280,
            rate: 1.0,
        };
    }

    let fit = |xs: &[f64], ys: &[f64]| -> (f64, f64, f64) {
        let n = xs.len() as f64;
        let sx: f64 = xs.iter().sum();
        let sy: f64 = ys.iter().sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
        let denom = n * sxx - sx * sx;
        if denom.abs() < 1e-30 {
            return (0.0, sy / n, f64::INFINITY);
        }
        let slope = (n * sxy - sx * sy) / denom;
        let intercept = (sy - slope * sx) / n;
        let resid: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| {
                let e = y - (intercept + slope * x);
                e * e
            })
            .sum();
        (slope, intercept, resid)
    };

    let ln_d: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let abs_x: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ln_x: Vec<f64> = pts.iter().map(|p| p.0.max(1e-12).ln()).collect();

    let (slope_e, icept_e, resid_e) = fit(&abs_x, &ln_d);
    let (slope_p, icept_p, resid_p) = fit(&ln_x, &ln_d);

    let mut env = if resid_e <= resid_p {
        DecayEnvelope::Exponential {
            amplitude: icept_e.exp(),
            // Decay rates must be positive; a growing fit falls back to a
            // nearly flat (maximally conservative) envelope.
            rate: (-slope_e).max(1e-6),
        }
    } else {
        DecayEnvelope::Power {
            amplitude: icept_p.exp(),
            order: (-slope_p).max(0.0),
        }
    };

    // Inflate so the envelope dominates the samples it was fitted on.
    let mut worst: f64 = 1.0;
    for &(x, d) in &pts {
        let e = env.value(x);
        if e > 0.0 && d / e > worst {
            worst = d / e;
        }
    }
    let scale = worst * 2.0;
    match &mut env {
        DecayEnvelope::Exponential { amplitude, .. } => *amplitude *= scale,
        DecayEnvelope::Power { amplitude, .. } => *amplitude *= scale,
    }
    env
}

/// Builds trace bounds directly from user-supplied numbers (the override
/// path for kernels whose Carleman data is known analytically).
pub fn trace_bounds_from_parts(
    sup_diag: f64,
    trace_a: f64,
    trace_a_tilde: f64,
    envelope: DecayEnvelope,
) -> Result<TraceBounds> {
    for (name, v) in [
        ("sup_diag", sup_diag),
        ("trace_a", trace_a),
        ("trace_a_tilde", trace_a_tilde),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(FredholmError::InvalidConfig(format!(
                "trace bound override '{name}' must be finite and nonnegative, got {v}"
            )));
        }
    }
    Ok(TraceBounds {
        sup_diag,
        trace_a,
        trace_a_tilde,
        refinement_error: 0.0,
        envelope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{build_rule, QuadratureKind};
    use approx::assert_relative_eq;

    const SQRT_HALF_PI: f64 = 1.253_314_137_315_500_3;

    fn gl(n: usize, r: f64) -> QuadratureRule {
        build_rule(QuadratureKind::GaussLegendreTruncated, n, r).unwrap()
    }

    #[test]
    fn catalog_entries_instantiate_with_defaults() {
        for name in KernelPair::catalog() {
            let k = KernelPair::builtin(name, &[]).unwrap();
            assert!(k.decay_radius() > 0.0, "{name}");
            // All catalog values are finite at a few sample points.
            for &(s, t) in &[(0.0, 0.0), (1.0, -2.0), (-3.5, 0.25)] {
                k.eval_t(Complex64::new(0.3, -0.7), s, t).unwrap();
            }
        }
        assert!(KernelPair::builtin("banana", &[]).is_err());
    }

    #[test]
    fn parameters_are_validated() {
        assert!(KernelPair::builtin("gaussian-product", &[2.5]).is_err());
        assert!(KernelPair::builtin("exp-decay", &[-1.0]).is_err());
        assert!(KernelPair::builtin("finite-rank-sum", &[0.0]).is_err());
        assert!(KernelPair::builtin("finite-rank-sum", &[2.5]).is_err());
        assert!(KernelPair::builtin("finite-rank-sum", &[2.0, 3.0]).is_err());
        assert!(KernelPair::builtin("separable-gaussian", &[1.0, 2.0]).is_err());
    }

    #[test]
    fn rank_metadata_follows_structure() {
        assert_eq!(
            KernelPair::builtin("separable-gaussian", &[])
                .unwrap()
                .finite_rank(),
            Some(1)
        );
        assert_eq!(
            KernelPair::builtin("gaussian-product", &[])
                .unwrap()
                .finite_rank(),
            Some(2)
        );
        assert_eq!(
            KernelPair::builtin("gaussian-product", &[0.0, 0.0])
                .unwrap()
                .finite_rank(),
            Some(1)
        );
        // Cross-coupled Gaussian is genuinely non-separable.
        assert_eq!(
            KernelPair::builtin("gaussian-product", &[0.4])
                .unwrap()
                .finite_rank(),
            None
        );
        assert_eq!(
            KernelPair::builtin("finite-rank-sum", &[3.0])
                .unwrap()
                .finite_rank(),
            Some(3)
        );
    }

    #[test]
    fn eval_t_combines_factors_linearly() {
        let k = KernelPair::builtin("gaussian-product", &[0.4, 0.7, 0.3]).unwrap();
        let lambda = Complex64::new(0.6, -1.1);
        for &(s, t) in &[(0.3, -0.8), (1.5, 2.0)] {
            let expect = k.h(s, t) - lambda * k.s_part(s, t);
            let got = k.eval_t(lambda, s, t).unwrap();
            assert_relative_eq!(got.re, expect.re, max_relative = 1e-15);
            assert_relative_eq!(got.im, expect.im, max_relative = 1e-15);
        }
    }

    #[test]
    fn expression_kernel_matches_builtin_gaussian() {
        let from_expr =
            KernelPair::from_exprs("expr", None, Some("exp(-s^2 - t^2)"), 4.0).unwrap();
        let builtin = KernelPair::builtin("separable-gaussian", &[]).unwrap();
        for &(s, t) in &[(0.0, 0.0), (0.7, -1.3), (2.0, 2.0)] {
            assert_relative_eq!(
                from_expr.s_part(s, t).re,
                builtin.s_part(s, t).re,
                max_relative = 1e-15
            );
            assert_eq!(from_expr.h(s, t), Complex64::new(0.0, 0.0));
        }
        assert_eq!(from_expr.finite_rank(), None);
    }

    #[test]
    fn non_finite_kernel_reports_the_point() {
        let k = KernelPair::from_exprs("singular", Some("1/(s*t)"), None, 1.0).unwrap();
        match k.eval_h(0.0, 1.0) {
            Err(FredholmError::NonFiniteKernel { s, t }) => {
                assert_eq!(s, 0.0);
                assert_eq!(t, 1.0);
            }
            other => panic!("expected NonFiniteKernel, got {other:?}"),
        }
    }

    #[test]
    fn hermite_functions_are_orthonormal() {
        let rule = gl(128, 9.0);
        for a in 0..4 {
            for b in a..4 {
                let ip = rule
                    .integrate_1d_real(|x| hermite_function(a, x) * hermite_function(b, x))
                    .unwrap();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-12, "⟨ψ{a}, ψ{b}⟩ = {ip}");
            }
        }
    }

    #[test]
    fn rank_one_gaussian_trace_bounds_match_closed_form() {
        // S = a⊗a with a = e^{-x²}: A = Ã = a⊗a, so tr A = ∫a² = sqrt(π/2)
        // and M = sup_x a(x) = 1 (attained at x = 0, between the nodes of an
        // even rule — this exercises the dense-grid extension).
        let k = KernelPair::builtin("separable-gaussian", &[]).unwrap();
        let b = estimate_trace_bounds(&k, &gl(64, 6.0)).unwrap();
        assert_relative_eq!(b.trace_a, SQRT_HALF_PI, max_relative = 1e-8);
        assert_relative_eq!(b.trace_a_tilde, SQRT_HALF_PI, max_relative = 1e-8);
        assert_relative_eq!(b.sup_diag, 1.0, max_relative = 1e-6);
        assert!(
            b.refinement_error < 1e-6,
            "refinement {}",
            b.refinement_error
        );
    }

    #[test]
    fn finite_rank_sum_traces_add_in_quadrature() {
        // A = Σ sqrt(1 + σ_k²) ψ_k⊗ψ_k with σ = (1, 1/2):
        // tr A = sqrt(2) + sqrt(5)/2.
        let k = KernelPair::builtin("finite-rank-sum", &[2.0]).unwrap();
        let b = estimate_trace_bounds(&k, &gl(96, 7.0)).unwrap();
        let expect = 2.0_f64.sqrt() + 1.25_f64.sqrt();
        assert_relative_eq!(b.trace_a, expect, max_relative = 1e-8);
        assert_relative_eq!(b.trace_a_tilde, expect, max_relative = 1e-8);

        // Independent check of M: maximise the closed-form diagonal densely.
        let mut sup = 0.0_f64;
        let mut x = -4.0;
        while x <= 4.0 {
            let d = 2.0_f64.sqrt() * hermite_function(0, x).powi(2)
                + 1.25_f64.sqrt() * hermite_function(1, x).powi(2);
            sup = sup.max(d.sqrt());
            x += 1e-3;
        }
        assert_relative_eq!(b.sup_diag, sup, max_relative = 1e-3);
    }

    #[test]
    fn exp_decay_trace_is_kink_limited_but_close() {
        // a = e^{-|x|}: ∫a² = 1 exactly; the kink at 0 limits the rule, so
        // the tolerance here is loose on purpose.
        let k = KernelPair::builtin("exp-decay", &[]).unwrap();
        let b = estimate_trace_bounds(&k, &gl(256, 14.0)).unwrap();
        assert_relative_eq!(b.trace_a, 1.0, max_relative = 2e-2);
        assert_relative_eq!(b.sup_diag, 1.0, max_relative = 2e-2);
        assert!(b.refinement_error < 2e-2);
    }

    #[test]
    fn gaussian_envelope_dominates_outer_diagonal_and_has_small_tail() {
        let k = KernelPair::builtin("separable-gaussian", &[]).unwrap();
        let rule = gl(64, 6.0);
        let b = estimate_trace_bounds(&k, &rule).unwrap();
        // Beyond the fit onset the true diagonal A(x,x) = e^{-2x²} must sit
        // under the fitted envelope.
        for &x in &[4.0f64, 5.0, 6.0] {
            let truth = (-2.0 * x * x).exp();
            assert!(
                b.envelope.value(x) >= truth,
                "envelope {} < true diag {} at x = {x}",
                b.envelope.value(x),
                truth
            );
        }
        assert!(b.envelope.tail_mass(6.0) < 1e-6);
        assert!(b.envelope.tail_mass(6.0) > 0.0);
    }

    #[test]
    fn rational_envelope_prefers_the_power_law() {
        let k = KernelPair::builtin("separable-rational", &[]).unwrap();
        let rule = build_rule(QuadratureKind::DoubleExponential, 128, 1000.0).unwrap();
        let b = estimate_trace_bounds(&k, &rule).unwrap();
        match b.envelope {
            DecayEnvelope::Power { order, .. } => {
                assert!(order > 2.0, "fitted order {order} should reflect ~x^-4 decay")
            }
            DecayEnvelope::Exponential { .. } => panic!("expected a power-law envelope"),
        }
    }

    #[test]
    fn too_few_nodes_is_rejected() {
        let k = KernelPair::builtin("separable-gaussian", &[]).unwrap();
        let rule = gl(8, 6.0);
        assert!(matches!(
            estimate_trace_bounds(&k, &rule),
            Err(FredholmError::InvalidConfig(_))
        ));
    }

    #[test]
    fn override_constructor_validates_inputs() {
        let env = DecayEnvelope::Exponential {
            amplitude: 1.0,
            rate: 2.0,
        };
        let b = trace_bounds_from_parts(1.0, 1.25, 1.25, env).unwrap();
        assert_eq!(b.refinement_error, 0.0);
        assert!(trace_bounds_from_parts(f64::NAN, 1.0, 1.0, env).is_err());
        assert!(trace_bounds_from_parts(1.0, -1.0, 1.0, env).is_err());
    }
}
