//! Index search: null-space dimension and nonvanishing base points.
//!
//! At a fixed spectral parameter `λ₀` the minors `D_p(λ₀)` vanish for all
//! `p` below some least order `d`, and `d` is the dimension of the
//! homogeneous null space. This module locates `d` numerically: it scans
//! `p = 0, 1, …` until a minor can be pushed above a calibrated zero
//! threshold, keeping the maximizing evaluation points as the base points
//! everything in [`crate::solver`] is built on.
//!
//! "Nonzero" is meaningless at machine precision without a scale, so the
//! threshold `τ` is either supplied or derived from the determinant's size
//! near `λ₀`, and the search refuses to run when `τ` is not comfortably
//! above the error bars reported by the series evaluator.
//!
//! A derivative shell `r = 0, 1, 2` wraps the order scan. Theory says the
//! first nonvanishing minor is found already at `r = 0`; the shell verifies
//! that instead of assuming it, and any `r > 0` outcome is flagged as an
//! anomaly in the report.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{FredholmError, Result};
use crate::kernels::{KernelPair, TraceBounds};
use crate::quadrature::QuadratureRule;
use crate::series::{minor_dp, minor_dp_scan, EvalParams, MinorRequest};

/// Outcome of an index search: the orders `(d, r)`, base points where the
/// `d`-th minor provably clears the zero threshold, and its value `δ` there.
#[derive(Debug, Clone)]
pub struct IndexReport {
    /// Spectral parameter the search ran at.
    pub lambda0: Complex64,
    /// Least minor order with a nonvanishing value (null-space dimension).
    pub d: usize,
    /// Derivative order at which the nonvanishing minor was found.
    pub r: usize,
    /// First-argument base points `s′_1, …, s′_d`.
    pub base_s: Vec<f64>,
    /// Second-argument base points `t′_1, …, t′_d`.
    pub base_t: Vec<f64>,
    /// Value of `D_d^{(r)}` at the base points; `|δ| > τ` by construction.
    pub delta: Complex64,
    /// Number of candidate points per coordinate in the search grid.
    pub search_grid_size: usize,
    /// Zero threshold the search ran with.
    pub zero_threshold: f64,
    /// True when `r > 0`: theory predicts `r = 0`, so this marks a numerical
    /// anomaly that should be investigated, not consumed silently.
    pub anomalous_r: bool,
}

/// Tunables for [`find_index`].
#[derive(Debug, Clone)]
pub struct IndexSearchConfig {
    /// Zero threshold `τ`; `None` derives one from the determinant scale
    /// near `λ₀` (suitable when the series error bars are far below it, as
    /// with exactly truncating finite-rank kernels).
    pub zero_threshold: Option<f64>,
    /// Largest minor order searched (`d_max`).
    pub max_order: usize,
    /// Largest derivative order tried in the verification shell.
    pub max_derivative: usize,
    /// Candidate base-point coordinates, shared by both sides.
    pub candidate_grid: Vec<f64>,
    /// Accuracy and cost targets for the underlying series evaluations.
    pub eval: EvalParams,
}

impl Default for IndexSearchConfig {
    fn default() -> Self {
        Self {
            zero_threshold: None,
            max_order: 6,
            max_derivative: 2,
            candidate_grid: default_candidate_grid(),
            eval: EvalParams::default(),
        }
    }
}

/// Thirteen evenly spaced candidate points on `[-3, 3]`.
pub fn default_candidate_grid() -> Vec<f64> {
    (0..13).map(|i| -3.0 + 0.5 * i as f64).collect()
}

/// How far a golden-section refinement may wander from a coarse base point.
const REFINE_HALF_WIDTH: f64 = 0.75;

/// Margin the threshold must keep above the series error bars.
const NOISE_MARGIN: f64 = 10.0;

struct Search<'a> {
    k: &'a KernelPair,
    q: &'a QuadratureRule,
    b: &'a TraceBounds,
    lambda0: Complex64,
    eval: EvalParams,
    /// Largest truncation + quadrature bar seen across all evaluations.
    max_error_bar: f64,
}

impl<'a> Search<'a> {
    fn minor_abs(
        &mut self,
        p: usize,
        s_points: &[f64],
        t_points: &[f64],
        derivative_order: usize,
    ) -> Result<Complex64> {
        let req = MinorRequest {
            p,
            s_points: s_points.to_vec(),
            t_points: t_points.to_vec(),
            lambda: self.lambda0,
            derivative_order,
            target_eps: self.eval.target_eps,
        };
        let out = minor_dp(self.k, self.q, &req, self.b, self.eval.max_tuples)?;
        self.max_error_bar = self.max_error_bar.max(out.truncation_bound + out.quadrature_tail);
        Ok(out.value)
    }

    /// Greedy extension step: append the grid pair maximizing `|D_p^{(r)}|`
    /// to the chain. Candidate evaluations are independent and run in
    /// parallel; the choice among them is a deterministic argmax.
    fn extend_chain(
        &mut self,
        grid: &[f64],
        chain_s: &mut Vec<f64>,
        chain_t: &mut Vec<f64>,
        derivative_order: usize,
    ) -> Result<Complex64> {
        let p = chain_s.len() + 1;
        let free_s: Vec<f64> =
            grid.iter().copied().filter(|s| !chain_s.contains(s)).collect();
        let free_t: Vec<f64> =
            grid.iter().copied().filter(|t| !chain_t.contains(t)).collect();
        let mut candidates = Vec::with_capacity(free_s.len() * free_t.len());
        for &s in &free_s {
            for &t in &free_t {
                candidates.push((s, t));
            }
        }
        let evals: Vec<(Complex64, f64, f64, f64)> = candidates
            .par_iter()
            .map(|&(s, t)| {
                let mut sp = chain_s.clone();
                let mut tp = chain_t.clone();
                sp.push(s);
                tp.push(t);
                let req = MinorRequest {
                    p,
                    s_points: sp,
                    t_points: tp,
                    lambda: self.lambda0,
                    derivative_order,
                    target_eps: self.eval.target_eps,
                };
                minor_dp(self.k, self.q, &req, self.b, self.eval.max_tuples)
                    .map(|mv| (mv.value, mv.truncation_bound + mv.quadrature_tail, s, t))
            })
            .collect::<Result<Vec<_>>>()?;
        for &(_, bar, _, _) in &evals {
            self.max_error_bar = self.max_error_bar.max(bar);
        }
        let best = evals
            .iter()
            .max_by(|a, b| a.0.norm().total_cmp(&b.0.norm()))
            .expect("candidate grid is nonempty");
        chain_s.push(best.2);
        chain_t.push(best.3);
        Ok(best.0)
    }
}

/// Derive a zero threshold from the determinant's magnitude near `λ₀`.
fn auto_threshold(
    k: &KernelPair,
    q: &QuadratureRule,
    b: &TraceBounds,
    lambda0: Complex64,
    eval: &EvalParams,
) -> Result<f64> {
    let h = 0.1 * lambda0.norm().max(1.0);
    let probes = [
        lambda0,
        lambda0 + Complex64::new(h, 0.0),
        lambda0 - Complex64::new(h, 0.0),
        lambda0 + Complex64::new(0.0, h),
        lambda0 - Complex64::new(0.0, h),
    ];
    let scan =
        minor_dp_scan(k, q, 0, &[], &[], &probes, b, eval.target_eps, eval.max_tuples)?;
    let scale = scan.iter().map(|mv| mv.value.norm()).fold(0.0f64, f64::max).max(1.0);
    Ok(1e4 * f64::EPSILON * scale)
}

/// Find the least `(r, p)` with `max |D_p^{(r)}(λ₀)| > τ` over base-point
/// tuples from the candidate grid, built greedily one pair at a time.
pub fn find_index(
    k: &KernelPair,
    q: &QuadratureRule,
    b: &TraceBounds,
    lambda0: Complex64,
    cfg: &IndexSearchConfig,
) -> Result<IndexReport> {
    if cfg.candidate_grid.is_empty() {
        return Err(FredholmError::InvalidParameter("index search needs at least one candidate point".into()));
    }
    if let Some(bad) = cfg.candidate_grid.iter().find(|v| !v.is_finite()) {
        return Err(FredholmError::InvalidParameter(format!("candidate points must be finite, got {bad}")));
    }
    let tau = match cfg.zero_threshold {
        Some(t) if t > 0.0 => t,
        Some(t) => {
            return Err(FredholmError::InvalidParameter(format!("threshold must be positive, got {t}")))
        }
        None => auto_threshold(k, q, b, lambda0, &cfg.eval)?,
    };
    let mut search =
        Search { k, q, b, lambda0, eval: cfg.eval, max_error_bar: 0.0 };
    for r in 0..=cfg.max_derivative {
        let mut chain_s: Vec<f64> = Vec::new();
        let mut chain_t: Vec<f64> = Vec::new();
        for p in 0..=cfg.max_order {
            let value = if p == 0 {
                search.minor_abs(0, &[], &[], r)?
            } else {
                search.extend_chain(&cfg.candidate_grid, &mut chain_s, &mut chain_t, r)?
            };
            if value.norm() > tau {
                ensure_above_noise(tau, search.max_error_bar)?;
                return Ok(IndexReport {
                    lambda0,
                    d: p,
                    r,
                    base_s: chain_s,
                    base_t: chain_t,
                    delta: value,
                    search_grid_size: cfg.candidate_grid.len(),
                    zero_threshold: tau,
                    anomalous_r: r > 0,
                });
            }
        }
    }
    ensure_above_noise(tau, search.max_error_bar)?;
    Err(FredholmError::IndexNotFound {
        lambda: lambda0,
        d_max: cfg.max_order,
        r_max: cfg.max_derivative,
        tau,
    })
}

fn ensure_above_noise(tau: f64, error_bar: f64) -> Result<()> {
    let required = NOISE_MARGIN * error_bar;
    if tau < required {
        return Err(FredholmError::ThresholdBelowNoise { tau, error_bar, required });
    }
    Ok(())
}

/// Polish coarse base points by coordinate-wise golden-section maximization
/// of `|D_d^{(r)}|`; the result never has a smaller `|δ|` than the input.
pub fn refine_base_points(
    k: &KernelPair,
    q: &QuadratureRule,
    b: &TraceBounds,
    d: usize,
    coarse: &IndexReport,
    eval: &EvalParams,
) -> Result<IndexReport> {
    if coarse.d != d {
        return Err(FredholmError::InvalidParameter(format!("refinement order {d} does not match the report's {}", coarse.d)));
    }
    if d == 0 {
        return Ok(coarse.clone());
    }
    let mut best_s = coarse.base_s.clone();
    let mut best_t = coarse.base_t.clone();
    let mut best_val = coarse.delta;
    for _sweep in 0..2 {
        for side in 0..2 {
            for i in 0..d {
                let center = if side == 0 { best_s[i] } else { best_t[i] };
                let (lo, hi) = (center - REFINE_HALF_WIDTH, center + REFINE_HALF_WIDTH);
                let mut trial_s = best_s.clone();
                let mut trial_t = best_t.clone();
                let (x_star, v_star) = golden_section_max(lo, hi, |x| {
                    if side == 0 {
                        trial_s[i] = x;
                    } else {
                        trial_t[i] = x;
                    }
                    let req = MinorRequest {
                        p: d,
                        s_points: trial_s.clone(),
                        t_points: trial_t.clone(),
                        lambda: coarse.lambda0,
                        derivative_order: coarse.r,
                        target_eps: eval.target_eps,
                    };
                    Ok(minor_dp(k, q, &req, b, eval.max_tuples)?.value)
                })?;
                if v_star.norm() > best_val.norm() {
                    if side == 0 {
                        best_s[i] = x_star;
                    } else {
                        best_t[i] = x_star;
                    }
                    best_val = v_star;
                }
            }
        }
    }
    Ok(IndexReport {
        base_s: best_s,
        base_t: best_t,
        delta: best_val,
        ..coarse.clone()
    })
}

/// Golden-section search for the maximizer of `|f|` on `[lo, hi]`.
fn golden_section_max(
    lo: f64,
    hi: f64,
    mut f: impl FnMut(f64) -> Result<Complex64>,
) -> Result<(f64, Complex64)> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..30 {
        if fc.norm() > fd.norm() {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    if fc.norm() > fd.norm() {
        Ok((c, fc))
    } else {
        Ok((d, fd))
    }
}
