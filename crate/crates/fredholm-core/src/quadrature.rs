//! Quadrature rules for integrals over the whole real line.
//!
//! Every rule is stored in "plain sum" form: `∫ f ≈ Σ w_k f(x_k)` with no
//! implicit weight function, so the same rule can be handed to any consumer
//! that just wants nodes and weights. Rules differ in how they spend their
//! nodes:
//!
//! * [`QuadratureKind::GaussLegendreTruncated`] — Gauss–Legendre on
//!   `[-R, R]`. The workhorse: spectrally accurate for analytic integrands
//!   once the truncation radius covers the integrand's effective support.
//! * [`QuadratureKind::GaussHermiteWeighted`] — Gauss–Hermite nodes with the
//!   `e^{x²}` factor folded into the weights. Exact for polynomials times a
//!   Gaussian, which makes it the natural oracle rule for Hermite-type
//!   kernels; node counts are capped because the folded weights span an
//!   enormous dynamic range.
//! * [`QuadratureKind::DoubleExponential`] — the sinh-sinh transformation,
//!   robust for integrands with slow (e.g. algebraic) decay where a fixed
//!   truncation radius would have to be extreme.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{FredholmError, Result};

/// Families of quadrature rules over ℝ. See the module docs for trade-offs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureKind {
    GaussLegendreTruncated,
    GaussHermiteWeighted,
    DoubleExponential,
}

impl QuadratureKind {
    /// Inclusive node-count range supported by this kind.
    pub fn node_range(self) -> (usize, usize) {
        match self {
            QuadratureKind::GaussLegendreTruncated => (2, 2048),
            // Folded Gauss–Hermite weights reach ~1e-215 near n = 256;
            // beyond that they underflow and the rule silently loses nodes.
            QuadratureKind::GaussHermiteWeighted => (1, 256),
            QuadratureKind::DoubleExponential => (4, 4096),
        }
    }
}

impl fmt::Display for QuadratureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            QuadratureKind::GaussLegendreTruncated => "gauss-legendre-truncated",
            QuadratureKind::GaussHermiteWeighted => "gauss-hermite-weighted",
            QuadratureKind::DoubleExponential => "double-exponential",
        };
        f.write_str(name)
    }
}

impl FromStr for QuadratureKind {
    type Err = FredholmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gauss-legendre-truncated" => Ok(QuadratureKind::GaussLegendreTruncated),
            "gauss-hermite-weighted" => Ok(QuadratureKind::GaussHermiteWeighted),
            "double-exponential" => Ok(QuadratureKind::DoubleExponential),
            other => Err(FredholmError::UnsupportedQuadrature(other.to_string())),
        }
    }
}

/// A concrete rule: `∫_ℝ f ≈ Σ w_k f(x_k)`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub kind: QuadratureKind,
    /// Radius beyond which the rule sees nothing: `max |x_k|` is at most
    /// this, and tail estimates for decaying integrands start here.
    pub truncation_radius: f64,
}

/// Builds an `n_nodes`-point rule of the given kind.
///
/// `radius` is the truncation radius for the Gauss–Legendre and
/// double-exponential families. The Gauss–Hermite family places its own
/// nodes, and `radius` is ignored.
pub fn build_rule(kind: QuadratureKind, n_nodes: usize, radius: f64) -> Result<QuadratureRule> {
    let (min, max) = kind.node_range();
    if n_nodes < min || n_nodes > max {
        return Err(FredholmError::NodeCountOutOfRange {
            requested: n_nodes,
            min,
            max,
        });
    }
    if kind != QuadratureKind::GaussHermiteWeighted && !(radius.is_finite() && radius > 0.0) {
        return Err(FredholmError::InvalidConfig(format!(
            "truncation radius must be positive and finite, got {radius}"
        )));
    }
    match kind {
        QuadratureKind::GaussLegendreTruncated => gauss_legendre(n_nodes, radius),
        QuadratureKind::GaussHermiteWeighted => gauss_hermite_folded(n_nodes),
        QuadratureKind::DoubleExponential => double_exponential(n_nodes, radius),
    }
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Applies the rule to `f`, rejecting non-finite integrand values.
    pub fn integrate_1d(&self, f: impl Fn(f64) -> Complex64) -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            let v = f(x);
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(FredholmError::NonFiniteIntegrand { x });
            }
            acc += w * v;
        }
        Ok(acc)
    }

    /// Real-valued convenience wrapper over [`Self::integrate_1d`].
    pub fn integrate_1d_real(&self, f: impl Fn(f64) -> f64) -> Result<f64> {
        self.integrate_1d(|x| Complex64::new(f(x), 0.0)).map(|v| v.re)
    }

    /// The same rule with twice the nodes — the standard refinement used to
    /// attach an error estimate to rule-dependent quantities.
    pub fn refined(&self) -> Result<QuadratureRule> {
        let (_, max) = self.kind.node_range();
        let n = (self.len() * 2).min(max);
        build_rule(self.kind, n, self.truncation_radius)
    }
}

fn gauss_legendre(n: usize, radius: f64) -> Result<QuadratureRule> {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    // Roots come in ± pairs; solve for the positive half and mirror.
    for i in 0..n.div_ceil(2) {
        // Chebyshev-like initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut converged = false;
        for _ in 0..64 {
            let (p, dp) = legendre_and_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(FredholmError::NodeGeneration(n));
        }
        let (_, dp) = legendre_and_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // The guess ordering puts large roots first; store ascending.
        nodes[i] = -x;
        weights[i] = w;
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    for x in &mut nodes {
        *x *= radius;
    }
    for w in &mut weights {
        *w *= radius;
    }
    Ok(QuadratureRule {
        nodes,
        weights,
        kind: QuadratureKind::GaussLegendreTruncated,
        truncation_radius: radius,
    })
}

/// Evaluates `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p_next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = p_next;
    }
    let dp = n as f64 * (x * p - p_prev) / (x * x - 1.0);
    (p, dp)
}

/// Gauss–Hermite by Golub–Welsch, with the `e^{x²}` factor folded into the
/// weights so the rule integrates plain functions over ℝ.
fn gauss_hermite_folded(n: usize) -> Result<QuadratureRule> {
    let sqrt_pi = std::f64::consts::PI.sqrt();
    if n == 1 {
        return Ok(QuadratureRule {
            nodes: vec![0.0],
            weights: vec![sqrt_pi],
            kind: QuadratureKind::GaussHermiteWeighted,
            truncation_radius: f64::INFINITY,
        });
    }
    // Jacobi matrix of the (physicists') Hermite polynomials: zero diagonal,
    // off-diagonal β_k = sqrt(k/2).
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let beta = (k as f64 / 2.0).sqrt();
        jacobi[(k, k - 1)] = beta;
        jacobi[(k - 1, k)] = beta;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let x = eig.eigenvalues[j];
            let q0 = eig.eigenvectors[(0, j)];
            // Classical weight, then fold: w̃ = w e^{x²}.
            let w = sqrt_pi * q0 * q0;
            (x, w * (x * x).exp())
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let radius = pairs.last().map(|p| p.0.abs()).unwrap_or(0.0);
    let (nodes, weights) = pairs.into_iter().unzip();
    Ok(QuadratureRule {
        nodes,
        weights,
        kind: QuadratureKind::GaussHermiteWeighted,
        truncation_radius: radius,
    })
}

/// Sinh-sinh double-exponential rule: `x = sinh((π/2) sinh u)` on a uniform
/// `u`-grid, with the step chosen so the extreme node lands at `radius`.
fn double_exponential(n: usize, radius: f64) -> Result<QuadratureRule> {
    let c = std::f64::consts::FRAC_PI_2;
    let u_max = ((radius.asinh()) / c).asinh();
    let h = 2.0 * u_max / (n as f64 - 1.0);
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for k in 0..n {
        let u = -u_max + h * k as f64;
        let inner = c * u.sinh();
        nodes.push(inner.sinh());
        weights.push(h * c * u.cosh() * inner.cosh());
    }
    Ok(QuadratureRule {
        nodes,
        weights,
        kind: QuadratureKind::DoubleExponential,
        truncation_radius: radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const SQRT_PI: f64 = 1.772_453_850_905_515_9;
    const SQRT_HALF_PI: f64 = 1.253_314_137_315_500_3;

    #[test]
    fn two_point_gauss_legendre_is_the_textbook_rule() {
        let r = build_rule(QuadratureKind::GaussLegendreTruncated, 2, 1.0).unwrap();
        let inv_sqrt3 = 1.0 / 3.0_f64.sqrt();
        assert_relative_eq!(r.nodes[0], -inv_sqrt3, max_relative = 1e-14);
        assert_relative_eq!(r.nodes[1], inv_sqrt3, max_relative = 1e-14);
        assert_relative_eq!(r.weights[0], 1.0, max_relative = 1e-14);
        assert_relative_eq!(r.weights[1], 1.0, max_relative = 1e-14);
    }

    #[test]
    fn gauss_legendre_is_exact_for_low_degree_polynomials() {
        // n points integrate degree ≤ 2n-1 exactly.
        let r = build_rule(QuadratureKind::GaussLegendreTruncated, 3, 1.0).unwrap();
        let quartic = r.integrate_1d_real(|x| x.powi(4)).unwrap();
        assert_relative_eq!(quartic, 0.4, max_relative = 1e-14);
        let quintic = r.integrate_1d_real(|x| x.powi(5) + 2.0 * x).unwrap();
        assert!(quintic.abs() < 1e-14);
    }

    #[test]
    fn gauss_legendre_gaussian_integral() {
        // ∫ exp(-2x²) dx = sqrt(π/2); the tail beyond |x| = 6 is ~1e-32.
        let r = build_rule(QuadratureKind::GaussLegendreTruncated, 64, 6.0).unwrap();
        let v = r.integrate_1d_real(|x| (-2.0 * x * x).exp()).unwrap();
        assert_relative_eq!(v, SQRT_HALF_PI, max_relative = 1e-12);
    }

    #[test]
    fn gauss_hermite_small_rules_match_closed_forms() {
        let r1 = build_rule(QuadratureKind::GaussHermiteWeighted, 1, 0.0).unwrap();
        assert_eq!(r1.nodes, vec![0.0]);
        assert_relative_eq!(r1.weights[0], SQRT_PI, max_relative = 1e-14);

        let r2 = build_rule(QuadratureKind::GaussHermiteWeighted, 2, 0.0).unwrap();
        let inv_sqrt2 = 1.0 / 2.0_f64.sqrt();
        assert_relative_eq!(r2.nodes[1], inv_sqrt2, max_relative = 1e-12);
        // Classical weight sqrt(π)/2 at x = 1/sqrt(2), folded by e^{1/2}.
        assert_relative_eq!(
            r2.weights[1],
            SQRT_PI / 2.0 * 0.5_f64.exp(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn gauss_hermite_integrates_gaussian_polynomials_exactly() {
        let r = build_rule(QuadratureKind::GaussHermiteWeighted, 20, 0.0).unwrap();
        let total = r.integrate_1d_real(|x| (-x * x).exp()).unwrap();
        assert_relative_eq!(total, SQRT_PI, max_relative = 1e-13);
        let second_moment = r.integrate_1d_real(|x| x * x * (-x * x).exp()).unwrap();
        assert_relative_eq!(second_moment, SQRT_PI / 2.0, max_relative = 1e-13);
        // Odd moments vanish by symmetry of the rule.
        let odd = r.integrate_1d_real(|x| x.powi(3) * (-x * x).exp()).unwrap();
        assert!(odd.abs() < 1e-13);
    }

    #[test]
    fn double_exponential_handles_fast_and_slow_decay() {
        let r = build_rule(QuadratureKind::DoubleExponential, 128, 8.0).unwrap();
        let g = r.integrate_1d_real(|x| (-x * x).exp()).unwrap();
        assert_relative_eq!(g, SQRT_PI, max_relative = 1e-12);

        // Algebraic decay needs a huge radius; the sinh-sinh map reaches it
        // with an ordinary node count.
        let r = build_rule(QuadratureKind::DoubleExponential, 400, 1e8).unwrap();
        let lorentz = r.integrate_1d_real(|x| 1.0 / (1.0 + x * x)).unwrap();
        assert_relative_eq!(lorentz, std::f64::consts::PI, max_relative = 1e-7);
    }

    #[test]
    fn node_counts_are_validated() {
        assert!(build_rule(QuadratureKind::GaussLegendreTruncated, 1, 1.0).is_err());
        assert!(build_rule(QuadratureKind::GaussLegendreTruncated, 4096, 1.0).is_err());
        assert!(build_rule(QuadratureKind::GaussHermiteWeighted, 257, 0.0).is_err());
        assert!(build_rule(QuadratureKind::GaussLegendreTruncated, 8, -1.0).is_err());
    }

    #[test]
    fn refinement_doubles_nodes_and_keeps_the_radius() {
        let r = build_rule(QuadratureKind::GaussLegendreTruncated, 16, 5.0).unwrap();
        let fine = r.refined().unwrap();
        assert_eq!(fine.len(), 32);
        assert_eq!(fine.truncation_radius, 5.0);
        assert_eq!(fine.kind, r.kind);
    }

    #[test]
    fn non_finite_integrands_are_reported() {
        let r = build_rule(QuadratureKind::GaussLegendreTruncated, 8, 2.0).unwrap();
        let res = r.integrate_1d_real(|x| 1.0 / x);
        // No node at zero for even n, so this passes…
        assert!(res.is_ok());
        let res = r.integrate_1d_real(|_| f64::NAN);
        assert!(matches!(
            res,
            Err(FredholmError::NonFiniteIntegrand { .. })
        ));
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in [
            QuadratureKind::GaussLegendreTruncated,
            QuadratureKind::GaussHermiteWeighted,
            QuadratureKind::DoubleExponential,
        ] {
            let name = kind.to_string();
            assert_eq!(name.parse::<QuadratureKind>().unwrap(), kind);
        }
        assert!("simpson".parse::<QuadratureKind>().is_err());
    }

    #[test]
    fn gauss_hermite_node_growth_matches_theory() {
        // Largest node grows like sqrt(2n); sanity-check the Golub–Welsch path.
        let r = build_rule(QuadratureKind::GaussHermiteWeighted, 64, 0.0).unwrap();
        let max = r.nodes.last().unwrap();
        assert!(*max > 9.0 && *max < 12.0, "max node {max}");
        assert!(r.weights.iter().all(|w| w.is_finite() && *w > 0.0));
    }
}
