//! Block ("compound") kernel determinants and their λ-derivatives.
//!
//! For points `x_1..x_ν`, `y_1..y_ν` the compound of order ν is
//! `det [ T_λ(x_i, y_j) ]`, the basic building block of the minor series.
//! Because every matrix row is affine in λ (`H-row − λ·S-row`), the
//! determinant is a polynomial in λ of degree at most ν, and its derivatives
//! can be taken *exactly*: the j-th derivative is `j!` times the sum over all
//! j-element row subsets of the determinant with those rows replaced by their
//! λ-derivative `−S`-rows. That row-replacement rule is what
//! [`compound_derivative`] implements — no finite differencing anywhere.

use num_complex::Complex64;

use crate::error::{FredholmError, Result};
use crate::kernels::KernelPair;

/// Hard cap on the block order ν. LU on dense ν×ν complex matrices is
/// perfectly stable well beyond this, but the series layer never needs more,
/// and an explicit ceiling turns runaway requests into a clean error.
pub const MAX_COMPOUND_ORDER: usize = 64;

/// A compound-determinant evaluation request.
///
/// `x_points` select rows, `y_points` columns; the two must have equal
/// length ν (possibly zero — the empty compound is 1 by convention).
/// `derivative_order` is the λ-derivative order j.
#[derive(Debug, Clone)]
pub struct CompoundQuery {
    pub x_points: Vec<f64>,
    pub y_points: Vec<f64>,
    pub lambda: Complex64,
    pub derivative_order: usize,
}

/// Evaluates the plain compound determinant (`derivative_order` must be 0).
pub fn compound(k: &KernelPair, q: &CompoundQuery) -> Result<Complex64> {
    if q.derivative_order != 0 {
        return Err(FredholmError::InvalidConfig(format!(
            "compound() evaluates the underived determinant; got derivative order {} \
             (use compound_derivative)",
            q.derivative_order
        )));
    }
    compound_derivative(k, q)
}

/// Evaluates the j-th λ-derivative of the compound determinant, exactly.
///
/// Returns 0 whenever j exceeds the block order ν, since the determinant is
/// a polynomial of degree ≤ ν in λ.
pub fn compound_derivative(k: &KernelPair, q: &CompoundQuery) -> Result<Complex64> {
    let nu = q.x_points.len();
    if q.y_points.len() != nu {
        return Err(FredholmError::InvalidConfig(format!(
            "compound needs equally many row and column points, got {} and {}",
            nu,
            q.y_points.len()
        )));
    }
    if nu > MAX_COMPOUND_ORDER {
        return Err(FredholmError::CompoundTooLarge {
            requested: nu,
            max: MAX_COMPOUND_ORDER,
        });
    }
    if nu == 0 {
        return Ok(if q.derivative_order == 0 {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        });
    }
    let mut h = vec![Complex64::default(); nu * nu];
    let mut s = vec![Complex64::default(); nu * nu];
    for i in 0..nu {
        for j in 0..nu {
            h[i * nu + j] = k.eval_h(q.x_points[i], q.y_points[j])?;
            s[i * nu + j] = k.eval_s(q.x_points[i], q.y_points[j])?;
        }
    }
    let mut scratch = vec![Complex64::default(); nu * nu];
    Ok(affine_det_derivative(
        &h,
        &s,
        nu,
        q.lambda,
        q.derivative_order,
        &mut scratch,
    ))
}

/// In-place LU determinant with partial pivoting on a row-major n×n buffer.
/// The buffer is destroyed. Singular (or numerically singular) matrices
/// simply return 0 — exactly what a vanishing compound should produce.
pub(crate) fn det_in_place(a: &mut [Complex64], n: usize) -> Complex64 {
    debug_assert_eq!(a.len(), n * n);
    if n == 0 {
        return Complex64::new(1.0, 0.0);
    }
    let mut det = Complex64::new(1.0, 0.0);
    for col in 0..n {
        // Partial pivot: largest magnitude in this column at or below row `col`.
        let mut pivot_row = col;
        let mut pivot_mag = a[col * n + col].norm_sqr();
        for row in (col + 1)..n {
            let mag = a[row * n + col].norm_sqr();
            if mag > pivot_mag {
                pivot_mag = mag;
                pivot_row = row;
            }
        }
        if pivot_mag == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if pivot_row != col {
            for j in col..n {
                a.swap(col * n + j, pivot_row * n + j);
            }
            det = -det;
        }
        let pivot = a[col * n + col];
        det *= pivot;
        for row in (col + 1)..n {
            let factor = a[row * n + col] / pivot;
            if factor.norm_sqr() == 0.0 {
                continue;
            }
            for j in (col + 1)..n {
                let upper = a[col * n + j];
                a[row * n + j] -= factor * upper;
            }
        }
    }
    det
}

/// Exact j-th λ-derivative of `det(Hrows − λ·Srows)` for row-major n×n
/// factor tables, using the row-replacement expansion. `scratch` is resized
/// as needed and trashed.
pub(crate) fn affine_det_derivative(
    h: &[Complex64],
    s: &[Complex64],
    n: usize,
    lambda: Complex64,
    j: usize,
    scratch: &mut Vec<Complex64>,
) -> Complex64 {
    if j > n {
        return Complex64::new(0.0, 0.0);
    }
    scratch.resize(n * n, Complex64::default());
    if j == 0 {
        for i in 0..n * n {
            scratch[i] = h[i] - lambda * s[i];
        }
        return det_in_place(scratch, n);
    }
    // Σ over j-element row subsets: replaced rows become −S, others stay
    // affine; finally scale by j!.
    let mut sum = Complex64::new(0.0, 0.0);
    let mut combo = Combinations::new(n, j);
    while let Some(subset) = combo.next_combination() {
        let mut pick = subset.iter().peekable();
        for row in 0..n {
            let replaced = pick.peek().is_some_and(|&&r| r == row);
            if replaced {
                pick.next();
            }
            for col in 0..n {
                let idx = row * n + col;
                scratch[idx] = if replaced {
                    -s[idx]
                } else {
                    h[idx] - lambda * s[idx]
                };
            }
        }
        sum += det_in_place(scratch, n);
    }
    let mut factorial = 1.0;
    for m in 2..=j {
        factorial *= m as f64;
    }
    sum * factorial
}

/// Lexicographic k-subsets of `0..n`, visited in place.
///
/// `from_rank` jumps straight to a given position in the lexicographic
/// order (combinatorial number system), which is how the series layer
/// splits one enumeration into deterministic chunks for parallel workers.
pub(crate) struct Combinations {
    n: usize,
    k: usize,
    state: Vec<usize>,
    started: bool,
    exhausted: bool,
}

impl Combinations {
    pub(crate) fn new(n: usize, k: usize) -> Self {
        Combinations {
            n,
            k,
            state: (0..k).collect(),
            started: false,
            exhausted: k > n,
        }
    }

    /// Starts at lexicographic position `rank` instead of 0.
    pub(crate) fn from_rank(n: usize, k: usize, mut rank: u128) -> Self {
        if k > n || rank >= binomial(n, k) {
            return Combinations {
                n,
                k,
                state: Vec::new(),
                started: false,
                exhausted: true,
            };
        }
        // Combinatorial number system: pick elements left to right; choosing
        // value v for the next slot skips C(n − v − 1, remaining − 1)
        // combinations for every value below v.
        let mut state = Vec::with_capacity(k);
        let mut next_value = 0usize;
        for slot in 0..k {
            let remaining = k - slot - 1;
            let mut v = next_value;
            loop {
                let skip = binomial(n.saturating_sub(v + 1), remaining);
                if rank < skip {
                    break;
                }
                rank -= skip;
                v += 1;
            }
            state.push(v);
            next_value = v + 1;
        }
        Combinations {
            n,
            k,
            state,
            started: false,
            exhausted: false,
        }
    }

    /// Advances to the next combination and returns it, or `None` when done.
    pub(crate) fn next_combination(&mut self) -> Option<&[usize]> {
        if self.exhausted {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(&self.state);
        }
        if self.k == 0 {
            self.exhausted = true;
            return None;
        }
        // Find the rightmost slot that can still move right.
        let mut i = self.k;
        loop {
            if i == 0 {
                self.exhausted = true;
                return None;
            }
            i -= 1;
            if self.state[i] < self.n - self.k + i {
                break;
            }
        }
        self.state[i] += 1;
        for slot in (i + 1)..self.k {
            self.state[slot] = self.state[slot - 1] + 1;
        }
        Some(&self.state)
    }
}

/// Binomial coefficient in u128, saturating on overflow (the series layer
/// treats saturation as "over any sane budget").
pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}
