//! The README's library example, kept compiling.

use fredholm_core::kernels::estimate_trace_bounds;
use fredholm_core::quadrature::build_rule;
use fredholm_core::solver::{solve, RightHandSide, SolveOptions};
use fredholm_core::spectral_index::find_index;
use fredholm_core::{Complex, IndexSearchConfig, KernelPair, QuadratureKind};

fn main() -> fredholm_core::Result<()> {
    let kernel = KernelPair::builtin("separable-gaussian", &[])?;
    let rule = build_rule(QuadratureKind::GaussLegendreTruncated, 64, 6.0)?;
    let bounds = estimate_trace_bounds(&kernel, &rule)?;

    // Classify λ — at a regular point the index is (0, 0) and the equation
    // is uniquely solvable; at a characteristic value d > 0 and the
    // Fredholm alternative takes over.
    let lambda = Complex::new(0.5, 0.0);
    let index = find_index(&kernel, &rule, &bounds, lambda, &IndexSearchConfig::default())?;

    let g = RightHandSide::from_fn(|s| Complex::new((-s * s).exp(), 0.0), &rule)?;
    let report = solve(&kernel, &rule, &bounds, &index, &g, &SolveOptions::default())?;
    assert!(report.solvable);
    let f = report.particular.as_ref().unwrap();
    println!("f(0) = {}", f.eval(0.0)?);
    Ok(())
}
