//! Benchmarks for the three cost centers: single compound determinants
//! (dense LU per tuple), full minor-series evaluations (tuple enumeration),
//! and the discrete determinant identity check.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use num_complex::Complex64;

use fredholm_core::compounds::{compound, CompoundQuery};
use fredholm_core::kernels::estimate_trace_bounds;
use fredholm_core::nystrom::{discretize, von_koch_check};
use fredholm_core::quadrature::build_rule;
use fredholm_core::series::{minor_dp, MinorRequest};
use fredholm_core::{KernelPair, QuadratureKind};

fn compound_orders(c: &mut Criterion) {
    let k = KernelPair::builtin("gaussian-product", &[0.4]).unwrap();
    let mut group = c.benchmark_group("compound");
    for nu in [4usize, 8, 16] {
        let points: Vec<f64> = (0..nu).map(|i| -2.0 + 4.0 * i as f64 / (nu - 1) as f64).collect();
        let query = CompoundQuery {
            x_points: points.clone(),
            y_points: points,
            lambda: Complex64::new(0.7, 0.3),
            derivative_order: 0,
        };
        group.bench_with_input(BenchmarkId::from_parameter(nu), &query, |b, q| {
            b.iter(|| compound(&k, black_box(q)).unwrap());
        });
    }
    group.finish();
}

fn determinant_series(c: &mut Criterion) {
    let mut group = c.benchmark_group("minor_dp");

    // Exactly truncating kernel on a fine rule: one level survives.
    let rank_one = KernelPair::builtin("separable-gaussian", &[]).unwrap();
    let fine = build_rule(QuadratureKind::GaussLegendreTruncated, 64, 6.0).unwrap();
    let bounds_one = estimate_trace_bounds(&rank_one, &fine).unwrap();
    group.bench_function("rank-one, 64 nodes", |b| {
        let req = MinorRequest {
            p: 0,
            s_points: vec![],
            t_points: vec![],
            lambda: Complex64::new(0.5, 0.0),
            derivative_order: 0,
            target_eps: 1e-8,
        };
        b.iter(|| minor_dp(&rank_one, &fine, black_box(&req), &bounds_one, 1_000_000).unwrap());
    });

    // Infinite-rank coupling on a small rule: the full tuple cascade runs.
    let coupled = KernelPair::builtin("gaussian-product", &[0.4]).unwrap();
    let coarse = build_rule(QuadratureKind::GaussLegendreTruncated, 16, 6.7).unwrap();
    let bounds_coupled = estimate_trace_bounds(&coupled, &coarse).unwrap();
    group.bench_function("coupled, 16 nodes", |b| {
        let req = MinorRequest {
            p: 0,
            s_points: vec![],
            t_points: vec![],
            lambda: Complex64::new(1.0, 0.0),
            derivative_order: 0,
            target_eps: 1e-6,
        };
        b.iter(|| minor_dp(&coupled, &coarse, black_box(&req), &bounds_coupled, 20_000_000).unwrap());
    });
    group.finish();
}

fn von_koch_identity(c: &mut Criterion) {
    let k = KernelPair::builtin("gaussian-product", &[0.4]).unwrap();
    let rule = build_rule(QuadratureKind::GaussLegendreTruncated, 12, 6.7).unwrap();
    let sys = discretize(&k, &rule, Complex64::new(1.0, 0.0)).unwrap();
    c.bench_function("von_koch, 12 nodes", |b| {
        b.iter(|| von_koch_check(black_box(&sys)).unwrap());
    });
}

criterion_group!(benches, compound_orders, determinant_series, von_koch_identity);
criterion_main!(benches);
