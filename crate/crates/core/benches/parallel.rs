//! Sequential vs rayon for the data-parallel kernels.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gjms_core::exec::Mode;
use gjms_core::geometry::{
    build_lattice, integrate_with, GridFunction, ManifoldModel, QuadratureWeights, TrigPolynomial,
};
use gjms_core::heisenberg::{critical_s, negative_count_sweep, AnalyticOperator};
use gjms_core::operators::assemble_laplacian_with;
use std::hint::black_box;

fn label(mode: Mode) -> &'static str {
    match mode {
        Mode::Sequential => "sequential",
        Mode::Parallel => "parallel",
    }
}

fn heisenberg(n: usize) -> (ManifoldModel, gjms_core::geometry::Lattice) {
    let m = ManifoldModel::heisenberg(1, critical_s(1)).unwrap();
    let l = build_lattice(&m, n).unwrap();
    (m, l)
}

fn matvec(c: &mut Criterion) {
    let mut g = c.benchmark_group("matvec");
    for n in [16, 32] {
        let (m, l) = heisenberg(n);
        let a = assemble_laplacian_with(Mode::default(), &m, &l).unwrap().stiffness;
        let x: Vec<f64> = (0..a.ncols()).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut y = vec![0.0; a.nrows()];
        for mode in Mode::all() {
            g.bench_with_input(BenchmarkId::new(label(mode), n), &n, |b, _| {
                b.iter(|| a.matvec_into(mode, black_box(&x), &mut y))
            });
        }
    }
    g.finish();
}

fn assembly(c: &mut Criterion) {
    let mut g = c.benchmark_group("assembly");
    g.sample_size(10);
    let m =
        ManifoldModel::heisenberg(1, 2.0).unwrap().with_conformal_factor(TrigPolynomial::cosine(3, 0, 0.2)).unwrap();
    let l = build_lattice(&m, 24).unwrap();
    for mode in Mode::all() {
        g.bench_function(label(mode), |b| b.iter(|| assemble_laplacian_with(mode, black_box(&m), &l).unwrap()));
    }
    g.finish();
}

fn count_sweep(c: &mut Criterion) {
    let mut g = c.benchmark_group("negative_count_sweep");
    g.sample_size(10);
    let s = [5.0, 10.0, 20.0, 40.0];
    for mode in Mode::all() {
        g.bench_function(label(mode), |b| {
            b.iter(|| negative_count_sweep(mode, AnalyticOperator::Yamabe, 1, black_box(&s)).unwrap())
        });
    }
    g.finish();
}

fn quadrature(c: &mut Criterion) {
    let mut g = c.benchmark_group("quadrature");
    let (m, l) = heisenberg(32);
    let w = QuadratureWeights::for_model(&m, &l).unwrap();
    let f = GridFunction::sample(&l, |p| (6.0 * p[0]).cos() * (4.0 * p[1]).sin());
    for mode in Mode::all() {
        g.bench_function(label(mode), |b| b.iter(|| integrate_with(mode, black_box(&f), &w).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, matvec, assembly, count_sweep, quadrature);
criterion_main!(benches);
