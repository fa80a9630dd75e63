use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use porosurf::operator::{estimate_rank, thin_qr};
use porosurf::randfield::{kl_decompose, lhs_normal, CovarianceSpec, QuadGrid};
use porosurf_bench::{consolidation_context, random_batch, random_net};

fn fem(c: &mut Criterion) {
    let mut g = c.benchmark_group("fem_sample");
    g.sample_size(10);
    for n in [5, 10] {
        let ctx = consolidation_context(n, 2);
        g.bench_with_input(BenchmarkId::from_parameter(n), &ctx, |b, ctx| {
            b.iter(|| black_box(ctx.solve_row(0).unwrap()))
        });
    }
    g.finish();
}

fn karhunen_loeve(c: &mut Criterion) {
    let xs: Vec<f64> = (0..21).map(|i| i as f64 / 20.0).collect();
    let grid = QuadGrid::trapezoid_2d(&xs, &xs).unwrap();
    let cov = CovarianceSpec::anisotropic(1.5, 0.25, 0.125);
    c.bench_function("kl_decompose_21x21", |b| b.iter(|| black_box(kl_decompose(&grid, &cov, 0.0, 0.0).unwrap())));
    c.bench_function("lhs_1000x100", |b| b.iter(|| black_box(lhs_normal(1000, 100, 7).unwrap())));
}

fn network(c: &mut Criterion) {
    let net = random_net(&[3, 64, 64, 32], 1);
    let x = random_batch(3, 1210, 2);
    let target = random_batch(32, 1210, 3);
    c.bench_function("mlp_forward_1210", |b| b.iter(|| black_box(net.forward(&x).unwrap())));
    c.bench_function("mlp_gradient_1210", |b| b.iter(|| black_box(net.mse_gradient(&x, &target).unwrap())));
}

fn linear_algebra(c: &mut Criterion) {
    let phi = random_batch(1210, 33, 4);
    let f = random_batch(400, 1210, 5);
    c.bench_function("thin_qr_1210x33", |b| b.iter(|| black_box(thin_qr(&phi).unwrap())));
    let mut g = c.benchmark_group("rank");
    g.sample_size(10);
    g.bench_function("estimate_rank_400x1210", |b| b.iter(|| black_box(estimate_rank(&f, 0.01).unwrap())));
    g.finish();
}

criterion_group!(benches, fem, karhunen_loeve, network, linear_algebra);
criterion_main!(benches);
