use bmt_core::simulation::replication_rng;
use bmt_core::{
    bmt_select, critical_value, generate_dgp, lasso_path, ocmt_select, DgpConfig, SelectionConfig,
};
use criterion::{black_box, criterion_group, criterion_main, Criterion};

fn design(t: usize, n: usize) -> DgpConfig {
    let mut d = DgpConfig::new(t, n, 4, 0.5, 4.0, 0.75);
    d.seed = 1;
    d
}

fn bench_dgp(c: &mut Criterion) {
    let d = design(300, 100);
    c.bench_function("generate_dgp T300 n100", |b| {
        b.iter(|| generate_dgp(black_box(&d), &mut replication_rng(1, 0, 0)).unwrap())
    });
}

fn bench_selectors(c: &mut Criterion) {
    let cfg = SelectionConfig::default();
    for (t, n) in [(100, 100), (300, 300)] {
        let real = generate_dgp(&design(t, n), &mut replication_rng(1, 0, 0)).unwrap();
        let ds = &real.dataset;
        c.bench_function(&format!("bmt_select T{t} n{n}"), |b| {
            b.iter(|| bmt_select(black_box(ds), &cfg).unwrap())
        });
        c.bench_function(&format!("ocmt_select T{t} n{n}"), |b| {
            b.iter(|| ocmt_select(black_box(ds), &cfg).unwrap())
        });
        c.bench_function(&format!("lasso_path T{t} n{n}"), |b| {
            b.iter(|| lasso_path(black_box(&ds.y), &ds.x, 100, 1e-3).unwrap())
        });
    }
}

fn bench_critical_value(c: &mut Criterion) {
    c.bench_function("critical_value", |b| {
        b.iter(|| critical_value(black_box(0.05), black_box(300), 1.0, 1.0).unwrap())
    });
}

criterion_group!(benches, bench_dgp, bench_selectors, bench_critical_value);
criterion_main!(benches);
