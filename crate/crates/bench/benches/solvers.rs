use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DVector;
use softsensor_bench::{box_lp, pct_two_cluster};
use softsensor_core::labeling::kmeans_label;
use softsensor_core::mis::{build_label_milp, con_qp, MisConfig};
use softsensor_core::optim::{solve_lp, solve_milp, solve_qp, MilpOptions};
use softsensor_core::sis::train_olsr;

fn lp(c: &mut Criterion) {
    let p = box_lp(20, 15);
    c.bench_function("lp_box_20x15", |b| b.iter(|| solve_lp(&p, 1e-9).unwrap()));
}

fn qp(c: &mut Criterion) {
    let (x, y) = pct_two_cluster(30, 1);
    let z: Vec<bool> = (0..x.nrows()).map(|i| i < 30).collect();
    let (p, _) = con_qp(&x, &y, &z, 1e-2, 0.04);
    c.bench_function("con_qp_n60", |b| b.iter(|| solve_qp(&p, 1e-9).unwrap()));
}

fn milp(c: &mut Criterion) {
    let (x, y) = pct_two_cluster(5, 2);
    let x = x.columns(0, 1).into_owned();
    let lm = build_label_milp(&x, &y, 0.1, 0.05, 100.0, None);
    let mut group = c.benchmark_group("milp");
    group.sample_size(10);
    group.bench_function("label_milp_n10", |b| b.iter(|| solve_milp(&lm.problem, &MilpOptions::default()).unwrap()));
    group.finish();
}

fn kmeans(c: &mut Criterion) {
    let (x, _) = pct_two_cluster(155, 3);
    let cfg = MisConfig::default();
    c.bench_function("kmeans_n310", |b| b.iter(|| kmeans_label(&x, 2, 0, cfg.kmeans_restarts, cfg.kmeans_max_iter).unwrap()));
}

fn olsr(c: &mut Criterion) {
    let (x, y) = pct_two_cluster(155, 4);
    let y: DVector<f64> = y;
    c.bench_function("olsr_n310", |b| b.iter(|| train_olsr(&x, &y).unwrap()));
}

criterion_group!(benches, lp, qp, milp, kmeans, olsr);
criterion_main!(benches);
