use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use travelers_core::analysis::{binomial_pass_prob, hypergeometric_pass_prob, plan_hubs, singleton_plan};
use travelers_core::assignment::{enumerate_paths, BlockRandomness};
use travelers_core::harness::{monte_carlo_corruption, MonteCarloOptions};
use travelers_core::ordering::{check_fairness, total_order, CanonicalEntry, TruthRecord};
use travelers_core::{SystemParams, TxId};

fn closed_form(c: &mut Criterion) {
    c.bench_function("singleton_plan", |b| b.iter(|| singleton_plan(black_box(200), 1.2, 2.0 / 3.0, 1.0 / 3.0)));
    c.bench_function("binomial_tail_q60", |b| b.iter(|| binomial_pass_prob(black_box(60), 40, 1.0 / 3.0)));
    c.bench_function("hypergeometric_n180_q18", |b| b.iter(|| hypergeometric_pass_prob(black_box(180), 120, 18, 12)));
    c.bench_function("plan_hubs_n1000", |b| b.iter(|| plan_hubs(black_box(1000), 1.0, 2, 1.0 / 3.0, 0.9, 1000)));
}

fn assignment(c: &mut Criterion) {
    let p = SystemParams::new(256, 24, 16, 2, 10, 1);
    let rand = BlockRandomness::from_beacon(1, 0);
    c.bench_function("enumerate_paths_n256_q24", |b| b.iter(|| enumerate_paths(black_box(&rand), &p)));
}

fn monte_carlo(c: &mut Criterion) {
    let mut p = SystemParams::new(200, 1, 1, 11, 10, 1);
    p.paths_per_block = Some(200);
    let opts = MonteCarloOptions { client_paths: 73, table_scan: true, allow_stress: false };
    c.bench_function("monte_carlo_1000_trials", |b| b.iter(|| monte_carlo_corruption(&p, opts, 1000, black_box(3))));
}

fn fairness(c: &mut Criterion) {
    let entries: Vec<CanonicalEntry> =
        (0..10_000u64).map(|i| CanonicalEntry::synthetic(TxId::synthetic(i, 0, 1), (i * 7 % 10_007) as i64)).collect();
    let order = total_order(entries);
    let truth: Vec<TruthRecord> = order
        .iter()
        .map(|e| TruthRecord { tx: e.tx, regular_ts: vec![e.canonical_ts], forged: false })
        .collect();
    c.bench_function("check_fairness_10k", |b| b.iter(|| check_fairness(black_box(&order), &truth, 124, 20)));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = closed_form, assignment, monte_carlo, fairness
}
criterion_main!(benches);
