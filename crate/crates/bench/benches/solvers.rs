use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use surrogate_bench::{fixed_tree, grid_workload};
use surrogate_core::adversary::{self, AdversaryConfig};
use surrogate_core::exact::{self, SolveLimits};
use surrogate_core::heuristics::{self, HeuristicConfig};
use surrogate_core::{BudgetKind, FeasibleSpace, UncertaintyBudget};

fn adversaries(c: &mut Criterion) {
    let cfg = AdversaryConfig::default();
    let mut group = c.benchmark_group("adversary");
    for n in [5, 10, 20] {
        let (ds, space) = grid_workload(4, n, 11);
        let tree = fixed_tree(&ds, &space, 2);
        let gamma = 0.1 * 2.0 * ds.max_item_range();
        group.bench_with_input(BenchmarkId::new("local", n), &n, |b, _| {
            b.iter(|| adversary::solve_local(black_box(&tree), &ds, gamma, &cfg))
        });
        group.bench_with_input(BenchmarkId::new("global", n), &n, |b, _| {
            b.iter(|| adversary::solve_global(black_box(&tree), &ds, gamma * n as f64, &cfg))
        });
    }
    group.finish();
}

fn min_linear(c: &mut Criterion) {
    let mut group = c.benchmark_group("min_linear");
    for side in [4, 6, 8] {
        let (ds, space) = grid_workload(side, 1, 3);
        let costs = ds.sample(0).to_vec();
        group.bench_with_input(BenchmarkId::from_parameter(side), &side, |b, _| {
            b.iter(|| space.min_linear(black_box(&costs)))
        });
    }
    group.finish();
}

fn training(c: &mut Criterion) {
    let mut group = c.benchmark_group("training");
    group.sample_size(10).measurement_time(Duration::from_secs(5));
    let (ds, space) = grid_workload(3, 4, 5);
    let budget = UncertaintyBudget::new(BudgetKind::Global, 0.05 * ds.max_item_range() * 4.0).unwrap();
    group.bench_function("scenario_generation_d1", |b| {
        b.iter(|| exact::scenario_generation(&ds, budget, &space, 1, &SolveLimits::default()).unwrap())
    });
    let (ds, space) = grid_workload(4, 5, 5);
    let budget = UncertaintyBudget::new(BudgetKind::Local, 0.05 * ds.max_item_range() * 2.0).unwrap();
    let config = HeuristicConfig { max_restarts: Some(20), ..HeuristicConfig::default() };
    group.bench_function("h_tree_d2", |b| b.iter(|| heuristics::h_tree(&ds, &space, budget, &config).unwrap()));
    group.finish();
}

criterion_group!(benches, adversaries, min_linear, training);
criterion_main!(benches);
