use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dcaudit_bench::{board_workload, universe};
use dcaudit_core::audit::{estimate_weak_advantage, AuditOptions};
use dcaudit_core::collectors::CollectorSpec;
use dcaudit_core::execution::ExecutionConfig;
use dcaudit_core::hi::{check_history_independence, impl_by_name, DEFAULT_BUDGET};
use dcaudit_core::run_execution;
use dcaudit_core::simulators::BoardSimulator;
use std::hint::black_box;

fn execution(c: &mut Criterion) {
    let mut group = c.benchmark_group("execution");
    for n in [4, 16, 64] {
        let (y, z) = (board_workload("y", n), board_workload("z", n));
        let cfg = ExecutionConfig::new(16, 1);
        group.bench_with_input(BenchmarkId::new("board", n), &n, |b, _| {
            b.iter(|| run_execution(&CollectorSpec::Board, black_box(&y), black_box(&z), &cfg).unwrap())
        });
    }
    group.finish();
}

fn weak_audit(c: &mut Criterion) {
    let (y, z) = (board_workload("y", 8), board_workload("z", 8));
    let mut group = c.benchmark_group("weak_audit");
    group.sample_size(10);
    for jobs in [1, 4] {
        let opts = AuditOptions::new(16, 200, 5).with_jobs(jobs);
        group.bench_with_input(BenchmarkId::new("board_200_trials", jobs), &jobs, |b, _| {
            b.iter(|| estimate_weak_advantage(&CollectorSpec::Board, &BoardSimulator, &y, &z, &opts).unwrap())
        });
    }
    group.finish();
}

fn history_independence(c: &mut Criterion) {
    let keys = universe(3);
    let mut group = c.benchmark_group("check_hi");
    group.sample_size(10);
    for name in ["sorted_set", "compact_list"] {
        let imp = impl_by_name(name).unwrap();
        group.bench_function(name, |b| b.iter(|| check_history_independence(imp, &keys, 5, DEFAULT_BUDGET).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, execution, weak_audit, history_independence);
criterion_main!(benches);
