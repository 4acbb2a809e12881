//! Parallel versus sequential execution of the two data-parallel paths:
//! independent runs of an experiment cell and the per-chain map inside a
//! standard-mode run.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use raresim::engine::{run, run_many, Mode, RunConfig};
use raresim::exec::Execution;
use raresim::limit_state::BenchmarkSpec;

fn configs(runs: u64) -> Vec<RunConfig> {
    (1..=runs).map(|s| RunConfig::new(BenchmarkSpec::new("g11", 10), Mode::Standard, 1000, 0.1, s)).collect()
}

fn bench_runs(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_many_g11_d10_8runs");
    group.sample_size(10);
    let cfgs = configs(8);
    for exec in [Execution::Sequential, Execution::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| run_many(&cfgs, exec))
        });
    }
    group.finish();
}

fn bench_chains(c: &mut Criterion) {
    let mut group = c.benchmark_group("single_run_g11_d10_chains");
    group.sample_size(10);
    let cfg = configs(1).remove(0);
    for exec in [Execution::Sequential, Execution::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| run(&cfg, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_runs, bench_chains);
criterion_main!(benches);
