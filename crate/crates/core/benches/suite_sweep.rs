use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use desbench_core::controllers::ControllerBinding;
use desbench_core::instance::load_shipped;
use desbench_core::protocol::AuthorityMode;
use desbench_core::runner::{run_cases, CaseSpec};

fn cases(mode: AuthorityMode) -> Vec<CaseSpec> {
    let config = Arc::new(load_shipped("A3C9-1").unwrap());
    (1..=10)
        .map(|seed| CaseSpec { config: config.clone(), mode: mode.clone(), controller: ControllerBinding::RuleGreedy, seed, framework: None })
        .collect()
}

fn sweep(c: &mut Criterion) {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).clamp(2, 10);
    let mut group = c.benchmark_group("a3c9_ten_seeds");
    group.sample_size(10);
    for mode in [AuthorityMode::centralized(), AuthorityMode::heterarchical_cnp()] {
        let batch = cases(mode.clone());
        for jobs in [1, cores] {
            let label = if jobs == 1 { "sequential".to_string() } else { format!("parallel_{jobs}") };
            group.bench_with_input(BenchmarkId::new(mode.mode_id.clone(), label), &jobs, |b, &jobs| {
                b.iter(|| black_box(run_cases(&batch, jobs)))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
