use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use recontrack::des::{Horizon, SimConfig};
use recontrack::experiment::run_single;
use recontrack::par::run_tasks_sequential;
use recontrack::policies::PolicyKind;

fn tasks(n: usize, lambda: f64) -> Vec<SimConfig> {
    (0..n as u64)
        .map(|seed| SimConfig::markovian(lambda, 1.0, 2, PolicyKind::Iaa, Horizon::Deliveries(50_000), seed).unwrap())
        .collect()
}

fn replications(c: &mut Criterion) {
    let mut group = c.benchmark_group("replications");
    group.sample_size(10);
    for lambda in [2.0, 50.0] {
        let work = tasks(8, lambda);
        group.bench_with_input(BenchmarkId::new("sequential", lambda), &work, |b, w| {
            b.iter(|| run_tasks_sequential(w, |s| run_single(s, false).unwrap()))
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", lambda), &work, |b, w| {
            b.iter(|| recontrack::par::run_tasks_parallel(w, |s| run_single(s, false).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, replications);
criterion_main!(benches);
