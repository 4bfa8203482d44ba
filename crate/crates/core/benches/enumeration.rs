use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use unireg::bounds::{random_test_pairs, Regime, TheoremSuite};
use unireg::norms::rip;
use unireg::par::{with_threads, workers};

fn modes() -> Vec<(&'static str, usize)> {
    vec![("sequential", 1), ("parallel", workers().max(1))]
}

fn sparse_eigen(c: &mut Criterion) {
    let mut g = c.benchmark_group("rip_p16_k3");
    let (p1, p2) = random_test_pairs(16, 3, 0, Regime::Half).unwrap();
    let delta = p1.sigma.sub(&p2.sigma).unwrap();
    for (name, threads) in modes() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &threads, |b, &t| {
            b.iter(|| with_threads(t, || rip(3, &delta).unwrap().value))
        });
    }
    g.finish();
}

fn theorem_suite(c: &mut Criterion) {
    let mut g = c.benchmark_group("suite_p12_k3");
    let (p1, p2) = random_test_pairs(12, 3, 1, Regime::Definite).unwrap();
    for (name, threads) in modes() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &threads, |b, &t| {
            b.iter(|| with_threads(t, || TheoremSuite::run(3, &p1, &p2).unwrap().violations()))
        });
    }
    g.finish();
}

criterion_group!(benches, sparse_eigen, theorem_suite);
criterion_main!(benches);
