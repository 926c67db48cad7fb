//! Data-parallel kernels against their sequential counterparts, plus
//! end-to-end experiment throughput.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use seqedit_core::harness::{gen_instance, run_experiment, AlignmentMode, EditorKind, EditorSpec, InstanceConfig};
use seqedit_core::linalg::{gram, gram_seq, Matrix};

fn square(n: usize) -> Matrix {
    // deterministic, well-scaled entries; no RNG needed for throughput
    Matrix::from_fn(n, n, |i, j| ((i * 31 + j * 17) % 101) as f64 / 101.0 - 0.5)
}

fn bench_matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul");
    for n in [64usize, 256, 512] {
        let a = square(n);
        let b = square(n);
        group.bench_with_input(BenchmarkId::new("seq", n), &n, |bench, _| {
            bench.iter(|| a.matmul_seq(&b))
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("par", n), &n, |bench, _| {
            bench.iter(|| a.matmul(&b))
        });
    }
    group.finish();
}

fn bench_gram(c: &mut Criterion) {
    let mut group = c.benchmark_group("gram");
    for n in [64usize, 256, 512] {
        let k = square(n);
        group.bench_with_input(BenchmarkId::new("seq", n), &n, |bench, _| {
            bench.iter(|| gram_seq(&k))
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("par", n), &n, |bench, _| {
            bench.iter(|| gram(&k))
        });
    }
    group.finish();
}

fn bench_experiment(c: &mut Criterion) {
    let cfg = InstanceConfig {
        d_in: 64,
        d_out: 32,
        n_preserved: 96,
        n_steps: 10,
        batch_size: 8,
        ..InstanceConfig::default()
    };
    let inst = gen_instance(&cfg).expect("valid config");
    let spec = EditorSpec::new(EditorKind::Memit);
    c.bench_function("experiment/memit_aligned_d64", |bench| {
        bench.iter(|| run_experiment(&inst, &spec, AlignmentMode::Aligned).expect("runs"))
    });
}

criterion_group!(benches, bench_matmul, bench_gram, bench_experiment);
criterion_main!(benches);
