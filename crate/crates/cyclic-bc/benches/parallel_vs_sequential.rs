use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cyclic_bc::evaluator::{eval_batch, random_args, Args, OracleEnv};
use cyclic_bc::fixtures;
use cyclic_bc::nonuniform::{pipeline_eval, CircuitFamily, FamilyKind};
use cyclic_bc::par::Exec;

fn batch_eval(c: &mut Criterion) {
    let g = fixtures::concat();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let inputs: Vec<Args> = (0..512).map(|_| random_args(&mut rng, 2, 1, 16)).collect();
    let env = OracleEnv::new();
    let mut group = c.benchmark_group("eval_batch/C");
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| eval_batch(&g, &inputs, &env, 10_000_000, exec))
        });
    }
    group.finish();
}

fn pipeline(c: &mut Criterion) {
    let fam = Arc::new(CircuitFamily::new(FamilyKind::Majority));
    let n = 7;
    let inputs: Vec<Vec<bool>> = (0..1u32 << n).map(|k| (0..n).map(|i| (k >> i) & 1 == 1).collect()).collect();
    let mut group = c.benchmark_group("pipeline/majority7");
    group.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| exec.map(&inputs, |bits| pipeline_eval(&fam, bits).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, batch_eval, pipeline);
criterion_main!(benches);
