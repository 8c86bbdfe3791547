use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tagasc::svm::{train_binary, KernelSpec, SmoParams};

fn smo(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut group = c.benchmark_group("smo_rbf");
    group.sample_size(20);
    for n in [50, 200] {
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..16).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|p| if p[0] + p[1] > 0.0 { 1.0 } else { -1.0 })
            .collect();
        let spec = KernelSpec::rbf(1.0 / 16.0);
        let params = SmoParams::default();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| black_box(train_binary(&x, &y, &spec, &params).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, smo);
criterion_main!(benches);
