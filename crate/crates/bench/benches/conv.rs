use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tagasc::autodiff::{Padding, Tape};
use tagasc::Tensor;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn conv1d(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut group = c.benchmark_group("conv1d");
    for (len, cin, cout) in [(4096, 1, 16), (1024, 16, 16), (256, 64, 64)] {
        let x = random(&[len, cin], &mut rng);
        let w = random(&[3, cin, cout], &mut rng);
        let b = random(&[cout], &mut rng);
        let label = format!("{len}x{cin}->{cout}");
        group.bench_with_input(BenchmarkId::new("forward", &label), &(), |bench, _| {
            bench.iter(|| {
                let mut tape = Tape::new();
                let (xv, wv, bv) = (
                    tape.constant(x.clone()),
                    tape.constant(w.clone()),
                    tape.constant(b.clone()),
                );
                black_box(tape.conv1d(xv, wv, bv, 1, Padding::Same).unwrap());
            })
        });
        group.bench_with_input(
            BenchmarkId::new("with_backward", &label),
            &(),
            |bench, _| {
                bench.iter(|| {
                    let mut tape = Tape::new();
                    let (xv, wv, bv) = (
                        tape.var(x.clone()),
                        tape.var(w.clone()),
                        tape.var(b.clone()),
                    );
                    let y = tape.conv1d(xv, wv, bv, 1, Padding::Same).unwrap();
                    let loss = tape.sum(y);
                    black_box(tape.backward(loss).unwrap());
                })
            },
        );
    }
    group.finish();
}

criterion_group!(benches, conv1d);
criterion_main!(benches);
