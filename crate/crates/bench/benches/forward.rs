use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use tagasc::autodiff::Mode;
use tagasc::{AscModel, BackboneConfig, FusionConfig, FusionMode, TagVector, Tensor};

fn desk_forward(c: &mut Criterion) {
    let cfg = BackboneConfig::desk();
    let x = Tensor::zeros(&[cfg.input_samples, cfg.input_channels]);
    let tag = TagVector::new("bench", vec![0.5; 8]).unwrap();
    let mut group = c.benchmark_group("desk_forward");
    group.sample_size(20);
    for (name, fc) in [
        ("none", FusionConfig::none()),
        (
            "attention",
            FusionConfig::new(FusionMode::Attention, 8)
                .with_heads(2)
                .with_layers(1),
        ),
    ] {
        let mut model = AscModel::build(&cfg, &fc, 0).unwrap();
        let t = fc.mode.uses_tags().then_some(&tag);
        group.bench_function(name, |b| {
            b.iter(|| black_box(model.forward(&x, t, Mode::Infer).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, desk_forward);
criterion_main!(benches);
