use std::time::Instant;

use tagasc::autodiff::Mode;
use tagasc::{build_backbone, AscModel, BackboneConfig, FusionConfig, FusionMode, TagVector, Tensor};

/// Scalar count derived by hand from the layer list, independent of the
/// builder: conv weight + bias + BN gamma/beta, then the two dense heads.
fn expected_params(cfg: &BackboneConfig, code_in: usize, output_in: usize) -> usize {
    let f = cfg.num_filters;
    let conv = |len: usize, cin: usize| len * cin * f + 3 * f;
    conv(cfg.front_filter_len, cfg.input_channels)
        + cfg.num_res_blocks * 2 * conv(cfg.res_kernel, f)
        + code_in * cfg.code_dim
        + cfg.code_dim
        + output_in * cfg.num_classes
        + cfg.num_classes
}

#[test]
fn full_scale_zero_waveform_reproduces_layer_shapes() {
    let cfg = BackboneConfig::full_scale();
    let start = Instant::now();
    let mut model = build_backbone(&cfg, 0).unwrap();
    let x = Tensor::zeros(&[cfg.input_samples, cfg.input_channels]);
    let out = model.forward(&x, None, Mode::Infer).unwrap();
    let elapsed = start.elapsed().as_secs_f64();

    let got = [
        out.feature_map.shape().to_vec(),
        vec![out.pooled.len() / 2],
        vec![out.pooled.len() / 2],
        out.pooled.shape().to_vec(),
        out.code.shape().to_vec(),
        out.logits.shape().to_vec(),
    ];
    let want: [&[usize]; 6] = [&[18, 128], &[128], &[128], &[256], &[64], &[10]];
    for (g, w) in got.iter().zip(want) {
        assert_eq!(g.as_slice(), w);
    }
    let stages = cfg.stage_shapes().unwrap();
    assert_eq!(stages[0].1, vec![39999, 128]);
    assert!(out.logits.is_finite());
    assert!(elapsed < 30.0, "full-scale forward took {elapsed:.1}s");
}

#[test]
fn parameter_count_matches_layer_arithmetic() {
    for cfg in [BackboneConfig::full_scale(), BackboneConfig::desk()] {
        let m = build_backbone(&cfg, 0).unwrap();
        let f = cfg.num_filters;
        assert_eq!(
            m.params.num_scalars(),
            expected_params(&cfg, 2 * f, cfg.code_dim)
        );
    }
    assert_eq!(
        build_backbone(&BackboneConfig::full_scale(), 0).unwrap().params.num_scalars(),
        714_058
    );
}

#[test]
fn codecat_widens_only_the_output_head() {
    let cfg = BackboneConfig::full_scale();
    let m = AscModel::build(&cfg, &FusionConfig::new(FusionMode::Codecat, 80), 0).unwrap();
    assert_eq!(m.code_dim(), 144);
    assert_eq!(m.params.num_scalars(), expected_params(&cfg, 256, 144));
}

#[test]
fn residual_skip_changes_the_output() {
    let cfg = BackboneConfig::desk();
    let x = Tensor::new(
        &[cfg.input_samples, 1],
        (0..cfg.input_samples).map(|i| (i as f64 * 0.05).sin() * 0.1).collect(),
    )
    .unwrap();
    let mut with = build_backbone(&cfg, 4).unwrap();
    let mut without = with.clone().without_residual_skip();
    let a = with.forward(&x, None, Mode::Infer).unwrap();
    let b = without.forward(&x, None, Mode::Infer).unwrap();
    assert_eq!(a.feature_map.shape(), b.feature_map.shape());
    assert_ne!(a.feature_map, b.feature_map);
}

#[test]
fn forward_is_deterministic_for_every_mode() {
    let cfg = BackboneConfig::desk();
    let x = Tensor::new(
        &[cfg.input_samples, 1],
        (0..cfg.input_samples).map(|i| ((i * 7919) % 101) as f64 / 101.0 - 0.5).collect(),
    )
    .unwrap();
    let tag = TagVector::new("r", (0..8).map(|i| i as f64 / 8.0).collect()).unwrap();
    for mode in [
        FusionMode::None,
        FusionMode::Codecat,
        FusionMode::BeforeCode,
        FusionMode::Attention,
        FusionMode::CombinedShared,
        FusionMode::CombinedSeparate,
    ] {
        let fc = FusionConfig::new(mode, 8).with_heads(2).with_layers(1).with_separate_layers(1, 1);
        let mut m1 = AscModel::build(&cfg, &fc, 9).unwrap();
        let mut m2 = AscModel::build(&cfg, &fc, 9).unwrap();
        assert_eq!(m1, m2);
        let t = mode.uses_tags().then_some(&tag);
        let o1 = m1.forward(&x, t, Mode::Infer).unwrap();
        let o2 = m2.forward(&x, t, Mode::Infer).unwrap();
        assert_eq!(o1, o2, "{mode}");
        assert!(o1.code.is_finite());
        assert_eq!(o1.code.len(), m1.code_dim());
    }
}
