use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tagasc::autodiff::{conv_out_len, Padding, Tape};
use tagasc::data::{augment, parse_wav, write_wav};
use tagasc::fusion::apply_attention;
use tagasc::{AttentionMap, Tensor};

fn divisor_pair() -> impl Strategy<Value = (usize, usize)> {
    (1usize..=8, 1usize..=6).prop_map(|(h, seg)| (h, h * seg))
}

/// Elementwise oracle: `out[t][i] = m[t][i] * a[i]`.
fn scale_oracle(m: &[Vec<f64>], a: &[f64]) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; a.len()]; m.len()];
    for t in 0..m.len() {
        for i in 0..a.len() {
            out[t][i] = m[t][i] * a[i];
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn softmax_segments_normalize_each_head(
        (h, f) in divisor_pair(),
        seed in any::<u64>(),
        shift in -50.0f64..50.0,
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let logits: Vec<f64> = (0..f).map(|_| rng.random_range(-8.0..8.0)).collect();
        let a = AttentionMap::from_logits(&logits, h).unwrap();
        let seg = f / h;
        for k in 0..h {
            let s: f64 = a.values.data()[k * seg..(k + 1) * seg].iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
        prop_assert!(a.values.data().iter().all(|&v| v > 0.0 && v <= 1.0));
        let head = rng.random_range(0..h);
        let mut shifted = logits.clone();
        for v in &mut shifted[head * seg..(head + 1) * seg] {
            *v += shift;
        }
        let b = AttentionMap::from_logits(&shifted, h).unwrap();
        for (x, y) in a.values.data().iter().zip(b.values.data()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn apply_attention_matches_oracle_and_is_linear(
        t in 1usize..=6,
        (h, f) in divisor_pair(),
        seed in any::<u64>(),
        alpha in -3.0f64..3.0,
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..t).map(|_| (0..f).map(|_| rng.random_range(-2.0..2.0)).collect()).collect()
        };
        let m1 = rows(&mut rng);
        let m2 = rows(&mut rng);
        let logits: Vec<f64> = (0..f).map(|_| rng.random_range(-3.0..3.0)).collect();
        let a = AttentionMap::from_logits(&logits, h).unwrap();
        let out = apply_attention(&Tensor::from_rows(&m1).unwrap(), &a).unwrap();
        let want = scale_oracle(&m1, a.values.data());
        for (r, w) in want.iter().enumerate() {
            prop_assert_eq!(out.row(r), w.as_slice());
        }
        let combo: Vec<Vec<f64>> = m1.iter().zip(&m2)
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + alpha * q).collect())
            .collect();
        let lhs = apply_attention(&Tensor::from_rows(&combo).unwrap(), &a).unwrap();
        let r2 = apply_attention(&Tensor::from_rows(&m2).unwrap(), &a).unwrap();
        for ((l, p), q) in lhs.data().iter().zip(out.data()).zip(r2.data()) {
            prop_assert!((l - (p + alpha * q)).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_output_length_counts_windows(
        t_in in 1usize..60,
        len in 1usize..8,
        stride in 1usize..6,
        c_in in 1usize..3,
    ) {
        let windows = (0..t_in).step_by(stride).filter(|s| s + len <= t_in).count();
        match conv_out_len(t_in, len, stride, Padding::Valid) {
            Ok(n) => prop_assert_eq!(n, windows),
            Err(_) => prop_assert_eq!(windows, 0),
        }
        if windows > 0 {
            let mut tape = Tape::new();
            let x = tape.constant(Tensor::zeros(&[t_in, c_in]));
            let w = tape.constant(Tensor::zeros(&[len, c_in, 2]));
            let b = tape.constant(Tensor::zeros(&[2]));
            let y = tape.conv1d(x, w, b, stride, Padding::Valid).unwrap();
            prop_assert_eq!(tape.shape(y), &[windows, 2][..]);
        }
    }

    #[test]
    fn mixup_labels_form_a_distribution(
        la in 0usize..5,
        lb in 0usize..5,
        alpha in 0.05f64..4.0,
        seed in any::<u64>(),
    ) {
        let a = Tensor::new(&[4, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::new(&[4, 1], vec![-1.0, 0.0, 1.0, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y) = augment::mixup(&a, la, &b, lb, 5, alpha, &mut rng).unwrap();
        prop_assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(y.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let lambda = if la == lb { None } else { Some(y[la]) };
        if let Some(l) = lambda {
            for ((xi, ai), bi) in x.data().iter().zip(a.data()).zip(b.data()) {
                prop_assert!((xi - (l * ai + (1.0 - l) * bi)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pcm16_wav_round_trip(
        frames in 1usize..200,
        channels in 1usize..=2,
        sr in prop::sample::select(vec![8000u32, 9600, 44100, 48000]),
        codes in prop::collection::vec(any::<i16>(), 400),
    ) {
        let data: Vec<f64> = (0..frames * channels)
            .map(|i| f64::from(codes[i % codes.len()]) / 32768.0)
            .collect();
        let samples = Tensor::new(&[frames, channels], data).unwrap();
        let bytes = write_wav(&samples, sr);
        let rec = parse_wav(&bytes, "x").unwrap();
        prop_assert_eq!(rec.sample_rate, sr);
        prop_assert_eq!(&rec.samples, &samples);
        prop_assert_eq!(write_wav(&rec.samples, sr), bytes);
    }

    #[test]
    fn pre_emphasis_matches_difference_equation(
        n in 2usize..50,
        beta in 0.0f64..0.99,
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = augment::pre_emphasis(&Tensor::new(&[n, 2], x.clone()).unwrap(), beta).unwrap();
        prop_assert_eq!(y.shape(), &[n - 1, 2][..]);
        for t in 0..n - 1 {
            for c in 0..2 {
                let want = x[(t + 1) * 2 + c] - beta * x[t * 2 + c];
                prop_assert!((y.data()[t * 2 + c] - want).abs() < 1e-15);
            }
        }
    }
}
