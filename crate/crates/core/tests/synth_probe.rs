//! Informativeness of synthetic tags, checked with independent probes.

use tagasc::data::{generate_synthetic, SynthSpec};

/// Multinomial logistic regression by full-batch gradient descent on
/// standardized features. Returns test accuracy.
fn logistic_probe(train: &[(Vec<f64>, usize)], test: &[(Vec<f64>, usize)], k: usize) -> f64 {
    let d = train[0].0.len();
    let n = train.len() as f64;
    let mean: Vec<f64> = (0..d)
        .map(|j| train.iter().map(|(x, _)| x[j]).sum::<f64>() / n)
        .collect();
    let std: Vec<f64> = (0..d)
        .map(|j| {
            let v = train.iter().map(|(x, _)| (x[j] - mean[j]).powi(2)).sum::<f64>() / n;
            v.sqrt().max(1e-12)
        })
        .collect();
    let norm = |x: &[f64]| -> Vec<f64> {
        let mut z: Vec<f64> = x.iter().enumerate().map(|(j, v)| (v - mean[j]) / std[j]).collect();
        z.push(1.0);
        z
    };
    let tr: Vec<(Vec<f64>, usize)> = train.iter().map(|(x, y)| (norm(x), *y)).collect();
    let mut w = vec![vec![0.0; d + 1]; k];
    let scores = |w: &[Vec<f64>], x: &[f64]| -> Vec<f64> {
        w.iter().map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    };
    for _ in 0..2000 {
        let mut g = vec![vec![0.0; d + 1]; k];
        for (x, y) in &tr {
            let s = scores(&w, x);
            let m = s.iter().cloned().fold(f64::MIN, f64::max);
            let e: Vec<f64> = s.iter().map(|v| (v - m).exp()).collect();
            let z: f64 = e.iter().sum();
            for c in 0..k {
                let p = e[c] / z - if c == *y { 1.0 } else { 0.0 };
                for j in 0..=d {
                    g[c][j] += p * x[j] / n;
                }
            }
        }
        for c in 0..k {
            for j in 0..=d {
                w[c][j] -= 0.5 * g[c][j];
            }
        }
    }
    let hits = test
        .iter()
        .filter(|(x, y)| {
            let s = scores(&w, &norm(x));
            let best = (0..k).max_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap();
            best == *y
        })
        .count();
    hits as f64 / test.len() as f64
}

#[test]
fn tags_beat_waveform_energy_by_twenty_points() {
    let spec = SynthSpec::default();
    let ds = generate_synthetic(&spec).unwrap();
    let tag_rows = |recs: &[tagasc::data::Recording]| -> Vec<(Vec<f64>, usize)> {
        recs.iter()
            .map(|r| (ds.tags.get(&r.id).unwrap().values().to_vec(), r.scene_label.unwrap()))
            .collect()
    };
    let energy_rows = |recs: &[tagasc::data::Recording]| -> Vec<(Vec<f64>, usize)> {
        recs.iter()
            .map(|r| {
                let d = r.samples.data();
                let rms = (d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64).sqrt();
                (vec![rms], r.scene_label.unwrap())
            })
            .collect()
    };
    let k = spec.num_scenes;
    let tag_acc = logistic_probe(&tag_rows(&ds.train), &tag_rows(&ds.test), k);
    let energy_acc = logistic_probe(&energy_rows(&ds.train), &energy_rows(&ds.test), k);
    println!("tag probe {:.2}%, energy probe {:.2}%", 100.0 * tag_acc, 100.0 * energy_acc);
    assert!(tag_acc - energy_acc >= 0.20, "tag {tag_acc} energy {energy_acc}");
}

#[test]
fn zero_noise_single_event_stump_is_perfect() {
    let spec = SynthSpec {
        num_scenes: 4,
        num_event_types: 4,
        characteristic_events: 1,
        p_characteristic: 1.0,
        p_background: 0.0,
        noise_level: 0.0,
        tag_blur: 0.0,
        duration_samples: 256,
        n_train: 8,
        n_test: 8,
        ..SynthSpec::default()
    };
    let ds = generate_synthetic(&spec).unwrap();
    // stump per event: tag_e > 0.5 predicts the scene owning event e
    for r in ds.train.iter().chain(&ds.test) {
        let tag = ds.tags.get(&r.id).unwrap().values();
        let pred = (0..spec.num_scenes)
            .find(|&s| tag[spec.profile(s)[0]] > 0.5)
            .unwrap();
        assert_eq!(pred, r.scene_label.unwrap());
    }
}
