//! Pre-emphasis and mixup.

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_PRE_EMPHASIS: f64 = 0.97;
pub const DEFAULT_MIXUP_ALPHA: f64 = 0.4;

/// First-order high-pass `y[n] = x[n+1] - beta * x[n]` on `[N, C]`,
/// producing `N - 1` frames.
pub fn pre_emphasis(x: &Tensor, beta: f64) -> Result<Tensor> {
    let (n, c) = match x.shape() {
        [n, c] => (*n, *c),
        s => return Err(Error::dim(format!("pre-emphasis expects [N, C], got {s:?}"))),
    };
    if n < 2 {
        return Err(Error::dim(format!("pre-emphasis needs at least 2 frames, got {n}")));
    }
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::config(format!("pre-emphasis coefficient {beta} not in [0, 1)")));
    }
    let d = x.data();
    let out = (c..n * c).map(|i| d[i] - beta * d[i - c]).collect();
    Tensor::new(&[n - 1, c], out)
}

/// Draws the mixing weight `lambda ~ Beta(alpha, alpha)`.
pub fn sample_lambda(alpha: f64, rng: &mut impl Rng) -> Result<f64> {
    let beta = Beta::new(alpha, alpha)
        .map_err(|e| Error::config(format!("mixup alpha {alpha}: {e}")))?;
    Ok(beta.sample(rng))
}

/// `lambda * a + (1 - lambda) * b` elementwise.
pub fn blend(a: &Tensor, b: &Tensor, lambda: f64) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::dim(format!(
            "cannot mix shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| lambda * x + (1.0 - lambda) * y)
        .collect();
    Tensor::new(a.shape(), data)
}

/// Mixup with a fixed weight: the blended signal and the soft label.
pub fn mixup_with_lambda(
    a: &Tensor,
    label_a: usize,
    b: &Tensor,
    label_b: usize,
    num_classes: usize,
    lambda: f64,
) -> Result<(Tensor, Vec<f64>)> {
    if label_a >= num_classes || label_b >= num_classes {
        return Err(Error::Range(format!(
            "labels {label_a}/{label_b} out of range for {num_classes} classes"
        )));
    }
    let x = blend(a, b, lambda)?;
    let mut y = vec![0.0; num_classes];
    y[label_a] += lambda;
    y[label_b] += 1.0 - lambda;
    Ok((x, y))
}

/// Mixup with `lambda ~ Beta(alpha, alpha)`.
pub fn mixup(
    a: &Tensor,
    label_a: usize,
    b: &Tensor,
    label_b: usize,
    num_classes: usize,
    alpha: f64,
    rng: &mut impl Rng,
) -> Result<(Tensor, Vec<f64>)> {
    if !(alpha > 0.0) {
        return Err(Error::config(format!("mixup alpha {alpha} must be positive")));
    }
    let lambda = sample_lambda(alpha, rng)?;
    mixup_with_lambda(a, label_a, b, label_b, num_classes, lambda)
}
