use super::kernels;
use super::tape::{Mode, Op, Padding, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Running mean/variance for one batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BatchNormState {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

/// Classification target for the cross-entropy loss.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Class(usize),
    /// A probability distribution over classes (mixup labels).
    Soft(Vec<f64>),
}

impl Target {
    pub fn to_distribution(&self, k: usize) -> Result<Vec<f64>> {
        match self {
            Target::Class(c) if *c >= k => Err(Error::Range(format!(
                "target class {c} out of range for {k} logits"
            ))),
            Target::Class(c) => {
                let mut d = vec![0.0; k];
                d[*c] = 1.0;
                Ok(d)
            }
            Target::Soft(d) => {
                if d.len() != k {
                    return Err(Error::dim(format!(
                        "soft target has {} entries for {k} logits",
                        d.len()
                    )));
                }
                let s: f64 = d.iter().sum();
                if d.iter().any(|&v| !(0.0..=1.0).contains(&v)) || (s - 1.0).abs() > 1e-9 {
                    return Err(Error::Range(format!(
                        "soft target must be a distribution (sum {s})"
                    )));
                }
                Ok(d.clone())
            }
        }
    }
}

fn expect_2d(tape: &Tape, v: Var, what: &str) -> Result<(usize, usize)> {
    match tape.shape(v) {
        [a, b] => Ok((*a, *b)),
        s => Err(Error::dim(format!("{what} must be 2-D, got {s:?}"))),
    }
}

/// Output length of a 1-D convolution.
pub fn conv_out_len(t_in: usize, len: usize, stride: usize, padding: Padding) -> Result<usize> {
    if stride == 0 || len == 0 {
        return Err(Error::config("conv stride and length must be positive"));
    }
    match padding {
        Padding::Valid => {
            if t_in < len {
                return Err(Error::dim(format!(
                    "valid conv needs input length {t_in} >= filter length {len}"
                )));
            }
            Ok((t_in - len) / stride + 1)
        }
        Padding::Same => {
            if stride != 1 {
                return Err(Error::config("same padding requires stride 1"));
            }
            Ok(t_in)
        }
    }
}

impl Tape {
    /// 1-D convolution of `x: [T_in, C_in]` with `w: [L, C_in, C_out]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: Padding) -> Result<Var> {
        let (t_in, c_in) = expect_2d(self, x, "conv1d input")?;
        let (len, wc_in, c_out) = match self.shape(w) {
            [l, ci, co] => (*l, *ci, *co),
            s => return Err(Error::dim(format!("conv1d weight must be 3-D, got {s:?}"))),
        };
        if wc_in != c_in {
            return Err(Error::dim(format!(
                "conv1d input has {c_in} channels but weight expects {wc_in}"
            )));
        }
        if self.shape(b) != [c_out] {
            return Err(Error::dim(format!(
                "conv1d bias shape {:?} does not match {c_out} output channels",
                self.shape(b)
            )));
        }
        let t_out = conv_out_len(t_in, len, stride, padding)?;
        let pad = match padding {
            Padding::Valid => 0,
            Padding::Same => (len - 1) / 2,
        };
        let out = kernels::conv1d_forward(
            self.value(x).data(),
            t_in,
            c_in,
            self.value(w).data(),
            len,
            c_out,
            self.value(b).data(),
            stride,
            pad,
            t_out,
        );
        let rg = self.requires_grad(x) || self.requires_grad(w) || self.requires_grad(b);
        let value = Tensor::new(&[t_out, c_out], out)?;
        Ok(self.push(
            value,
            Op::Conv1d {
                x,
                w,
                b,
                stride,
                pad,
            },
            rg,
        ))
    }

    /// Elementwise `max(x, slope * x)`.
    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        if !(slope > 0.0 && slope < 1.0) {
            return Err(Error::config(format!("leaky slope {slope} not in (0, 1)")));
        }
        let value = self.value(x).map(|v| if v > 0.0 { v } else { slope * v });
        let rg = self.requires_grad(x);
        Ok(self.push(value, Op::LeakyRelu { x, slope }, rg))
    }

    /// Batch norm over the time axis of `x: [T, C]`.
    ///
    /// Train mode normalizes with the batch statistics and folds them into
    /// `state`; infer mode uses `state` as fixed constants.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        state: &mut BatchNormState,
        mode: Mode,
    ) -> Result<Var> {
        let (t, c) = expect_2d(self, x, "batch_norm input")?;
        if self.shape(gamma) != [c] || self.shape(beta) != [c] || state.mean.len() != c {
            return Err(Error::dim(format!("batch_norm parameters do not match {c} channels")));
        }
        let xs = self.value(x).data();
        let (mean, var) = match mode {
            Mode::Train => {
                if t < 2 {
                    return Err(Error::DegenerateBatch(format!(
                        "train-mode batch norm needs at least 2 time steps, got {t}"
                    )));
                }
                let mut mean = vec![0.0; c];
                for row in xs.chunks(c) {
                    mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
                }
                mean.iter_mut().for_each(|m| *m /= t as f64);
                let mut var = vec![0.0; c];
                for row in xs.chunks(c) {
                    for j in 0..c {
                        let d = row[j] - mean[j];
                        var[j] += d * d;
                    }
                }
                var.iter_mut().for_each(|v| *v /= t as f64);
                let unbias = t as f64 / (t as f64 - 1.0);
                for j in 0..c {
                    state.mean[j] = BN_MOMENTUM * state.mean[j] + (1.0 - BN_MOMENTUM) * mean[j];
                    state.var[j] =
                        BN_MOMENTUM * state.var[j] + (1.0 - BN_MOMENTUM) * var[j] * unbias;
                }
                (mean, var)
            }
            Mode::Infer => (state.mean.clone(), state.var.clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let mut xhat = vec![0.0; xs.len()];
        let mut out = vec![0.0; xs.len()];
        for ((row, hrow), orow) in xs.chunks(c).zip(xhat.chunks_mut(c)).zip(out.chunks_mut(c)) {
            for j in 0..c {
                hrow[j] = (row[j] - mean[j]) * inv_std[j];
                orow[j] = g[j] * hrow[j] + bt[j];
            }
        }
        let rg = self.requires_grad(x) || self.requires_grad(gamma) || self.requires_grad(beta);
        let value = Tensor::new(&[t, c], out)?;
        Ok(self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                inv_std,
                xhat,
                train: mode == Mode::Train,
            },
            rg,
        ))
    }

    /// Non-overlapping max pooling along time; the remainder is dropped.
    /// Ties route the gradient to the first maximal index.
    pub fn max_pool1d(&mut self, x: Var, k: usize) -> Result<Var> {
        let (t, c) = expect_2d(self, x, "max_pool1d input")?;
        if k == 0 {
            return Err(Error::config("pool size must be positive"));
        }
        if t < k {
            return Err(Error::dim(format!("max_pool1d needs length {t} >= k = {k}")));
        }
        let t_out = t / k;
        let xs = self.value(x).data();
        let mut out = vec![0.0; t_out * c];
        let mut argmax = vec![0; t_out * c];
        for o in 0..t_out {
            for j in 0..c {
                let mut best = o * k * c + j;
                for s in 1..k {
                    let idx = (o * k + s) * c + j;
                    if xs[idx] > xs[best] {
                        best = idx;
                    }
                }
                out[o * c + j] = xs[best];
                argmax[o * c + j] = best;
            }
        }
        let rg = self.requires_grad(x);
        let value = Tensor::new(&[t_out, c], out)?;
        Ok(self.push(value, Op::MaxPool { x, k, argmax }, rg))
    }

    /// Per-channel mean over time: `[T, C] -> [C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let (t, c) = expect_2d(self, x, "global_avg_pool input")?;
        let mut out = vec![0.0; c];
        for row in self.value(x).data().chunks(c) {
            out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
        }
        out.iter_mut().for_each(|o| *o /= t as f64);
        let rg = self.requires_grad(x);
        Ok(self.push(Tensor::vector(out), Op::GlobalAvg { x }, rg))
    }

    /// Per-channel max over time: `[T, C] -> [C]`.
    pub fn global_max_pool(&mut self, x: Var) -> Result<Var> {
        let (_, c) = expect_2d(self, x, "global_max_pool input")?;
        let xs = self.value(x).data();
        let mut argmax: Vec<usize> = (0..c).collect();
        for (i, &v) in xs.iter().enumerate().skip(c) {
            let j = i % c;
            if v > xs[argmax[j]] {
                argmax[j] = i;
            }
        }
        let out = argmax.iter().map(|&i| xs[i]).collect();
        let rg = self.requires_grad(x);
        Ok(self.push(Tensor::vector(out), Op::GlobalMax { x, argmax }, rg))
    }

    /// Affine map `x · W + b` for `x: [D_in]`, `W: [D_in, D_out]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let d_in = self.value(x).len();
        let (wi, d_out) = expect_2d(self, w, "dense weight")?;
        if self.shape(x).len() != 1 || wi != d_in || self.shape(b) != [d_out] {
            return Err(Error::dim(format!(
                "dense: input {:?}, weight {:?}, bias {:?}",
                self.shape(x),
                self.shape(w),
                self.shape(b)
            )));
        }
        let xs = self.value(x).data();
        let ws = self.value(w).data();
        let mut out = self.value(b).data().to_vec();
        for (i, &xv) in xs.iter().enumerate() {
            for (o, wv) in out.iter_mut().zip(&ws[i * d_out..(i + 1) * d_out]) {
                *o += xv * wv;
            }
        }
        let rg = self.requires_grad(x) || self.requires_grad(w) || self.requires_grad(b);
        Ok(self.push(Tensor::vector(out), Op::Dense { x, w, b }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(format!(
                "add: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        let sa = self.value(a);
        let data = sa
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let value = Tensor::new(sa.shape(), data)?;
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(value, Op::Add { a, b }, rg))
    }

    /// Concatenates 1-D tensors in order.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::dim("concat of nothing"));
        }
        let mut out = Vec::new();
        for &p in parts {
            if self.shape(p).len() != 1 {
                return Err(Error::dim(format!("concat expects 1-D parts, got {:?}", self.shape(p))));
            }
            out.extend_from_slice(self.value(p).data());
        }
        let rg = parts.iter().any(|&p| self.requires_grad(p));
        Ok(self.push(
            Tensor::vector(out),
            Op::Concat {
                parts: parts.to_vec(),
            },
            rg,
        ))
    }

    /// Scales column `i` of `m: [T, F]` by `a[i]` for every row.
    pub fn scale_columns(&mut self, m: Var, a: Var) -> Result<Var> {
        let (t, f) = expect_2d(self, m, "scale_columns input")?;
        if self.shape(a) != [f] {
            return Err(Error::dim(format!(
                "column scale of shape {:?} does not match {f} columns",
                self.shape(a)
            )));
        }
        let av = self.value(a).data();
        let mut out = self.value(m).data().to_vec();
        for row in out.chunks_mut(f) {
            row.iter_mut().zip(av).for_each(|(o, s)| *o *= s);
        }
        let rg = self.requires_grad(m) || self.requires_grad(a);
        let value = Tensor::new(&[t, f], out)?;
        Ok(self.push(value, Op::ScaleColumns { m, a }, rg))
    }

    /// Splits `x: [F]` into `heads` contiguous segments and applies an
    /// independent softmax to each.
    pub fn softmax_segments(&mut self, x: Var, heads: usize) -> Result<Var> {
        let f = self.value(x).len();
        if self.shape(x).len() != 1 {
            return Err(Error::dim("softmax_segments expects a 1-D tensor"));
        }
        if heads == 0 || f % heads != 0 {
            return Err(Error::config(format!(
                "{heads} heads do not divide {f} entries"
            )));
        }
        let seg = f / heads;
        let xs = self.value(x).data();
        let mut out = vec![0.0; f];
        for (o, i) in out.chunks_mut(seg).zip(xs.chunks(seg)) {
            kernels::softmax_into(i, o);
        }
        let rg = self.requires_grad(x);
        Ok(self.push(Tensor::vector(out), Op::SoftmaxSegments { x, heads }, rg))
    }

    /// Cross-entropy `-Σ t_i log softmax(logits)_i` as a scalar.
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: &Target) -> Result<Var> {
        let k = self.value(logits).len();
        if k < 2 || self.shape(logits).len() != 1 {
            return Err(Error::dim(format!(
                "cross-entropy needs a 1-D logit vector with >= 2 classes, got {:?}",
                self.shape(logits)
            )));
        }
        let target = target.to_distribution(k)?;
        let xs = self.value(logits).data();
        let mut probs = vec![0.0; k];
        kernels::softmax_into(xs, &mut probs);
        let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + xs.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        let loss: f64 = target
            .iter()
            .zip(xs)
            .filter(|(t, _)| **t != 0.0)
            .map(|(t, x)| -t * (x - lse))
            .sum();
        let rg = self.requires_grad(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                target,
                probs,
            },
            rg,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let rg = self.requires_grad(x);
        self.push(Tensor::scalar(s), Op::Sum { x }, rg)
    }

    pub fn sum_squares(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().map(|v| v * v).sum();
        let rg = self.requires_grad(x);
        self.push(Tensor::scalar(s), Op::SumSquares { x }, rg)
    }
}
