//! Raw slice kernels shared by the forward ops and their backward rules.
//!
//! Layouts: sequences are `[time, channel]`, conv weights `[len, c_in, c_out]`.

pub(crate) fn conv1d_forward(
    x: &[f64],
    t_in: usize,
    c_in: usize,
    w: &[f64],
    len: usize,
    c_out: usize,
    bias: &[f64],
    stride: usize,
    pad: usize,
    t_out: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; t_out * c_out];
    for (t, orow) in out.chunks_mut(c_out).enumerate() {
        orow.copy_from_slice(bias);
        for k in 0..len {
            let Some(src) = (t * stride + k).checked_sub(pad) else {
                continue;
            };
            if src >= t_in {
                continue;
            }
            let xrow = &x[src * c_in..(src + 1) * c_in];
            for (ci, &xv) in xrow.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                let wrow = &w[(k * c_in + ci) * c_out..(k * c_in + ci + 1) * c_out];
                for (o, &wv) in orow.iter_mut().zip(wrow) {
                    *o += xv * wv;
                }
            }
        }
    }
    out
}

/// Returns `(dx, dw, dbias)`.
pub(crate) fn conv1d_backward(
    x: &crate::Tensor,
    w: &crate::Tensor,
    g: &[f64],
    stride: usize,
    pad: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (t_in, c_in) = (x.shape()[0], x.shape()[1]);
    let (len, c_out) = (w.shape()[0], w.shape()[2]);
    let xs = x.data();
    let ws = w.data();
    let mut dx = vec![0.0; xs.len()];
    let mut dw = vec![0.0; ws.len()];
    let mut db = vec![0.0; c_out];
    for (t, grow) in g.chunks(c_out).enumerate() {
        for (d, &gv) in db.iter_mut().zip(grow) {
            *d += gv;
        }
        for k in 0..len {
            let Some(src) = (t * stride + k).checked_sub(pad) else {
                continue;
            };
            if src >= t_in {
                continue;
            }
            for ci in 0..c_in {
                let base = (k * c_in + ci) * c_out;
                let wrow = &ws[base..base + c_out];
                let xv = xs[src * c_in + ci];
                let mut acc = 0.0;
                let dwrow = &mut dw[base..base + c_out];
                for co in 0..c_out {
                    acc += grow[co] * wrow[co];
                    dwrow[co] += xv * grow[co];
                }
                dx[src * c_in + ci] += acc;
            }
        }
    }
    (dx, dw, db)
}

/// Returns `(dx, dgamma, dbeta)`. In train mode the batch statistics depend
/// on `x`, which adds the mean and variance correction terms.
pub(crate) fn batch_norm_backward(
    gamma: &[f64],
    inv_std: &[f64],
    xhat: &[f64],
    g: &[f64],
    train: bool,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let c = gamma.len();
    let t = g.len() / c;
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for (grow, xrow) in g.chunks(c).zip(xhat.chunks(c)) {
        for j in 0..c {
            dgamma[j] += grow[j] * xrow[j];
            dbeta[j] += grow[j];
        }
    }
    let mut dx = vec![0.0; g.len()];
    if train {
        // dxhat = g * gamma; mean(dxhat) = dbeta*gamma/T; mean(dxhat*xhat) = dgamma*gamma/T
        let n = t as f64;
        for ((drow, grow), xrow) in dx.chunks_mut(c).zip(g.chunks(c)).zip(xhat.chunks(c)) {
            for j in 0..c {
                let dxhat = grow[j] * gamma[j];
                drow[j] = inv_std[j]
                    * (dxhat - gamma[j] * dbeta[j] / n - xrow[j] * gamma[j] * dgamma[j] / n);
            }
        }
    } else {
        for (drow, grow) in dx.chunks_mut(c).zip(g.chunks(c)) {
            for j in 0..c {
                drow[j] = grow[j] * gamma[j] * inv_std[j];
            }
        }
    }
    (dx, dgamma, dbeta)
}

/// Numerically stable softmax of one segment.
pub(crate) fn softmax_into(x: &[f64], out: &mut [f64]) {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - m).exp();
        z += *o;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
}
