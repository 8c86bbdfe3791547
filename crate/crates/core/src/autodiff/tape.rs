use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule for a user-supplied op: receives the input values, the
/// forward output and the upstream gradient, returns one gradient per input.
pub type CustomBackward =
    Box<dyn Fn(&[&Tensor], &Tensor, &[f64]) -> Vec<Vec<f64>> + Send + Sync>;

/// Convolution padding mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Valid,
    /// Zero padding that keeps the time length (stride 1 only).
    Same,
}

/// Whether batch norm uses the batch statistics or the running estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

pub(crate) enum Op {
    Leaf,
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad: usize,
    },
    LeakyRelu {
        x: Var,
        slope: f64,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        inv_std: Vec<f64>,
        xhat: Vec<f64>,
        train: bool,
    },
    MaxPool {
        x: Var,
        k: usize,
        argmax: Vec<usize>,
    },
    GlobalAvg {
        x: Var,
    },
    GlobalMax {
        x: Var,
        argmax: Vec<usize>,
    },
    Dense {
        x: Var,
        w: Var,
        b: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Concat {
        parts: Vec<Var>,
    },
    ScaleColumns {
        m: Var,
        a: Var,
    },
    SoftmaxSegments {
        x: Var,
        heads: usize,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        target: Vec<f64>,
        probs: Vec<f64>,
    },
    Sum {
        x: Var,
    },
    SumSquares {
        x: Var,
    },
    Custom {
        inputs: Vec<Var>,
        backward: CustomBackward,
    },
}

pub(crate) struct Node {
    pub(crate) value: Tensor,
    pub(crate) op: Op,
    pub(crate) requires_grad: bool,
}

/// Records tensor operations in execution order so gradients can be
/// replayed backward from a scalar.
///
/// Nodes are appended as ops run, so every node's inputs precede it and the
/// reverse of insertion order is a valid topological order.
#[derive(Default)]
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient for `v`, or zeros of length `len` when nothing reached it.
    pub fn get_or_zeros(&self, v: Var, len: usize) -> Vec<f64> {
        self.get(v).map_or_else(|| vec![0.0; len], <[f64]>::to_vec)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf; it is differentiable iff `t.requires_grad`.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let requires_grad = t.requires_grad;
        self.push(t, Op::Leaf, requires_grad)
    }

    /// Records a differentiable leaf regardless of the tensor's flag.
    pub fn var(&mut self, mut t: Tensor) -> Var {
        t.requires_grad = true;
        self.leaf(t)
    }

    pub fn constant(&mut self, mut t: Tensor) -> Var {
        t.requires_grad = false;
        self.leaf(t)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub(crate) fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub(crate) fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Distance of the recorded forward pass from the nearest
    /// non-differentiable point: the smallest `|x|` entering a leaky ReLU
    /// and the smallest gap between the two largest entries of any pooling
    /// window. Finite-difference checks are only meaningful when this
    /// exceeds the probe step.
    pub fn kink_margin(&self) -> f64 {
        let mut margin = f64::INFINITY;
        let mut window_gap = |vals: &mut dyn Iterator<Item = f64>| {
            let (mut a, mut b) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for v in vals {
                if v > a {
                    b = a;
                    a = v;
                } else if v > b {
                    b = v;
                }
            }
            if b.is_finite() {
                margin = margin.min(a - b);
            }
        };
        let mut relu = f64::INFINITY;
        for node in &self.nodes {
            match &node.op {
                Op::LeakyRelu { x, .. } => {
                    let m = self.value(*x).data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
                    relu = relu.min(m);
                }
                Op::MaxPool { x, k, .. } => {
                    let xv = self.value(*x);
                    let c = xv.shape()[1];
                    let t_out = node.value.shape()[0];
                    for o in 0..t_out {
                        for j in 0..c {
                            window_gap(&mut (0..*k).map(|s| xv.data()[(o * k + s) * c + j]));
                        }
                    }
                }
                Op::GlobalMax { x, .. } => {
                    let xv = self.value(*x);
                    let c = xv.shape()[1];
                    for j in 0..c {
                        window_gap(&mut xv.data().iter().skip(j).step_by(c).copied());
                    }
                }
                _ => {}
            }
        }
        margin.min(relu)
    }

    /// Records an op with a caller-supplied backward rule.
    pub fn custom(&mut self, inputs: &[Var], value: Tensor, backward: CustomBackward) -> Var {
        let rg = inputs.iter().any(|&v| self.requires_grad(v));
        self.push(
            value,
            Op::Custom {
                inputs: inputs.to_vec(),
                backward,
            },
            rg,
        )
    }

    /// Propagates d(loss)/d(node) to every node that requires a gradient.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::dim(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        // Intermediate nodes that do not require grad never get an entry.
        for (i, node) in self.nodes.iter().enumerate() {
            if !node.requires_grad {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn backward_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        use super::kernels as k;
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        let mut send = |v: Var, d: Vec<f64>| {
            if self.nodes[v.0].requires_grad {
                accumulate(&mut grads[v.0], d);
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Conv1d {
                x,
                w,
                b,
                stride,
                pad,
            } => {
                let (dx, dw, db) = k::conv1d_backward(val(*x), val(*w), g, *stride, *pad);
                send(*x, dx);
                send(*w, dw);
                send(*b, db);
            }
            Op::LeakyRelu { x, slope } => {
                let d = val(*x)
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&xv, &gv)| if xv > 0.0 { gv } else { slope * gv })
                    .collect();
                send(*x, d);
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                inv_std,
                xhat,
                train,
            } => {
                let (dx, dg, db) =
                    k::batch_norm_backward(val(*gamma).data(), inv_std, xhat, g, *train);
                send(*x, dx);
                send(*gamma, dg);
                send(*beta, db);
            }
            Op::MaxPool { x, argmax, .. } | Op::GlobalMax { x, argmax } => {
                let mut d = vec![0.0; val(*x).len()];
                for (&src, &gv) in argmax.iter().zip(g) {
                    d[src] += gv;
                }
                send(*x, d);
            }
            Op::GlobalAvg { x } => {
                let s = val(*x).shape();
                let (t, c) = (s[0], s[1]);
                let mut d = vec![0.0; t * c];
                for row in d.chunks_mut(c) {
                    for (dv, gv) in row.iter_mut().zip(g) {
                        *dv = gv / t as f64;
                    }
                }
                send(*x, d);
            }
            Op::Dense { x, w, b } => {
                let xs = val(*x).data();
                let ws = val(*w).data();
                let dout = g.len();
                let mut dx = vec![0.0; xs.len()];
                let mut dw = vec![0.0; ws.len()];
                for (i, (&xi, dxi)) in xs.iter().zip(dx.iter_mut()).enumerate() {
                    let wrow = &ws[i * dout..(i + 1) * dout];
                    let dwrow = &mut dw[i * dout..(i + 1) * dout];
                    let mut acc = 0.0;
                    for j in 0..dout {
                        acc += wrow[j] * g[j];
                        dwrow[j] = xi * g[j];
                    }
                    *dxi = acc;
                }
                send(*x, dx);
                send(*w, dw);
                send(*b, g.to_vec());
            }
            Op::Add { a, b } => {
                send(*a, g.to_vec());
                send(*b, g.to_vec());
            }
            Op::Concat { parts } => {
                let mut off = 0;
                for &p in parts {
                    let n = val(p).len();
                    send(p, g[off..off + n].to_vec());
                    off += n;
                }
            }
            Op::ScaleColumns { m, a } => {
                let mv = val(*m);
                let av = val(*a).data();
                let f = av.len();
                let mut dm = vec![0.0; mv.len()];
                let mut da = vec![0.0; f];
                for (t, (mrow, grow)) in mv.data().chunks(f).zip(g.chunks(f)).enumerate() {
                    for j in 0..f {
                        dm[t * f + j] = grow[j] * av[j];
                        da[j] += grow[j] * mrow[j];
                    }
                }
                send(*m, dm);
                send(*a, da);
            }
            Op::SoftmaxSegments { x, heads } => {
                let y = node.value.data();
                let seg = y.len() / heads;
                let mut d = vec![0.0; y.len()];
                for s in 0..*heads {
                    let r = s * seg..(s + 1) * seg;
                    let dot: f64 = y[r.clone()].iter().zip(&g[r.clone()]).map(|(a, b)| a * b).sum();
                    for j in r {
                        d[j] = y[j] * (g[j] - dot);
                    }
                }
                send(*x, d);
            }
            Op::SoftmaxCrossEntropy {
                logits,
                target,
                probs,
            } => {
                let d = probs
                    .iter()
                    .zip(target)
                    .map(|(p, t)| (p - t) * g[0])
                    .collect();
                send(*logits, d);
            }
            Op::Sum { x } => {
                send(*x, vec![g[0]; val(*x).len()]);
            }
            Op::SumSquares { x } => {
                let d = val(*x).data().iter().map(|v| 2.0 * v * g[0]).collect();
                send(*x, d);
            }
            Op::Custom { inputs, backward } => {
                let ins: Vec<&Tensor> = inputs.iter().map(|&v| val(v)).collect();
                let ds = backward(&ins, &node.value, g);
                for (&v, d) in inputs.iter().zip(ds) {
                    send(v, d);
                }
            }
        }
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, d: Vec<f64>) {
    match slot {
        Some(acc) => acc.iter_mut().zip(&d).for_each(|(a, b)| *a += b),
        None => *slot = Some(d),
    }
}
