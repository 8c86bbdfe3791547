//! Parameterized layers built from tape ops.

use rand::Rng;

use crate::autodiff::{BatchNormState, Mode, Padding, Tape, Var};
use crate::error::Result;
use crate::params::{Bound, ParamId, ParamStore};
use crate::tensor::Tensor;

/// State threaded through one forward pass.
pub struct Forward<'a> {
    pub tape: &'a mut Tape,
    pub params: &'a Bound,
    pub bn: &'a mut [BatchNormState],
    pub mode: Mode,
}

/// Fully-connected layer `x · W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Dense {
    pub fn build(
        name: &str,
        d_in: usize,
        d_out: usize,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Self {
        let w = store.add_he_uniform(format!("{name}.weight"), &[d_in, d_out], d_in, rng);
        let b = store.add(format!("{name}.bias"), Tensor::zeros(&[d_out]));
        Self { w, b, d_in, d_out }
    }

    pub fn apply(&self, fw: &mut Forward<'_>, x: Var) -> Result<Var> {
        fw.tape
            .dense(x, fw.params.var(self.w), fw.params.var(self.b))
    }
}

/// Conv → BN → LeakyReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBn {
    pub w: ParamId,
    pub b: ParamId,
    pub gamma: ParamId,
    pub beta: ParamId,
    /// Index of this layer's running statistics.
    pub bn: usize,
    pub stride: usize,
    pub padding: Padding,
}

impl ConvBn {
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        name: &str,
        len: usize,
        c_in: usize,
        c_out: usize,
        stride: usize,
        padding: Padding,
        store: &mut ParamStore,
        bn: &mut Vec<BatchNormState>,
        rng: &mut impl Rng,
    ) -> Self {
        let w = store.add_he_uniform(
            format!("{name}.conv.weight"),
            &[len, c_in, c_out],
            len * c_in,
            rng,
        );
        let b = store.add(format!("{name}.conv.bias"), Tensor::zeros(&[c_out]));
        let gamma = store.add(format!("{name}.bn.gamma"), Tensor::full(&[c_out], 1.0));
        let beta = store.add(format!("{name}.bn.beta"), Tensor::zeros(&[c_out]));
        bn.push(BatchNormState::new(c_out));
        Self {
            w,
            b,
            gamma,
            beta,
            bn: bn.len() - 1,
            stride,
            padding,
        }
    }

    pub fn apply(&self, fw: &mut Forward<'_>, x: Var, slope: f64) -> Result<Var> {
        let p = fw.params;
        let y = fw
            .tape
            .conv1d(x, p.var(self.w), p.var(self.b), self.stride, self.padding)?;
        let y = fw.tape.batch_norm(
            y,
            p.var(self.gamma),
            p.var(self.beta),
            &mut fw.bn[self.bn],
            fw.mode,
        )?;
        fw.tape.leaky_relu(y, slope)
    }
}
