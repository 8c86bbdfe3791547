//! Raw-waveform residual CNN: strided front-end conv, residual blocks with
//! max pooling, dual global pooling, and the code/output heads.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{conv_out_len, BatchNormState, Padding, Tape, Var};
use crate::error::{Error, Result};
use crate::layers::{ConvBn, Dense, Forward};
use crate::params::ParamStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub input_samples: usize,
    pub input_channels: usize,
    pub front_filter_len: usize,
    pub front_stride: usize,
    /// Filter count `f` shared by every conv layer.
    pub num_filters: usize,
    pub num_res_blocks: usize,
    pub res_kernel: usize,
    pub pool_k: usize,
    pub code_dim: usize,
    pub num_classes: usize,
    pub leaky_slope: f64,
}

impl BackboneConfig {
    /// The full-size network: 10 s of 48 kHz stereo after pre-emphasis.
    pub fn full_scale() -> Self {
        Self {
            input_samples: 479_999,
            input_channels: 2,
            front_filter_len: 12,
            front_stride: 12,
            num_filters: 128,
            num_res_blocks: 7,
            res_kernel: 3,
            pool_k: 3,
            code_dim: 64,
            num_classes: 10,
            leaky_slope: 0.3,
        }
    }

    /// Laptop-sized variant used with the synthetic dataset.
    pub fn desk() -> Self {
        Self {
            input_samples: 9_599,
            input_channels: 1,
            num_filters: 16,
            num_res_blocks: 3,
            code_dim: 8,
            num_classes: 4,
            ..Self::full_scale()
        }
    }

    /// Checks the layer arithmetic and returns the time length entering
    /// each residual block followed by the final feature-map length.
    pub fn time_lengths(&self) -> Result<Vec<usize>> {
        if self.front_stride != self.front_filter_len {
            return Err(Error::config(format!(
                "strided front-end needs stride == filter length, got stride {} and length {}",
                self.front_stride, self.front_filter_len
            )));
        }
        for (name, v) in [
            ("input_channels", self.input_channels),
            ("front_filter_len", self.front_filter_len),
            ("num_filters", self.num_filters),
            ("res_kernel", self.res_kernel),
            ("pool_k", self.pool_k),
            ("code_dim", self.code_dim),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.res_kernel % 2 == 0 {
            return Err(Error::config("residual conv kernel must be odd for same padding"));
        }
        if self.num_classes < 2 {
            return Err(Error::config("need at least 2 classes"));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::config(format!("leaky slope {} not in (0, 1)", self.leaky_slope)));
        }
        let mut t = conv_out_len(
            self.input_samples,
            self.front_filter_len,
            self.front_stride,
            Padding::Valid,
        )
        .map_err(|_| {
            Error::config(format!(
                "front-end: input length {} < filter length {}",
                self.input_samples, self.front_filter_len
            ))
        })?;
        let mut lens = vec![t];
        for i in 0..self.num_res_blocks {
            if t < 2 || t < self.pool_k {
                return Err(Error::config(format!(
                    "residual block {}: input length {t} cannot be batch-normalized and pooled by {}",
                    i + 1,
                    self.pool_k
                )));
            }
            t /= self.pool_k;
            lens.push(t);
        }
        if t < 1 {
            return Err(Error::config("feature map is empty after pooling"));
        }
        Ok(lens)
    }

    pub fn validate(&self) -> Result<()> {
        self.time_lengths().map(|_| ())
    }

    /// Output shape of every stage for a plain (unfused) network:
    /// front-end, residual stack, avg pool, max pool, concat, code, output.
    pub fn stage_shapes(&self) -> Result<Vec<(&'static str, Vec<usize>)>> {
        let lens = self.time_lengths()?;
        let f = self.num_filters;
        Ok(vec![
            ("strided-conv", vec![lens[0], f]),
            ("res-blocks", vec![*lens.last().unwrap(), f]),
            ("global-avg-pool", vec![f]),
            ("global-max-pool", vec![f]),
            ("concat", vec![2 * f]),
            ("code", vec![self.code_dim]),
            ("output", vec![self.num_classes]),
        ])
    }

    /// Feature-map shape `[t, f]` after the residual stack.
    pub fn feature_map_shape(&self) -> Result<(usize, usize)> {
        let lens = self.time_lengths()?;
        Ok((*lens.last().unwrap(), self.num_filters))
    }
}

/// Two conv layers with an identity skip, followed by max pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct ResBlock {
    pub first: ConvBn,
    pub second: ConvBn,
}

impl ResBlock {
    pub fn build(
        name: &str,
        cfg: &BackboneConfig,
        store: &mut ParamStore,
        bn: &mut Vec<BatchNormState>,
        rng: &mut impl Rng,
    ) -> Self {
        let f = cfg.num_filters;
        let k = cfg.res_kernel;
        Self {
            first: ConvBn::build(&format!("{name}.0"), k, f, f, 1, Padding::Same, store, bn, rng),
            second: ConvBn::build(&format!("{name}.1"), k, f, f, 1, Padding::Same, store, bn, rng),
        }
    }

    /// `maxpool(x + convpath(x))`, or `maxpool(convpath(x))` without the skip.
    pub fn apply(
        &self,
        fw: &mut Forward<'_>,
        x: Var,
        cfg: &BackboneConfig,
        skip: bool,
    ) -> Result<Var> {
        let f = fw.tape.shape(x)[1];
        if f != cfg.num_filters {
            return Err(Error::dim(format!(
                "residual block expects {} channels, got {f}",
                cfg.num_filters
            )));
        }
        let y = self.first.apply(fw, x, cfg.leaky_slope)?;
        let y = self.second.apply(fw, y, cfg.leaky_slope)?;
        let y = if skip { fw.tape.add(x, y)? } else { y };
        fw.tape.max_pool1d(y, cfg.pool_k)
    }
}

/// Layer layout of the backbone. Parameters live in the owning model's
/// [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    pub cfg: BackboneConfig,
    pub front: ConvBn,
    pub blocks: Vec<ResBlock>,
    /// Maps the (possibly fused) pooled vector to the code.
    pub code: Dense,
    /// Classifier head over the (possibly fused) code.
    pub output: Dense,
    pub residual_skip: bool,
}

impl Backbone {
    /// Registers backbone parameters in build order. `code_in` and
    /// `output_in` are the head input widths, which fusion modes widen.
    pub fn build(
        cfg: &BackboneConfig,
        code_in: usize,
        output_in: usize,
        store: &mut ParamStore,
        bn: &mut Vec<BatchNormState>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let front = ConvBn::build(
            "front",
            cfg.front_filter_len,
            cfg.input_channels,
            cfg.num_filters,
            cfg.front_stride,
            Padding::Valid,
            store,
            bn,
            rng,
        );
        let blocks = (0..cfg.num_res_blocks)
            .map(|i| ResBlock::build(&format!("block{i}"), cfg, store, bn, rng))
            .collect();
        let code = Dense::build("code", code_in, cfg.code_dim, store, rng);
        let output = Dense::build("output", output_in, cfg.num_classes, store, rng);
        Ok(Self {
            cfg: cfg.clone(),
            front,
            blocks,
            code,
            output,
            residual_skip: true,
        })
    }

    /// Front-end and residual stack: waveform `[N, C]` to feature map `[t, f]`.
    pub fn feature_map(&self, fw: &mut Forward<'_>, waveform: Var) -> Result<Var> {
        let shape = fw.tape.shape(waveform);
        if shape != [self.cfg.input_samples, self.cfg.input_channels] {
            return Err(Error::dim(format!(
                "waveform shape {shape:?} does not match configured ({}, {})",
                self.cfg.input_samples, self.cfg.input_channels
            )));
        }
        let mut x = self.front.apply(fw, waveform, self.cfg.leaky_slope)?;
        for block in &self.blocks {
            x = block.apply(fw, x, &self.cfg, self.residual_skip)?;
        }
        Ok(x)
    }
}

/// Global average and max pooling concatenated: `[t, f] -> [2f]`.
pub fn dual_pool(tape: &mut Tape, m: Var) -> Result<Var> {
    let avg = tape.global_avg_pool(m)?;
    let max = tape.global_max_pool(m)?;
    tape.concat(&[avg, max])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_lengths() {
        let lens = BackboneConfig::full_scale().time_lengths().unwrap();
        assert_eq!(lens, vec![39999, 13333, 4444, 1481, 493, 164, 54, 18]);
    }

    #[test]
    fn desk_lengths() {
        // floor((9599 - 12) / 12) + 1 = 799, then 799 -> 266 -> 88 -> 29
        let lens = BackboneConfig::desk().time_lengths().unwrap();
        assert_eq!(lens, vec![799, 266, 88, 29]);
    }

    #[test]
    fn stride_must_equal_filter_length() {
        let cfg = BackboneConfig {
            front_stride: 6,
            ..BackboneConfig::desk()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn too_many_blocks_names_the_stage() {
        let cfg = BackboneConfig {
            num_res_blocks: 9,
            ..BackboneConfig::desk()
        };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("residual block 7"), "{err}");
    }

    #[test]
    fn input_shorter_than_front_filter() {
        let cfg = BackboneConfig {
            input_samples: 5,
            ..BackboneConfig::desk()
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("front-end"));
    }
}
