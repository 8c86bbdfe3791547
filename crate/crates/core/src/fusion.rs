//! Tag-vector fusion: concatenation variants, multi-head attention over the
//! filter axis of the feature map, and their combination.
//!
//! Attention splits the `f` filters into `h` contiguous heads. A tag vector
//! is transformed into `f` logits, softmax is taken independently inside
//! each head, and every time step of the feature map is scaled filter-wise
//! by the resulting map.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::layers::{Dense, Forward};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Sound-event posteriors for one recording; every entry lies in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TagVector {
    values: Vec<f64>,
    pub source_id: String,
}

impl TagVector {
    pub fn new(source_id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::dim("empty tag vector"));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::Range(format!("tag entry {i} = {v} outside [0, 1]")));
        }
        Ok(Self {
            values,
            source_id: source_id.into(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::vector(self.values.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    None,
    Codecat,
    BeforeCode,
    Attention,
    CombinedShared,
    CombinedSeparate,
}

impl FusionMode {
    pub const ALL: [FusionMode; 6] = [
        FusionMode::None,
        FusionMode::Codecat,
        FusionMode::BeforeCode,
        FusionMode::Attention,
        FusionMode::CombinedShared,
        FusionMode::CombinedSeparate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::None => "none",
            FusionMode::Codecat => "codecat",
            FusionMode::BeforeCode => "before_code",
            FusionMode::Attention => "attention",
            FusionMode::CombinedShared => "combined_shared",
            FusionMode::CombinedSeparate => "combined_separate",
        }
    }

    pub fn code(self) -> u8 {
        Self::ALL.iter().position(|&m| m == self).unwrap() as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }

    pub fn uses_tags(self) -> bool {
        self != FusionMode::None
    }

    pub fn uses_attention(self) -> bool {
        matches!(
            self,
            FusionMode::Attention | FusionMode::CombinedShared | FusionMode::CombinedSeparate
        )
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown fusion mode '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub mode: FusionMode,
    /// Tag dimensionality `c`.
    pub tag_dim: usize,
    pub n_transform_layers: usize,
    pub transform_hidden_dim: usize,
    pub n_heads: usize,
    /// Separate-stack depths for `combined_separate`.
    pub n_transform_layers_concat: usize,
    pub n_transform_layers_att: usize,
}

impl FusionConfig {
    pub fn new(mode: FusionMode, tag_dim: usize) -> Self {
        Self {
            mode,
            tag_dim,
            n_transform_layers: 0,
            transform_hidden_dim: 128,
            n_heads: 1,
            n_transform_layers_concat: 0,
            n_transform_layers_att: 0,
        }
    }

    pub fn none() -> Self {
        Self::new(FusionMode::None, 0)
    }

    pub fn with_layers(mut self, n: usize) -> Self {
        self.n_transform_layers = n;
        self
    }

    pub fn with_heads(mut self, h: usize) -> Self {
        self.n_heads = h;
        self
    }

    pub fn with_hidden(mut self, d: usize) -> Self {
        self.transform_hidden_dim = d;
        self
    }

    pub fn with_separate_layers(mut self, concat: usize, att: usize) -> Self {
        self.n_transform_layers_concat = concat;
        self.n_transform_layers_att = att;
        self
    }

    pub fn validate(&self, num_filters: usize) -> Result<()> {
        if self.mode.uses_tags() && self.tag_dim == 0 {
            return Err(Error::config("tag-fused modes need a positive tag dimension"));
        }
        if self.transform_hidden_dim == 0 {
            return Err(Error::config("transform hidden width must be positive"));
        }
        if self.n_heads == 0 {
            return Err(Error::config("head count must be at least 1"));
        }
        if self.mode.uses_attention() && num_filters % self.n_heads != 0 {
            return Err(Error::config(format!(
                "{} heads do not divide {num_filters} filters",
                self.n_heads
            )));
        }
        Ok(())
    }

    /// Width of the transformed tag fed to the concatenation branch.
    pub fn concat_width(&self) -> usize {
        let n = match self.mode {
            FusionMode::BeforeCode | FusionMode::CombinedShared => self.n_transform_layers,
            FusionMode::CombinedSeparate => self.n_transform_layers_concat,
            _ => return 0,
        };
        stack_out_dim(n, self.tag_dim, self.transform_hidden_dim)
    }

    /// Width of the fused code handed to the back-end.
    pub fn fused_code_dim(&self, code_dim: usize) -> usize {
        match self.mode {
            FusionMode::Codecat => code_dim + self.tag_dim,
            _ => code_dim,
        }
    }
}

fn stack_out_dim(n_layers: usize, tag_dim: usize, hidden: usize) -> usize {
    if n_layers == 0 {
        tag_dim
    } else {
        hidden
    }
}

/// Per-head normalized attention weights over `f` filters.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub values: Tensor,
    pub heads: usize,
}

impl AttentionMap {
    /// Segment-wise softmax of attention logits.
    pub fn from_logits(logits: &[f64], heads: usize) -> Result<Self> {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(logits.to_vec()));
        let a = tape.softmax_segments(x, heads)?;
        Ok(Self {
            values: tape.value(a).clone(),
            heads,
        })
    }

    pub fn segment_len(&self) -> usize {
        self.values.len() / self.heads
    }
}

/// Scales filter `i` of every time step of `m: [t, f]` by `a[i]`.
pub fn apply_attention(m: &Tensor, a: &AttentionMap) -> Result<Tensor> {
    if m.ndim() != 2 || m.shape()[1] != a.values.len() {
        return Err(Error::dim(format!(
            "feature map {:?} does not match attention map of length {}",
            m.shape(),
            a.values.len()
        )));
    }
    if a.heads == 0 || a.values.len() % a.heads != 0 {
        return Err(Error::config("attention map head structure is inconsistent"));
    }
    let mut tape = Tape::new();
    let mv = tape.constant(m.clone());
    let av = tape.constant(a.values.clone());
    let out = tape.scale_columns(mv, av)?;
    Ok(tape.value(out).clone())
}

/// Stack of FC + LeakyReLU layers applied to a tag vector.
///
/// Layers before the last have width `hidden`; the last maps to `out_dim`.
/// An empty stack is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformStack {
    pub layers: Vec<Dense>,
}

impl TransformStack {
    pub fn build(
        name: &str,
        n_layers: usize,
        tag_dim: usize,
        hidden: usize,
        out_dim: usize,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if n_layers == 0 && out_dim != tag_dim {
            return Err(Error::config(format!(
                "a zero-layer transform is the identity; out_dim {out_dim} must equal tag dim {tag_dim}"
            )));
        }
        let layers = (0..n_layers)
            .map(|i| {
                let d_in = if i == 0 { tag_dim } else { hidden };
                let d_out = if i + 1 == n_layers { out_dim } else { hidden };
                Dense::build(&format!("{name}.{i}"), d_in, d_out, store, rng)
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn out_dim(&self, tag_dim: usize) -> usize {
        self.layers.last().map_or(tag_dim, |l| l.d_out)
    }

    pub fn apply(&self, fw: &mut Forward<'_>, tag: Var, slope: f64) -> Result<Var> {
        let mut x = tag;
        for layer in &self.layers {
            x = layer.apply(fw, x)?;
            x = fw.tape.leaky_relu(x, slope)?;
        }
        Ok(x)
    }
}

/// Transform stack followed by a linear projection to `f` attention logits.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionHead {
    pub projection: Dense,
    pub heads: usize,
}

impl AttentionHead {
    /// Attention map from an already transformed tag.
    pub fn attention_map(&self, fw: &mut Forward<'_>, transformed: Var) -> Result<Var> {
        let logits = self.projection.apply(fw, transformed)?;
        fw.tape.softmax_segments(logits, self.heads)
    }
}

/// Learned fusion layers. `concat` and `att` index into `stacks`; shared
/// mode points both at the same stack.
#[derive(Debug, Clone, PartialEq)]
pub struct Fusion {
    pub cfg: FusionConfig,
    pub stacks: Vec<TransformStack>,
    pub concat: Option<usize>,
    pub att: Option<usize>,
    pub head: Option<AttentionHead>,
}

impl Fusion {
    pub fn build(
        cfg: &FusionConfig,
        num_filters: usize,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        cfg.validate(num_filters)?;
        let c = cfg.tag_dim;
        let hd = cfg.transform_hidden_dim;
        let stack = |name: &str, n: usize, store: &mut ParamStore, rng: &mut _| {
            TransformStack::build(name, n, c, hd, stack_out_dim(n, c, hd), store, rng)
        };
        let mut stacks = Vec::new();
        let (concat, att) = match cfg.mode {
            FusionMode::None | FusionMode::Codecat => (None, None),
            FusionMode::BeforeCode => {
                stacks.push(stack("tag", cfg.n_transform_layers, store, rng)?);
                (Some(0), None)
            }
            FusionMode::Attention => {
                stacks.push(stack("tag", cfg.n_transform_layers, store, rng)?);
                (None, Some(0))
            }
            FusionMode::CombinedShared => {
                stacks.push(stack("tag", cfg.n_transform_layers, store, rng)?);
                (Some(0), Some(0))
            }
            FusionMode::CombinedSeparate => {
                stacks.push(stack("tag_concat", cfg.n_transform_layers_concat, store, rng)?);
                stacks.push(stack("tag_att", cfg.n_transform_layers_att, store, rng)?);
                (Some(0), Some(1))
            }
        };
        let head = match att {
            Some(i) => Some(AttentionHead {
                projection: Dense::build(
                    "attention",
                    stacks[i].out_dim(c),
                    num_filters,
                    store,
                    rng,
                ),
                heads: cfg.n_heads,
            }),
            None => None,
        };
        Ok(Self {
            cfg: cfg.clone(),
            stacks,
            concat,
            att,
            head,
        })
    }

    /// Transformed tags for the concat and attention branches, computing a
    /// shared stack once.
    pub fn transform(
        &self,
        fw: &mut Forward<'_>,
        tag: Var,
        slope: f64,
    ) -> Result<(Option<Var>, Option<Var>)> {
        let mut outs: Vec<Option<Var>> = vec![None; self.stacks.len()];
        let mut get = |i: usize, fw: &mut Forward<'_>| -> Result<Var> {
            if let Some(v) = outs[i] {
                return Ok(v);
            }
            let v = self.stacks[i].apply(fw, tag, slope)?;
            outs[i] = Some(v);
            Ok(v)
        };
        let att = self.att.map(|i| get(i, fw)).transpose()?;
        let concat = self.concat.map(|i| get(i, fw)).transpose()?;
        Ok((concat, att))
    }
}

/// Concatenates the code and the raw tag, code first.
pub fn fuse_codecat(tape: &mut Tape, code: Var, tag: Var) -> Result<Var> {
    tape.concat(&[code, tag])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tag_vector_range_checked() {
        assert!(TagVector::new("a", vec![0.0, 1.0, 0.5]).is_ok());
        assert!(matches!(
            TagVector::new("a", vec![0.2, 1.5]),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn mode_round_trip() {
        for m in FusionMode::ALL {
            assert_eq!(m.as_str().parse::<FusionMode>().unwrap(), m);
            assert_eq!(FusionMode::from_code(m.code()), Some(m));
        }
        assert!("bogus".parse::<FusionMode>().is_err());
    }

    #[test]
    fn heads_must_divide_filters() {
        let cfg = FusionConfig::new(FusionMode::Attention, 80).with_heads(3);
        assert!(matches!(cfg.validate(128), Err(Error::Config(_))));
        assert!(cfg.clone().with_heads(4).validate(128).is_ok());
        // irrelevant for concat-only modes
        let cfg = FusionConfig::new(FusionMode::BeforeCode, 80).with_heads(3);
        assert!(cfg.validate(128).is_ok());
    }

    #[test]
    fn zero_layer_transform_requires_tag_width() {
        let mut store = ParamStore::new();
        let mut rng = rand::rng();
        assert!(TransformStack::build("t", 0, 80, 128, 64, &mut store, &mut rng).is_err());
        assert!(TransformStack::build("t", 0, 80, 128, 80, &mut store, &mut rng).is_ok());
    }

    #[test]
    fn uniform_map_scales_by_heads_over_filters() {
        let a = AttentionMap::from_logits(&[0.0; 8], 2).unwrap();
        assert!(a.values.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let m = Tensor::new(&[2, 8], (0..16).map(|v| v as f64).collect()).unwrap();
        let out = apply_attention(&m, &a).unwrap();
        for (o, v) in out.data().iter().zip(m.data()) {
            assert!((o - v * 2.0 / 8.0).abs() < 1e-15);
        }
    }

    #[test]
    fn apply_attention_by_hand() {
        let a = AttentionMap {
            values: Tensor::vector(vec![0.25, 0.75, 0.75, 0.25]),
            heads: 2,
        };
        let m = Tensor::new(&[1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let out = apply_attention(&m, &a).unwrap();
        assert_eq!(out.data(), &[0.25, 1.5, 2.25, 1.0]);
    }

    #[test]
    fn apply_attention_shape_mismatch() {
        let a = AttentionMap::from_logits(&[0.0; 4], 2).unwrap();
        let m = Tensor::zeros(&[3, 6]);
        assert!(matches!(apply_attention(&m, &a), Err(Error::Dimension(_))));
    }

    #[test]
    fn fused_widths() {
        let cat = FusionConfig::new(FusionMode::Codecat, 80);
        assert_eq!(cat.fused_code_dim(64), 144);
        let bc = FusionConfig::new(FusionMode::BeforeCode, 80).with_layers(0);
        assert_eq!(bc.concat_width(), 80);
        assert_eq!(bc.clone().with_layers(3).concat_width(), 128);
        assert_eq!(bc.fused_code_dim(64), 64);
    }
}
