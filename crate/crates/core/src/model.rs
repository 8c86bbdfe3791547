//! Backbone plus fusion layers as one trainable model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{BatchNormState, Mode, Tape, Target, Var};
use crate::backbone::{dual_pool, Backbone, BackboneConfig};
use crate::error::{Error, Result};
use crate::fusion::{fuse_codecat, Fusion, FusionConfig, FusionMode, TagVector};
use crate::layers::Forward;
use crate::params::{Bound, ParamStore};
use crate::tensor::Tensor;

/// Tape handles for the intermediate results of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    /// Residual-stack output `[t, f]`, before attention.
    pub feature_map: Var,
    pub attention: Option<Var>,
    /// Feature map after attention (equal to `feature_map` without it).
    pub attended: Var,
    pub pooled: Var,
    pub code: Var,
    pub logits: Var,
}

/// Materialized forward results.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneOutput {
    pub feature_map: Tensor,
    pub attention: Option<Tensor>,
    pub pooled: Tensor,
    pub code: Tensor,
    pub logits: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AscModel {
    pub backbone: Backbone,
    pub fusion: Fusion,
    pub params: ParamStore,
    pub bn: Vec<BatchNormState>,
}

/// Builds the plain network with no tag fusion.
pub fn build_backbone(cfg: &BackboneConfig, seed: u64) -> Result<AscModel> {
    AscModel::build(cfg, &FusionConfig::none(), seed)
}

impl AscModel {
    /// Deterministic construction: parameters are drawn from a ChaCha
    /// stream seeded with `seed`, in build order.
    pub fn build(bb: &BackboneConfig, fusion: &FusionConfig, seed: u64) -> Result<Self> {
        bb.validate()?;
        fusion.validate(bb.num_filters)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut bn = Vec::new();
        let code_in = 2 * bb.num_filters + fusion.concat_width();
        let output_in = fusion.fused_code_dim(bb.code_dim);
        let backbone = Backbone::build(bb, code_in, output_in, &mut params, &mut bn, &mut rng)?;
        let fusion = Fusion::build(fusion, bb.num_filters, &mut params, &mut rng)?;
        Ok(Self {
            backbone,
            fusion,
            params,
            bn,
        })
    }

    pub fn backbone_config(&self) -> &BackboneConfig {
        &self.backbone.cfg
    }

    pub fn fusion_config(&self) -> &FusionConfig {
        &self.fusion.cfg
    }

    pub fn mode(&self) -> FusionMode {
        self.fusion.cfg.mode
    }

    /// Width of the code handed to the back-end classifier.
    pub fn code_dim(&self) -> usize {
        self.fusion.cfg.fused_code_dim(self.backbone.cfg.code_dim)
    }

    /// Drops the identity skip from every residual block (ablation only).
    pub fn without_residual_skip(mut self) -> Self {
        self.backbone.residual_skip = false;
        self
    }

    /// Records the full forward pass on `tape`.
    pub fn forward_vars(
        &mut self,
        tape: &mut Tape,
        bound: &Bound,
        waveform: Var,
        tag: Option<Var>,
        mode: Mode,
    ) -> Result<ForwardVars> {
        let Self {
            backbone,
            fusion,
            bn,
            ..
        } = self;
        let slope = backbone.cfg.leaky_slope;
        let tag = match (fusion.cfg.mode.uses_tags(), tag) {
            (false, _) => None,
            (true, Some(t)) => {
                if tape.value(t).len() != fusion.cfg.tag_dim {
                    return Err(Error::dim(format!(
                        "tag vector has {} entries, model expects {}",
                        tape.value(t).len(),
                        fusion.cfg.tag_dim
                    )));
                }
                Some(t)
            }
            (true, None) => {
                return Err(Error::Data(format!(
                    "fusion mode {} needs a tag vector",
                    fusion.cfg.mode
                )))
            }
        };
        let mut fw = Forward {
            tape,
            params: bound,
            bn,
            mode,
        };
        let feature_map = backbone.feature_map(&mut fw, waveform)?;
        let (concat_tag, att_tag) = match tag {
            Some(t) => fusion.transform(&mut fw, t, slope)?,
            None => (None, None),
        };
        let (attended, attention) = match (&fusion.head, att_tag) {
            (Some(head), Some(t)) => {
                let a = head.attention_map(&mut fw, t)?;
                (fw.tape.scale_columns(feature_map, a)?, Some(a))
            }
            _ => (feature_map, None),
        };
        let pooled = dual_pool(fw.tape, attended)?;
        let code_in = match concat_tag {
            Some(t) => fw.tape.concat(&[pooled, t])?,
            None => pooled,
        };
        let mut code = backbone.code.apply(&mut fw, code_in)?;
        if fusion.cfg.mode == FusionMode::Codecat {
            code = fuse_codecat(fw.tape, code, tag.expect("codecat has a tag"))?;
        }
        let logits = backbone.output.apply(&mut fw, code)?;
        Ok(ForwardVars {
            feature_map,
            attention,
            attended,
            pooled,
            code,
            logits,
        })
    }

    /// Forward pass on concrete inputs.
    pub fn forward(
        &mut self,
        waveform: &Tensor,
        tag: Option<&TagVector>,
        mode: Mode,
    ) -> Result<BackboneOutput> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let x = tape.constant(waveform.clone());
        let t = tag.map(|t| tape.constant(t.to_tensor()));
        let v = self.forward_vars(&mut tape, &bound, x, t, mode)?;
        Ok(BackboneOutput {
            feature_map: tape.value(v.feature_map).clone(),
            attention: v.attention.map(|a| tape.value(a).clone()),
            pooled: tape.value(v.pooled).clone(),
            code: tape.value(v.code).clone(),
            logits: tape.value(v.logits).clone(),
        })
    }

    /// Train-mode loss for one example; gradients are scaled by `scale`
    /// and added to the parameter grads. Returns the unscaled loss.
    pub fn accumulate_loss_grad(
        &mut self,
        waveform: &Tensor,
        tag: Option<&Tensor>,
        target: &Target,
        scale: f64,
    ) -> Result<f64> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let x = tape.constant(waveform.clone());
        let t = tag.map(|t| tape.constant(t.clone()));
        let v = self.forward_vars(&mut tape, &bound, x, t, Mode::Train)?;
        let loss = tape.softmax_cross_entropy(v.logits, target)?;
        let grads = tape.backward(loss)?;
        self.params.accumulate(&bound, &grads, scale);
        Ok(tape.value(loss).data()[0])
    }

    /// Infer-mode loss without touching gradients or statistics.
    pub fn eval_loss(
        &mut self,
        waveform: &Tensor,
        tag: Option<&Tensor>,
        target: &Target,
        mode: Mode,
    ) -> Result<f64> {
        let saved = (mode == Mode::Train).then(|| self.bn.clone());
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let x = tape.constant(waveform.clone());
        let t = tag.map(|t| tape.constant(t.clone()));
        let v = self.forward_vars(&mut tape, &bound, x, t, mode)?;
        let loss = tape.softmax_cross_entropy(v.logits, target)?;
        if let Some(bn) = saved {
            self.bn = bn;
        }
        Ok(tape.value(loss).data()[0])
    }
}
