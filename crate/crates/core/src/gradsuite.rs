//! Finite-difference gradient suites over every differentiable op and the
//! composed backbone and fusion graphs.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{grad_check_many, BatchNormState, Mode, Padding, Tape, Target, Var};
use crate::backbone::BackboneConfig;
use crate::error::{Error, Result};
use crate::fusion::{FusionConfig, FusionMode};
use crate::model::AscModel;
use crate::params::Bound;
use crate::tensor::Tensor;

/// Central-difference step.
pub const GRAD_EPS: f64 = 1e-5;
/// Pass threshold on the max relative error.
pub const GRAD_TOL: f64 = 1e-4;
/// Inputs closer than this to a kink are redrawn.
pub const KINK_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Ops,
    Backbone,
    Fusion,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scope::Ops => "ops",
            Scope::Backbone => "backbone",
            Scope::Fusion => "fusion",
        })
    }
}

impl FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ops" => Ok(Scope::Ops),
            "backbone" => Ok(Scope::Backbone),
            "fusion" => Ok(Scope::Fusion),
            _ => Err(Error::config(format!("unknown scope '{s}' (ops, backbone, fusion)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub name: String,
    pub max_rel_error: f64,
    /// `(input index, flat coordinate)` of the worst coordinate.
    pub worst: (usize, usize),
}

impl CaseResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRAD_TOL
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub scope: Scope,
    pub cases: Vec<CaseResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.cases.iter().all(CaseResult::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CaseResult> {
        self.cases.iter().filter(|c| !c.passed())
    }

    pub fn max_rel_error(&self) -> f64 {
        self.cases.iter().map(|c| c.max_rel_error).fold(0.0, f64::max)
    }
}

type Build = Box<dyn Fn(&mut Tape, &[Var], bool) -> Result<Var>>;
type Draw = Box<dyn Fn(&mut ChaCha8Rng) -> Vec<Tensor>>;

struct Case {
    name: String,
    draw: Draw,
    build: Build,
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("valid shape")
}

/// Values at least 0.05 apart, so no pooling window has a near tie.
fn distinct(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| (i as f64 - n as f64 / 2.0) * 0.1).collect();
    v.shuffle(rng);
    let v = v.into_iter().map(|x| x + rng.random_range(0.0..0.05)).collect();
    Tensor::new(shape, v).expect("valid shape")
}

/// Identity whose backward rule scales the gradient by 1.5.
fn corrupt(tape: &mut Tape, v: Var) -> Var {
    let value = tape.value(v).clone();
    tape.custom(
        &[v],
        value,
        Box::new(|_, _, g| vec![g.iter().map(|x| 1.5 * x).collect()]),
    )
}

fn wrap(tape: &mut Tape, v: Var, on: bool) -> Var {
    if on {
        corrupt(tape, v)
    } else {
        v
    }
}

/// `Σ (y + c)²` with a fixed random offset `c`, so every output entry
/// carries a distinct weight.
fn offset_loss(tape: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = tape.shape(y).to_vec();
    let c = tape.constant(uniform(&mut rng, &shape, -1.0, 1.0));
    let z = tape.add(y, c)?;
    Ok(tape.sum_squares(z))
}

fn case(
    name: &str,
    draw: impl Fn(&mut ChaCha8Rng) -> Vec<Tensor> + 'static,
    build: impl Fn(&mut Tape, &[Var], bool) -> Result<Var> + 'static,
) -> Case {
    Case {
        name: name.to_string(),
        draw: Box::new(draw),
        build: Box::new(build),
    }
}

fn ops_cases() -> Vec<Case> {
    let conv = |name: &str, t: usize, cin: usize, l: usize, cout: usize, stride: usize, pad: Padding| {
        case(
            name,
            move |r| {
                vec![
                    uniform(r, &[t, cin], -1.0, 1.0),
                    uniform(r, &[l, cin, cout], -1.0, 1.0),
                    uniform(r, &[cout], -0.5, 0.5),
                ]
            },
            move |tp, v, bad| {
                let y = tp.conv1d(v[0], v[1], v[2], stride, pad)?;
                let y = wrap(tp, y, bad);
                offset_loss(tp, y, 1)
            },
        )
    };
    vec![
        conv("conv1d_valid", 9, 3, 3, 2, 1, Padding::Valid),
        conv("conv1d_strided", 12, 2, 4, 3, 4, Padding::Valid),
        conv("conv1d_same", 7, 2, 3, 2, 1, Padding::Same),
        case(
            "leaky_relu",
            |r| {
                let t = uniform(r, &[6, 3], 0.1, 1.0);
                let signs = uniform(r, &[6, 3], -1.0, 1.0);
                let v = t.data().iter().zip(signs.data()).map(|(a, s)| a * s.signum()).collect();
                vec![Tensor::new(&[6, 3], v).expect("shape")]
            },
            |tp, v, bad| {
                let y = tp.leaky_relu(v[0], 0.3)?;
                let y = wrap(tp, y, bad);
                offset_loss(tp, y, 2)
            },
        ),
        case(
            "batch_norm_train",
            |r| {
                vec![
                    uniform(r, &[6, 3], -2.0, 2.0),
                    uniform(r, &[3], 0.5, 1.5),
                    uniform(r, &[3], -0.5, 0.5),
                ]
            },
            |tp, v, bad| {
                let mut st = BatchNormState::new(3);
                let y = tp.batch_norm(v[0], v[1], v[2], &mut st, Mode::Train)?;
                let y = wrap(tp, y, bad);
                offset_loss(tp, y, 3)
            },
        ),
        case(
            "batch_norm_infer",
            |r| {
                vec![
                    uniform(r, &[5, 4], -2.0, 2.0),
                    uniform(r, &[4], 0.5, 1.5),
                    uniform(r, &[4], -0.5, 0.5),
                ]
            },
            |tp, v, bad| {
                let mut st = BatchNormState {
                    mean: vec![0.1, -0.2, 0.3, 0.0],
                    var: vec![0.5, 1.5, 2.0, 0.8],
                };
                let y = tp.batch_norm(v[0], v[1], v[2], &mut st, Mode::Infer)?;
                let y = wrap(tp, y, bad);
                offset_loss(tp, y, 4)
            },
        ),
        case(
            "max_pool1d",
            |r| vec![distinct(r, &[10, 2])],
            |tp, v, bad| {
                let y = tp.max_pool1d(v[0], 3)?;
                let y = wrap(tp, y, bad);
                offset_loss(tp, y, 5)
            },
        ),
        case(
            "global_avg_pool",
            |r| vec![uniform(r, &[5, 3], -1.0, 1.0)],
            |tp, v, bad| {
                let y = tp.global_avg_pool(v[0])?;
                let y = wrap(tp, y, bad);
                offset_loss(tp, y, 6)
            },
        ),
        case(
            "global_max_pool",
            |r| vec![distinct(r, &[5, 3])],
            |tp, v, bad| {
                let y = tp.global_max_pool(v[0])?;
                let y = wrap(tp, y, bad);
                offset_loss(tp, y, 7)
            },
        ),
        case(
            "dense",
            |r| {
                vec![
                    uniform(r, &[4], -1.0, 1.0),
                    uniform(r, &[4, 3], -1.0, 1.0),
                    uniform(r, &[3], -1.0, 1.0),
                ]
            },
            |tp, v, bad| {
                let y = tp.dense(v[0], v[1], v[2])?;
                let y = wrap(tp, y, bad);
                offset_loss(tp, y, 8)
            },
        ),
        case(
            "add",
            |r| vec![uniform(r, &[3, 2], -1.0, 1.0), uniform(r, &[3, 2], -1.0, 1.0)],
            |tp, v, bad| {
                let y = tp.add(v[0], v[1])?;
                let y = wrap(tp, y, bad);
                offset_loss(tp, y, 9)
            },
        ),
        case(
            "concat",
            |r| vec![uniform(r, &[3], -1.0, 1.0), uniform(r, &[2], -1.0, 1.0)],
            |tp, v, bad| {
                let y = tp.concat(&[v[0], v[1]])?;
                let y = wrap(tp, y, bad);
                offset_loss(tp, y, 10)
            },
        ),
        case(
            "scale_columns",
            |r| vec![uniform(r, &[4, 6], -1.0, 1.0), uniform(r, &[6], 0.0, 1.0)],
            |tp, v, bad| {
                let y = tp.scale_columns(v[0], v[1])?;
                let y = wrap(tp, y, bad);
                offset_loss(tp, y, 11)
            },
        ),
        case(
            "softmax_segments",
            |r| vec![uniform(r, &[8], -2.0, 2.0)],
            |tp, v, bad| {
                let y = tp.softmax_segments(v[0], 2)?;
                let y = wrap(tp, y, bad);
                offset_loss(tp, y, 12)
            },
        ),
        case(
            "softmax_cross_entropy",
            |r| vec![uniform(r, &[5], -2.0, 2.0)],
            |tp, v, bad| {
                let l = wrap(tp, v[0], bad);
                tp.softmax_cross_entropy(l, &Target::Class(3))
            },
        ),
        case(
            "softmax_cross_entropy_soft",
            |r| vec![uniform(r, &[4], -2.0, 2.0)],
            |tp, v, bad| {
                let l = wrap(tp, v[0], bad);
                tp.softmax_cross_entropy(l, &Target::Soft(vec![0.3, 0.0, 0.7, 0.0]))
            },
        ),
        case(
            "sum",
            |r| vec![uniform(r, &[3, 2], -1.0, 1.0)],
            |tp, v, bad| {
                let s = tp.sum(v[0]);
                let s = wrap(tp, s, bad);
                Ok(tp.sum_squares(s))
            },
        ),
        case(
            "sum_squares",
            |r| vec![uniform(r, &[3, 2], -1.0, 1.0)],
            |tp, v, bad| {
                let y = tp.sum_squares(v[0]);
                Ok(wrap(tp, y, bad))
            },
        ),
    ]
}

fn tiny_backbone() -> BackboneConfig {
    BackboneConfig {
        input_samples: 54,
        input_channels: 2,
        front_filter_len: 3,
        front_stride: 3,
        num_filters: 4,
        num_res_blocks: 1,
        res_kernel: 3,
        pool_k: 3,
        code_dim: 3,
        num_classes: 3,
        leaky_slope: 0.3,
    }
}

/// Whole-model case: inputs are the waveform, the tag (if used) and every
/// parameter tensor.
fn model_case(name: &str, fusion: FusionConfig, mode: Mode, skip: bool) -> Result<Case> {
    let bb = tiny_backbone();
    let mut model = AscModel::build(&bb, &fusion, 17)?;
    if !skip {
        model = model.without_residual_skip();
    }
    let uses_tags = fusion.mode.uses_tags();
    let tag_dim = fusion.tag_dim;
    let draw_model = model.clone();
    let draw = move |r: &mut ChaCha8Rng| {
        let mut v = vec![uniform(r, &[bb.input_samples, bb.input_channels], -1.0, 1.0)];
        if uses_tags {
            v.push(uniform(r, &[tag_dim], 0.0, 1.0));
        }
        v.extend(draw_model.params.tensors().iter().map(|t| {
            let mut t = t.clone();
            t.grad = None;
            t.requires_grad = false;
            t
        }));
        v
    };
    let build = move |tp: &mut Tape, v: &[Var], _bad: bool| {
        let mut m = model.clone();
        let n_in = if uses_tags { 2 } else { 1 };
        let bound = Bound::from_vars(v[n_in..].to_vec());
        let tag = uses_tags.then(|| v[1]);
        let out = m.forward_vars(tp, &bound, v[0], tag, mode)?;
        tp.softmax_cross_entropy(out.logits, &Target::Class(1))
    };
    Ok(case(name, draw, build))
}

/// Tag → transform stack → projection → per-head softmax → scaled feature
/// map, against a random feature map.
fn attention_case(name: &str, heads: usize, layers: usize) -> Result<Case> {
    let fusion = FusionConfig::new(FusionMode::Attention, 5)
        .with_heads(heads)
        .with_layers(layers)
        .with_hidden(6);
    let model = AscModel::build(&tiny_backbone(), &fusion, 23)?;
    let params = model.params.clone();
    let n_params = params.len();
    let draw = move |r: &mut ChaCha8Rng| {
        let mut v = vec![uniform(r, &[4, 4], -1.0, 1.0), uniform(r, &[5], 0.0, 1.0)];
        v.extend(params.tensors().iter().map(|t| {
            let mut t = t.clone();
            t.grad = None;
            t.requires_grad = false;
            t
        }));
        v
    };
    let build = move |tp: &mut Tape, v: &[Var], _bad: bool| {
        let mut m = model.clone();
        let bound = Bound::from_vars(v[2..2 + n_params].to_vec());
        let slope = m.backbone.cfg.leaky_slope;
        let mut fw = crate::layers::Forward {
            tape: tp,
            params: &bound,
            bn: &mut m.bn,
            mode: Mode::Train,
        };
        let (_, att) = m.fusion.transform(&mut fw, v[1], slope)?;
        let head = m.fusion.head.as_ref().expect("attention head");
        let a = head.attention_map(&mut fw, att.expect("attention stack"))?;
        let y = fw.tape.scale_columns(v[0], a)?;
        offset_loss(fw.tape, y, 31)
    };
    Ok(case(name, draw, build))
}

fn backbone_cases() -> Result<Vec<Case>> {
    Ok(vec![
        model_case("backbone_train", FusionConfig::none(), Mode::Train, true)?,
        model_case("backbone_infer", FusionConfig::none(), Mode::Infer, true)?,
        model_case("backbone_no_skip", FusionConfig::none(), Mode::Train, false)?,
    ])
}

fn fusion_cases() -> Result<Vec<Case>> {
    let f = |mode| FusionConfig::new(mode, 5).with_hidden(6);
    Ok(vec![
        attention_case("attention_map_depth0", 2, 0)?,
        attention_case("attention_map_depth2", 4, 2)?,
        model_case("codecat", f(FusionMode::Codecat), Mode::Train, true)?,
        model_case("before_code_raw", f(FusionMode::BeforeCode), Mode::Train, true)?,
        model_case("before_code_2", f(FusionMode::BeforeCode).with_layers(2), Mode::Train, true)?,
        model_case("attention_h2_d1", f(FusionMode::Attention).with_heads(2).with_layers(1), Mode::Train, true)?,
        model_case("attention_h4_d0", f(FusionMode::Attention).with_heads(4), Mode::Infer, true)?,
        model_case(
            "combined_shared_h2_d1",
            f(FusionMode::CombinedShared).with_heads(2).with_layers(1),
            Mode::Train,
            true,
        )?,
        model_case(
            "combined_separate_h2_1_2",
            f(FusionMode::CombinedSeparate).with_heads(2).with_separate_layers(1, 2),
            Mode::Train,
            true,
        )?,
    ])
}

fn run_case(c: &Case, seed: u64, corrupt: bool) -> Result<CaseResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..50 {
        let inputs = (c.draw)(&mut rng);
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        (c.build)(&mut tape, &vars, false)?;
        if tape.kink_margin() < KINK_MARGIN {
            continue;
        }
        let report = grad_check_many(|tp, v| (c.build)(tp, v, corrupt), &inputs, GRAD_EPS)?;
        return Ok(CaseResult {
            name: c.name.clone(),
            max_rel_error: report.max_rel_error,
            worst: report.worst,
        });
    }
    Err(Error::Data(format!(
        "{}: could not draw inputs away from non-differentiable points",
        c.name
    )))
}

/// Names of the cases in `scope`.
pub fn case_names(scope: Scope) -> Result<Vec<String>> {
    Ok(cases(scope)?.into_iter().map(|c| c.name).collect())
}

fn cases(scope: Scope) -> Result<Vec<Case>> {
    match scope {
        Scope::Ops => Ok(ops_cases()),
        Scope::Backbone => backbone_cases(),
        Scope::Fusion => fusion_cases(),
    }
}

/// Runs every case in `scope`. `corrupt_op` names an ops-scope case whose
/// backward rule is deliberately broken (negative control).
pub fn run_suite(scope: Scope, corrupt_op: Option<&str>) -> Result<SuiteReport> {
    let cases = cases(scope)?;
    if let Some(op) = corrupt_op {
        if scope != Scope::Ops {
            return Err(Error::config("backward corruption applies to the ops scope only"));
        }
        if !cases.iter().any(|c| c.name == op) {
            return Err(Error::config(format!("no ops case named '{op}'")));
        }
    }
    let results = cases
        .iter()
        .enumerate()
        .map(|(i, c)| run_case(c, 1000 + i as u64, corrupt_op == Some(c.name.as_str())))
        .collect::<Result<Vec<_>>>()?;
    Ok(SuiteReport {
        scope,
        cases: results,
    })
}
