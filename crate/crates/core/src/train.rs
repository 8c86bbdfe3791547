//! Training, code extraction and evaluation.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Mode, Target};
use crate::backbone::BackboneConfig;
use crate::data::augment::{blend, pre_emphasis, sample_lambda, DEFAULT_MIXUP_ALPHA, DEFAULT_PRE_EMPHASIS};
use crate::data::{Dataset, Recording, TagTable};
use crate::error::{Error, ParseError, Result};
use crate::fusion::{FusionConfig, TagVector};
use crate::model::AscModel;
use crate::params::ParamStore;
use crate::svm::{train_ovr, SvmConfig, SvmModel};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(Self::Adam),
            "sgd" => Ok(Self::Sgd),
            _ => Err(Error::config(format!("unknown optimizer '{s}' (adam, sgd)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam or plain SGD over every tensor of a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, params: &ParamStore) -> Self {
        let zeros = || params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            cfg,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// Applies accumulated gradients, then clears them.
    pub fn step(&mut self, params: &mut ParamStore) {
        self.step += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.step);
        let bc2 = 1.0 - c.beta2.powi(self.step);
        for (k, t) in params.tensors_mut().iter_mut().enumerate() {
            let Some(g) = t.grad.take() else { continue };
            let data = t.data_mut();
            match c.kind {
                OptimizerKind::Sgd => {
                    for (w, gi) in data.iter_mut().zip(&g) {
                        *w -= c.lr * gi;
                    }
                }
                OptimizerKind::Adam => {
                    let (m, v) = (&mut self.m[k], &mut self.v[k]);
                    for i in 0..data.len() {
                        m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                        v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                        let mh = m[i] / bc1;
                        let vh = v[i] / bc2;
                        data[i] -= c.lr * mh / (vh.sqrt() + c.eps);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub backbone: BackboneConfig,
    pub fusion: FusionConfig,
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub mixup: bool,
    pub mixup_alpha: f64,
    pub pre_emphasis: f64,
}

impl TrainConfig {
    /// Desk-scale defaults for the synthetic dataset.
    pub fn desk(fusion: FusionConfig) -> Self {
        Self {
            backbone: BackboneConfig::desk(),
            fusion,
            optimizer: OptimizerConfig::default(),
            epochs: 20,
            batch_size: 8,
            seed: 0,
            mixup: true,
            mixup_alpha: DEFAULT_MIXUP_ALPHA,
            pre_emphasis: DEFAULT_PRE_EMPHASIS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch size must be positive"));
        }
        if !(self.optimizer.lr >= 0.0) {
            return Err(Error::config("learning rate must be >= 0"));
        }
        if self.mixup && !(self.mixup_alpha > 0.0) {
            return Err(Error::config("mixup alpha must be positive"));
        }
        self.backbone.validate()?;
        self.fusion.validate(self.backbone.num_filters)
    }
}

/// One model input: pre-emphasized waveform, optional tag, label.
#[derive(Debug, Clone)]
pub struct Example {
    pub id: String,
    pub waveform: Tensor,
    pub tag: Option<Tensor>,
    pub label: Option<usize>,
}

fn lookup_tag<'a>(tags: Option<&'a TagTable>, id: &str) -> Result<&'a TagVector> {
    tags.and_then(|t| t.get(id))
        .ok_or_else(|| Error::Data(format!("no tag vector for recording '{id}'")))
}

/// Pre-emphasizes each recording and attaches its tag when the fusion
/// mode needs one.
pub fn prepare(
    recs: &[Recording],
    tags: Option<&TagTable>,
    fusion: &FusionConfig,
    beta: f64,
) -> Result<Vec<Example>> {
    recs.iter()
        .map(|r| {
            let tag = if fusion.mode.uses_tags() {
                let t = lookup_tag(tags, &r.id)?;
                if t.len() != fusion.tag_dim {
                    return Err(Error::dim(format!(
                        "tag for '{}' has {} entries, model expects {}",
                        r.id,
                        t.len(),
                        fusion.tag_dim
                    )));
                }
                Some(t.to_tensor())
            } else {
                None
            };
            Ok(Example {
                id: r.id.clone(),
                waveform: pre_emphasis(&r.samples, beta)?,
                tag,
                label: r.scene_label,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: AscModel,
    /// Mean training loss per epoch.
    pub history: Vec<f64>,
}

pub fn train(recs: &[Recording], tags: Option<&TagTable>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if recs.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    let examples = prepare(recs, tags, &cfg.fusion, cfg.pre_emphasis)?;
    let k = cfg.backbone.num_classes;
    for e in &examples {
        match e.label {
            Some(l) if l < k => {}
            Some(l) => return Err(Error::Data(format!("'{}' has label {l} >= {k} classes", e.id))),
            None => return Err(Error::Data(format!("training recording '{}' has no label", e.id))),
        }
    }
    let model = AscModel::build(&cfg.backbone, &cfg.fusion, cfg.seed)?;
    train_examples(model, &examples, cfg)
}

/// Trains an already built model on prepared examples.
pub fn train_examples(mut model: AscModel, examples: &[Example], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let k = cfg.backbone.num_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut opt = Optimizer::new(cfg.optimizer, &model.params);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let a = &examples[i];
                let la = a.label.expect("labels checked");
                let loss = if cfg.mixup {
                    let b = &examples[rng.random_range(0..examples.len())];
                    let lambda = sample_lambda(cfg.mixup_alpha, &mut rng)?;
                    let x = blend(&a.waveform, &b.waveform, lambda)?;
                    let tag = match (&a.tag, &b.tag) {
                        (Some(ta), Some(tb)) => Some(blend(ta, tb, lambda)?),
                        _ => None,
                    };
                    let mut y = vec![0.0; k];
                    y[la] += lambda;
                    y[b.label.expect("labels checked")] += 1.0 - lambda;
                    model.accumulate_loss_grad(&x, tag.as_ref(), &Target::Soft(y), scale)?
                } else {
                    model.accumulate_loss_grad(&a.waveform, a.tag.as_ref(), &Target::Class(la), scale)?
                };
                total += loss;
            }
            opt.step(&mut model.params);
        }
        let mean = total / examples.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Data("training diverged (non-finite loss)".into()));
        }
        history.push(mean);
    }
    model.params.zero_grad();
    Ok(TrainOutcome { model, history })
}

/// A back-end input vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Code {
    pub id: String,
    pub label: Option<usize>,
    pub values: Vec<f64>,
}

/// Infer-mode codes for every recording.
pub fn extract_codes(
    model: &mut AscModel,
    recs: &[Recording],
    tags: Option<&TagTable>,
    pre_emphasis_beta: f64,
) -> Result<Vec<Code>> {
    let fusion = model.fusion.cfg.clone();
    let examples = prepare(recs, tags, &fusion, pre_emphasis_beta)?;
    examples
        .into_iter()
        .map(|e| {
            let tag = match e.tag {
                Some(t) => Some(TagVector::new(e.id.clone(), t.into_data())?),
                None => None,
            };
            let out = model.forward(&e.waveform, tag.as_ref(), Mode::Infer)?;
            if !out.code.is_finite() {
                return Err(Error::Data(format!("non-finite code for '{}'", e.id)));
            }
            Ok(Code {
                id: e.id,
                label: e.label,
                values: out.code.into_data(),
            })
        })
        .collect()
}

/// Codes file: one `id<TAB>label<TAB>v1 v2 ...` line per code, `-` for a
/// missing label.
pub fn format_codes(codes: &[Code]) -> String {
    let mut s = String::new();
    for c in codes {
        let label = c.label.map_or_else(|| "-".to_string(), |l| l.to_string());
        let vals: Vec<String> = c.values.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(s, "{}\t{}\t{}", c.id, label, vals.join(" "));
    }
    s
}

pub fn parse_codes(text: &str) -> Result<Vec<Code>> {
    let mut out: Vec<Code> = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |reason: String| {
            Error::Parse(ParseError::Line {
                line: i + 1,
                reason,
            })
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(err(format!("expected 3 tab-separated columns, found {}", cols.len())));
        }
        let label = match cols[1] {
            "-" => None,
            s => Some(s.parse().map_err(|_| err(format!("bad label '{s}'")))?),
        };
        let values = cols[2]
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|_| err(format!("'{v}' is not a number"))))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = out.first() {
            if first.values.len() != values.len() {
                return Err(err(format!(
                    "code has {} values, expected {}",
                    values.len(),
                    first.values.len()
                )));
            }
        }
        if values.is_empty() {
            return Err(err("empty code".into()));
        }
        if !seen.insert(cols[0].to_string()) {
            return Err(err(format!("duplicate id '{}'", cols[0])));
        }
        out.push(Code {
            id: cols[0].to_string(),
            label,
            values,
        });
    }
    Ok(out)
}

pub fn save_codes(codes: &[Code], path: &Path) -> Result<()> {
    Ok(fs::write(path, format_codes(codes))?)
}

pub fn load_codes(path: &Path) -> Result<Vec<Code>> {
    parse_codes(&fs::read_to_string(path)?)
}

fn labelled(codes: &[Code]) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    codes
        .iter()
        .map(|c| {
            let l = c
                .label
                .ok_or_else(|| Error::Data(format!("code '{}' has no label", c.id)))?;
            Ok((c.values.clone(), l))
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().unzip())
}

pub fn fit_svm(codes: &[Code], num_classes: usize, cfg: &SvmConfig) -> Result<SvmModel> {
    let (x, y) = labelled(codes)?;
    train_ovr(&x, &y, num_classes, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Overall accuracy in percent.
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

/// Fails with a data error listing every id present in both sets.
pub fn check_disjoint<'a>(
    train: impl IntoIterator<Item = &'a str>,
    test: impl IntoIterator<Item = &'a str>,
) -> Result<()> {
    let train: HashSet<&str> = train.into_iter().collect();
    let overlap: Vec<&str> = test.into_iter().filter(|id| train.contains(id)).collect();
    if overlap.is_empty() {
        Ok(())
    } else {
        Err(Error::Data(format!(
            "train/test overlap: {}",
            overlap.join(", ")
        )))
    }
}

pub fn evaluate_codes(svm: &SvmModel, test: &[Code]) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::Data("empty test set".into()));
    }
    let k = svm.num_classes();
    let mut confusion = vec![vec![0; k]; k];
    let mut correct = 0;
    for c in test {
        let truth = c
            .label
            .ok_or_else(|| Error::Data(format!("test code '{}' has no label", c.id)))?;
        if truth >= k {
            return Err(Error::Data(format!("'{}' has label {truth} >= {k} classes", c.id)));
        }
        let pred = svm.predict(&c.values)?;
        confusion[truth][pred] += 1;
        correct += usize::from(pred == truth);
    }
    Ok(EvalReport {
        accuracy: 100.0 * correct as f64 / test.len() as f64,
        correct,
        total: test.len(),
        confusion,
    })
}

/// Extracts test codes and scores them, after checking that no test id
/// was used for training.
pub fn evaluate(
    model: &mut AscModel,
    svm: &SvmModel,
    train: &[Recording],
    test: &[Recording],
    tags: Option<&TagTable>,
    pre_emphasis_beta: f64,
) -> Result<EvalReport> {
    check_disjoint(
        train.iter().map(|r| r.id.as_str()),
        test.iter().map(|r| r.id.as_str()),
    )?;
    let codes = extract_codes(model, test, tags, pre_emphasis_beta)?;
    evaluate_codes(svm, &codes)
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub model: AscModel,
    pub svm: SvmModel,
    pub history: Vec<f64>,
    pub report: EvalReport,
}

/// train, extract train codes, fit the SVM, evaluate on the test split.
pub fn run_pipeline(data: &Dataset, cfg: &TrainConfig, svm_cfg: &SvmConfig) -> Result<PipelineResult> {
    data.check_disjoint()?;
    let tags = data.tags.as_ref();
    let TrainOutcome { mut model, history } = train(&data.train, tags, cfg)?;
    let codes = extract_codes(&mut model, &data.train, tags, cfg.pre_emphasis)?;
    let svm = fit_svm(&codes, cfg.backbone.num_classes, svm_cfg)?;
    let report = evaluate(&mut model, &svm, &data.train, &data.test, tags, cfg.pre_emphasis)?;
    Ok(PipelineResult {
        model,
        svm,
        history,
        report,
    })
}
