mod gradcheck;
mod grid;
mod inspect;
mod pipeline;
mod synth;

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use tagasc::data::augment::DEFAULT_PRE_EMPHASIS;
use tagasc::data::load_dataset;
use tagasc::svm::SvmConfig;
use tagasc::train::{OptimizerKind, TrainConfig};
use tagasc::{BackboneConfig, Dataset, FusionConfig, FusionMode, KernelKind};

use crate::args::{Common, ModelArgs, Scale, SvmArgs, OUTPUT_ROOT_ENV};
use crate::config::FileConfig;
use crate::{CliError, CliResult};

pub use gradcheck::gradcheck;
pub use grid::grid;
pub use inspect::inspect;
pub use pipeline::{eval, extract, fit_svm, train};
pub use synth::synth;

pub const FUSION_KEYS: &[&str] = &["fusion", "heads", "layers", "layers-concat", "layers-att"];

pub const MODEL_KEYS: &[&str] = &[
    "fusion",
    "heads",
    "layers",
    "layers-concat",
    "layers-att",
    "hidden",
    "scale",
    "filters",
    "res-blocks",
    "code-dim",
    "epochs",
    "batch-size",
    "seed",
    "optimizer",
    "lr",
    "mixup",
    "mixup-alpha",
    "pre-emphasis",
];

pub const SVM_KEYS: &[&str] = &["kernel", "gamma", "coef0", "c", "tol", "max-passes"];

/// `--out`, else `$TAGASC_OUTPUT_ROOT/<command>`, else `tagasc-out/<command>`.
pub fn out_dir(common: &Common, command: &str) -> CliResult<PathBuf> {
    let dir = match &common.out {
        Some(d) => d.clone(),
        None => env::var_os(OUTPUT_ROOT_ENV)
            .map_or_else(|| PathBuf::from("tagasc-out"), PathBuf::from)
            .join(command),
    };
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

pub fn load_data(dir: &Path) -> CliResult<Dataset> {
    if !dir.is_dir() {
        return Err(
            tagasc::Error::Data(format!("dataset directory {} not found", dir.display())).into(),
        );
    }
    Ok(load_dataset(dir)?)
}

/// Fails with a data error naming `path` when it does not exist.
pub fn require(path: &Path) -> CliResult<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(tagasc::Error::Data(format!("{} not found", path.display())).into())
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Resolves the fusion flags and rejects combinations that contradict the
/// chosen mode.
fn resolve_fusion(m: &ModelArgs, file: &FileConfig) -> CliResult<FusionConfig> {
    let mode: FusionMode = file
        .pick(m.fusion.clone(), "fusion")?
        .map(|s: String| s.parse())
        .transpose()
        .map_err(|e: tagasc::Error| usage(e.to_string()))?
        .unwrap_or(FusionMode::None);
    let heads: Option<usize> = file.pick(m.heads, "heads")?;
    let layers: Option<usize> = file.pick(m.layers, "layers")?;
    let lc: Option<usize> = file.pick(m.layers_concat, "layers-concat")?;
    let la: Option<usize> = file.pick(m.layers_att, "layers-att")?;
    let hidden: Option<usize> = file.pick(m.hidden, "hidden")?;

    if heads.is_some() && !mode.uses_attention() {
        return Err(usage(format!(
            "--heads has no meaning with --fusion {mode}"
        )));
    }
    let single_stack = matches!(
        mode,
        FusionMode::BeforeCode | FusionMode::Attention | FusionMode::CombinedShared
    );
    if layers.is_some() && !single_stack {
        return Err(usage(format!(
            "--layers has no meaning with --fusion {mode}"
        )));
    }
    if (lc.is_some() || la.is_some()) && mode != FusionMode::CombinedSeparate {
        return Err(usage(format!(
            "--layers-concat/--layers-att need --fusion combined_separate, got {mode}"
        )));
    }
    if hidden.is_some() && matches!(mode, FusionMode::None | FusionMode::Codecat) {
        return Err(usage(format!(
            "--hidden has no meaning with --fusion {mode}"
        )));
    }
    let mut f = FusionConfig::new(mode, 0);
    if let Some(h) = heads {
        f = f.with_heads(h);
    }
    if let Some(n) = layers {
        f = f.with_layers(n);
    }
    if let Some(d) = hidden {
        f = f.with_hidden(d);
    }
    Ok(f.with_separate_layers(lc.unwrap_or(0), la.unwrap_or(0)))
}

/// Model settings merged from flags and the config file, before anything
/// data-dependent is known.
pub fn resolve_model(
    m: &ModelArgs,
    file: &FileConfig,
    fusion_from_flags: bool,
) -> CliResult<TrainConfig> {
    let fusion = if fusion_from_flags {
        resolve_fusion(m, file)?
    } else {
        FusionConfig::none()
    };
    let scale = file.pick(m.scale, "scale")?.unwrap_or(Scale::Desk);
    let mut cfg = TrainConfig::desk(fusion);
    if scale == Scale::Full {
        cfg.backbone = BackboneConfig::full_scale();
    }
    if let Some(f) = file.pick(m.filters, "filters")? {
        cfg.backbone.num_filters = f;
    }
    if let Some(n) = file.pick(m.res_blocks, "res-blocks")? {
        cfg.backbone.num_res_blocks = n;
    }
    if let Some(n) = file.pick(m.code_dim, "code-dim")? {
        cfg.backbone.code_dim = n;
    }
    if let Some(n) = file.pick(m.epochs, "epochs")? {
        cfg.epochs = n;
    }
    if let Some(n) = file.pick(m.batch_size, "batch-size")? {
        cfg.batch_size = n;
    }
    if let Some(s) = file.pick(m.seed, "seed")? {
        cfg.seed = s;
    }
    if let Some(o) = file.pick(m.optimizer.clone(), "optimizer")? {
        cfg.optimizer.kind = o
            .parse::<OptimizerKind>()
            .map_err(|e| usage(e.to_string()))?;
    }
    if let Some(lr) = file.pick(m.lr, "lr")? {
        cfg.optimizer.lr = lr;
    }
    if let Some(b) = file.pick(m.mixup, "mixup")? {
        cfg.mixup = b;
    }
    if let Some(a) = file.pick(m.mixup_alpha, "mixup-alpha")? {
        cfg.mixup_alpha = a;
    }
    if let Some(b) = file.pick(m.pre_emphasis, "pre-emphasis")? {
        cfg.pre_emphasis = b;
    }
    if fusion_from_flags {
        // The tag width comes from the data; any positive stand-in works here.
        let mut probe = cfg.fusion.clone();
        probe.tag_dim = 1;
        probe
            .validate(cfg.backbone.num_filters)
            .map_err(|e| usage(e.to_string()))?;
    }
    Ok(cfg)
}

/// Fills in the input shape, class count and tag width from the data.
pub fn bind_to_data(cfg: &mut TrainConfig, data: &Dataset) -> CliResult<()> {
    let first = data
        .train
        .first()
        .ok_or_else(|| tagasc::Error::Data("training split is empty".into()))?;
    let shape = first.samples.shape().to_vec();
    if let Some(r) = data
        .train
        .iter()
        .chain(&data.test)
        .find(|r| r.samples.shape() != shape.as_slice())
    {
        return Err(tagasc::Error::Data(format!(
            "recording '{}' has shape {:?}, expected {:?} like '{}'",
            r.id,
            r.samples.shape(),
            shape,
            first.id
        ))
        .into());
    }
    cfg.backbone.input_samples = shape[0] - 1;
    cfg.backbone.input_channels = shape[1];
    cfg.backbone.num_classes = data.vocab.len();
    if cfg.fusion.mode.uses_tags() {
        let tags = data.tags.as_ref().ok_or_else(|| {
            tagasc::Error::Data(format!(
                "fusion mode {} needs tags.txt in the dataset",
                cfg.fusion.mode
            ))
        })?;
        cfg.fusion.tag_dim = tags.dim();
    }
    cfg.validate()?;
    Ok(())
}

pub fn resolve_svm(s: &SvmArgs, file: &FileConfig) -> CliResult<SvmConfig> {
    let mut cfg = SvmConfig::default();
    if let Some(k) = file.pick(s.kernel.clone(), "kernel")? {
        cfg.kernel = k.parse::<KernelKind>().map_err(|e| usage(e.to_string()))?;
    }
    cfg.gamma = file.pick(s.gamma, "gamma")?;
    if let Some(v) = file.pick(s.coef0, "coef0")? {
        cfg.coef0 = v;
    }
    if let Some(v) = file.pick(s.c, "c")? {
        cfg.c = v;
    }
    if let Some(v) = file.pick(s.tol, "tol")? {
        cfg.tol = v;
    }
    if let Some(v) = file.pick(s.max_passes, "max-passes")? {
        cfg.max_passes = v;
    }
    if !(cfg.c > 0.0) || !(cfg.tol > 0.0) || cfg.max_passes == 0 {
        return Err(usage("C, tol and max-passes must be positive"));
    }
    if cfg.kernel == KernelKind::Rbf && file.pick(s.coef0, "coef0")?.is_some() {
        return Err(usage("--coef0 applies to the sigmoid kernel only"));
    }
    Ok(cfg)
}

pub fn pre_emphasis(flag: Option<f64>, file: &FileConfig) -> CliResult<f64> {
    Ok(file
        .pick(flag, "pre-emphasis")?
        .unwrap_or(DEFAULT_PRE_EMPHASIS))
}
