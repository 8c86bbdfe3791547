use std::fs;

use serde_json::json;
use tagasc::{run_grid, Mirror};

use super::{
    bind_to_data, load_data, out_dir, resolve_model, resolve_svm, FUSION_KEYS, MODEL_KEYS, SVM_KEYS,
};
use crate::args::GridArgs;
use crate::config::FileConfig;
use crate::manifest::Manifest;
use crate::{CliError, CliResult};

pub fn grid(a: GridArgs) -> CliResult<()> {
    let mut manifest = Manifest::start("grid");
    let file = FileConfig::load(a.common.config.as_deref())?;
    let allowed: Vec<&str> = MODEL_KEYS.iter().chain(SVM_KEYS).copied().collect();
    file.check_keys(&allowed)?;
    let m = &a.model;
    let fusion_flag = m.fusion.is_some()
        || m.heads.is_some()
        || m.layers.is_some()
        || m.layers_concat.is_some()
        || m.layers_att.is_some();
    if fusion_flag || FUSION_KEYS.iter().any(|k| file.contains(k)) {
        return Err(CliError::Usage(
            "the mirror fixes fusion mode, heads and depths; drop --fusion/--heads/--layers*"
                .into(),
        ));
    }
    let mirror: Mirror = a
        .mirror
        .parse()
        .map_err(|e: tagasc::Error| CliError::Usage(e.to_string()))?;
    let mut base = resolve_model(m, &file, false)?;
    if file.pick(m.filters, "filters")?.is_none() {
        base.backbone.num_filters = base.backbone.num_filters.max(mirror.min_filters());
    }
    let hidden = file.pick(m.hidden, "hidden")?.unwrap_or(128);
    let svm = resolve_svm(&a.svm, &file)?;

    let probe = mirror.spec(1, hidden);
    for cell in &probe.cells {
        cell.validate(base.backbone.num_filters).map_err(|e| {
            CliError::Usage(format!(
                "{mirror} with {} filters: {e}",
                base.backbone.num_filters
            ))
        })?;
    }
    eprintln!("seed: {}", base.seed);

    let data = load_data(&a.data)?;
    data.check_disjoint()?;
    bind_to_data(&mut base, &data)?;
    let tag_dim = data
        .tags
        .as_ref()
        .map(|t| t.dim())
        .ok_or_else(|| tagasc::Error::Data("grid needs tags.txt in the dataset".into()))?;
    let spec = mirror.spec(tag_dim, hidden);
    eprintln!(
        "{mirror}: {} cells, {} filters",
        spec.cells.len(),
        base.backbone.num_filters
    );

    let result = run_grid(&spec, &base, &svm, &data)?;
    let out = out_dir(&a.common, "grid")?;
    let jsonl = out.join(format!("{mirror}.jsonl"));
    let table = out.join(format!("{mirror}.txt"));
    fs::write(&jsonl, result.to_json_lines())?;
    let rendered = result.render();
    fs::write(&table, &rendered)?;
    for c in result.cells.iter().filter(|c| c.error.is_some()) {
        eprintln!(
            "cell {}/{} failed: {}",
            c.row,
            c.col,
            c.error.as_deref().unwrap_or("")
        );
    }
    print!("{rendered}");
    manifest
        .config(json!({
            "mirror": mirror.to_string(),
            "base": serde_json::to_value(&base).expect("config serializes"),
            "svm": serde_json::to_value(svm).expect("config serializes"),
            "hidden": hidden,
        }))
        .seed(base.seed)
        .input(&a.data)
        .output(&jsonl)
        .output(&table)
        .append_to(&out)
}
