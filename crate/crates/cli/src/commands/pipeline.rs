use std::fmt::Write as _;
use std::fs;

use serde_json::json;
use tagasc::checkpoint;
use tagasc::train::{self as pipeline, fit_svm as fit, load_codes, save_codes, Code};
use tagasc::SvmModel;

use super::{
    bind_to_data, load_data, out_dir, pre_emphasis, require, resolve_model, resolve_svm,
    MODEL_KEYS, SVM_KEYS,
};
use crate::args::{EvalArgs, ExtractArgs, FitSvmArgs, Split, TrainArgs};
use crate::config::FileConfig;
use crate::manifest::Manifest;
use crate::CliResult;

pub fn train(a: TrainArgs) -> CliResult<()> {
    let mut manifest = Manifest::start("train");
    let file = FileConfig::load(a.common.config.as_deref())?;
    file.check_keys(MODEL_KEYS)?;
    let mut cfg = resolve_model(&a.model, &file, true)?;
    eprintln!("seed: {}", cfg.seed);
    let data = load_data(&a.data)?;
    data.check_disjoint()?;
    bind_to_data(&mut cfg, &data)?;
    let out = out_dir(&a.common, "train")?;

    let outcome = pipeline::train(&data.train, data.tags.as_ref(), &cfg)?;
    let mut history = String::new();
    for (i, loss) in outcome.history.iter().enumerate() {
        println!("epoch {:>3}  loss {loss:.6}", i + 1);
        let _ = writeln!(history, "{loss:?}");
    }
    let ckpt = out.join("model.ckpt");
    checkpoint::save(&outcome.model, &ckpt)?;
    let hist = out.join("history.txt");
    fs::write(&hist, history)?;
    println!("checkpoint: {}", ckpt.display());
    manifest
        .config(serde_json::to_value(&cfg).expect("config serializes"))
        .seed(cfg.seed)
        .input(&a.data)
        .output(&ckpt)
        .output(&hist)
        .append_to(&out)
}

pub fn extract(a: ExtractArgs) -> CliResult<()> {
    let mut manifest = Manifest::start("extract");
    let file = FileConfig::load(a.common.config.as_deref())?;
    file.check_keys(&["pre-emphasis"])?;
    let beta = pre_emphasis(a.pre_emphasis, &file)?;
    let mut model = checkpoint::load(require(&a.model)?)?;
    let data = load_data(&a.data)?;
    let (recs, name) = match a.split {
        Split::Train => (&data.train, "train"),
        Split::Test => (&data.test, "test"),
    };
    let codes = pipeline::extract_codes(&mut model, recs, data.tags.as_ref(), beta)?;
    let out = out_dir(&a.common, "extract")?;
    let path = out.join(format!("codes-{name}.tsv"));
    save_codes(&codes, &path)?;
    println!(
        "{} codes of dimension {} -> {}",
        codes.len(),
        model.code_dim(),
        path.display()
    );
    manifest
        .config(json!({ "split": name, "pre_emphasis": beta }))
        .input(&a.model)
        .input(&a.data)
        .output(&path)
        .append_to(&out)
}

fn num_classes(codes: &[Code]) -> usize {
    codes
        .iter()
        .filter_map(|c| c.label)
        .max()
        .map_or(0, |m| m + 1)
}

pub fn fit_svm(a: FitSvmArgs) -> CliResult<()> {
    let mut manifest = Manifest::start("fit-svm");
    let file = FileConfig::load(a.common.config.as_deref())?;
    file.check_keys(SVM_KEYS)?;
    let cfg = resolve_svm(&a.svm, &file)?;
    let codes = load_codes(require(&a.codes)?)?;
    let k = a.classes.unwrap_or_else(|| num_classes(&codes));
    let svm = fit(&codes, k, &cfg)?;
    let out = out_dir(&a.common, "fit-svm")?;
    let path = out.join("svm.txt");
    svm.save(&path)?;
    let support: usize = svm.classes.iter().map(|c| c.support.len()).sum();
    println!(
        "{} classes, {} support vectors, kernel {} gamma {}{}",
        svm.num_classes(),
        support,
        svm.kernel.kind,
        svm.kernel.gamma,
        if svm.converged() {
            ""
        } else {
            " (iteration cap reached)"
        }
    );
    println!("svm: {}", path.display());
    manifest
        .config(
            json!({ "svm": serde_json::to_value(cfg).expect("config serializes"), "classes": k }),
        )
        .input(&a.codes)
        .output(&path)
        .append_to(&out)
}

pub fn eval(a: EvalArgs) -> CliResult<()> {
    let mut manifest = Manifest::start("eval");
    let file = FileConfig::load(a.common.config.as_deref())?;
    file.check_keys(&["pre-emphasis"])?;
    let beta = pre_emphasis(a.pre_emphasis, &file)?;
    let mut model = checkpoint::load(require(&a.model)?)?;
    let svm = SvmModel::load(require(&a.svm)?)?;
    let data = load_data(&a.data)?;
    let report = pipeline::evaluate(
        &mut model,
        &svm,
        &data.train,
        &data.test,
        data.tags.as_ref(),
        beta,
    )?;

    let out = out_dir(&a.common, "eval")?;
    let path = out.join("report.json");
    let body = json!({
        "accuracy": report.accuracy,
        "correct": report.correct,
        "total": report.total,
        "confusion": report.confusion,
        "labels": data.vocab.labels(),
    });
    fs::write(&path, format!("{body:#}\n"))?;
    manifest
        .config(json!({ "pre_emphasis": beta }))
        .input(&a.model)
        .input(&a.svm)
        .input(&a.data)
        .output(&path)
        .append_to(&out)?;

    let width = data
        .vocab
        .labels()
        .iter()
        .map(String::len)
        .max()
        .unwrap_or(0);
    println!("confusion (rows: true, columns: predicted)");
    for (label, row) in data.vocab.labels().iter().zip(&report.confusion) {
        let cells: Vec<String> = row.iter().map(|n| format!("{n:>4}")).collect();
        println!("{label:<width$} {}", cells.join(""));
    }
    println!("correct: {}/{}", report.correct, report.total);
    println!("accuracy: {:.2}", report.accuracy);
    Ok(())
}
