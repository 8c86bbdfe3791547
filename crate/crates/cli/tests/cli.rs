use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn tagasc(args: &[&str], cwd: &Path, root: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tagasc"));
    cmd.args(args)
        .current_dir(cwd)
        .env_remove("TAGASC_OUTPUT_ROOT");
    if let Some(r) = root {
        cmd.env("TAGASC_OUTPUT_ROOT", r);
    }
    cmd.output().unwrap()
}

fn ok(o: &Output) -> String {
    assert!(
        o.status.success(),
        "exit {:?}: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn tiny_spec(dir: &Path) -> String {
    let spec = dir.join("spec.json");
    fs::write(
        &spec,
        r#"{"n_train": 12, "n_test": 6, "duration_samples": 1201}"#,
    )
    .unwrap();
    spec.to_str().unwrap().to_string()
}

fn synth(dir: &TempDir, name: &str) -> String {
    let spec = tiny_spec(dir.path());
    let out = dir.path().join(name);
    ok(&tagasc(
        &["synth", "--spec", &spec, "--out", p(&out)],
        dir.path(),
        None,
    ));
    out.to_str().unwrap().to_string()
}

fn manifest_lines(dir: &Path) -> Vec<serde_json::Value> {
    fs::read_to_string(dir.join("manifest.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn synth_with_fixed_seed_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let spec = tiny_spec(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&tagasc(
            &["synth", "--spec", &spec, "--seed", "11", "--out", p(out)],
            dir.path(),
            None,
        ));
    }
    let mut names: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .filter(|n| n != "manifest.jsonl")
        .collect();
    names.sort();
    assert!(names.len() > 2);
    for n in names {
        let (x, y) = (a.join(&n), b.join(&n));
        if x.is_dir() {
            for e in fs::read_dir(&x).unwrap() {
                let f = e.unwrap().file_name();
                assert_eq!(
                    fs::read(x.join(&f)).unwrap(),
                    fs::read(y.join(&f)).unwrap(),
                    "{f:?}"
                );
            }
        } else {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{n:?}");
        }
    }
}

#[test]
fn manifest_gains_one_line_per_run() {
    let dir = TempDir::new().unwrap();
    let spec = tiny_spec(dir.path());
    let out = dir.path().join("d");
    for seed in ["1", "2"] {
        ok(&tagasc(
            &["synth", "--spec", &spec, "--seed", seed, "--out", p(&out)],
            dir.path(),
            None,
        ));
    }
    let lines = manifest_lines(&out);
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["command"], "synth");
    assert_eq!(lines[0]["seed"], 1);
    assert_eq!(lines[1]["seed"], 2);
    for key in [
        "config",
        "inputs",
        "outputs",
        "tool_version",
        "started_unix",
        "finished_unix",
    ] {
        assert!(lines[1].get(key).is_some(), "{key}");
    }
}

#[test]
fn flag_beats_config_file_beats_default() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir, "data");
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "# small run\nepochs = 1\nfilters = 4\nres-blocks = 2\nseed = 5\n",
    )
    .unwrap();

    let from_file = dir.path().join("f");
    ok(&tagasc(
        &[
            "train",
            "--data",
            &data,
            "--config",
            p(&cfg),
            "--out",
            p(&from_file),
        ],
        dir.path(),
        None,
    ));
    let m = &manifest_lines(&from_file)[0];
    assert_eq!(m["seed"], 5);
    assert_eq!(m["config"]["epochs"], 1);

    let flagged = dir.path().join("g");
    let args = [
        "train",
        "--data",
        &data,
        "--config",
        p(&cfg),
        "--seed",
        "9",
        "--out",
        p(&flagged),
    ];
    ok(&tagasc(&args, dir.path(), None));
    assert_eq!(manifest_lines(&flagged)[0]["seed"], 9);
    let history = fs::read_to_string(flagged.join("history.txt")).unwrap();
    assert_eq!(history.lines().count(), 1);
}

#[test]
fn unknown_or_duplicate_config_keys_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir, "data");
    for body in [
        "epochs = 1\nwarp = 3\n",
        "epochs = 1\nepochs = 2\n",
        "kernel = rbf\n",
    ] {
        let cfg = dir.path().join("bad.cfg");
        fs::write(&cfg, body).unwrap();
        let o = tagasc(
            &["train", "--data", &data, "--config", p(&cfg)],
            dir.path(),
            None,
        );
        assert_eq!(o.status.code(), Some(2), "{body:?}");
    }
}

#[test]
fn contradictory_flags_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir, "data");
    let cases: [&[&str]; 5] = [
        &["--fusion", "codecat", "--heads", "2"],
        &["--fusion", "attention", "--layers-concat", "1"],
        &["--fusion", "none", "--hidden", "8"],
        &["--fusion", "attention", "--heads", "3", "--filters", "16"],
        &[
            "--fusion",
            "combined_shared",
            "--layers",
            "1",
            "--layers-att",
            "1",
        ],
    ];
    for extra in cases {
        let mut args = vec!["train", "--data", data.as_str()];
        args.extend_from_slice(extra);
        let o = tagasc(&args, dir.path(), None);
        assert_eq!(o.status.code(), Some(2), "{extra:?}");
    }
    let o = tagasc(
        &[
            "fit-svm", "--codes", "x.tsv", "--kernel", "rbf", "--coef0", "1",
        ],
        dir.path(),
        None,
    );
    assert_eq!(o.status.code(), Some(2));
    let o = tagasc(&["train", "--bogus"], dir.path(), None);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn output_root_env_sets_default_directory() {
    let dir = TempDir::new().unwrap();
    let spec = tiny_spec(dir.path());
    let root = dir.path().join("root");
    ok(&tagasc(
        &["synth", "--spec", &spec],
        dir.path(),
        Some(&root),
    ));
    assert!(root.join("synth").join("manifest.jsonl").exists());

    ok(&tagasc(&["synth", "--spec", &spec], dir.path(), None));
    assert!(dir.path().join("tagasc-out/synth/manifest.jsonl").exists());
}

#[test]
fn eval_ends_with_accuracy_line() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir, "data");
    let root = dir.path().join("runs");
    let r = Some(root.as_path());
    let args = [
        "train",
        "--data",
        &data,
        "--epochs",
        "1",
        "--filters",
        "4",
        "--res-blocks",
        "2",
    ];
    ok(&tagasc(&args, dir.path(), r));
    let ckpt = root.join("train/model.ckpt");
    ok(&tagasc(
        &["extract", "--model", p(&ckpt), "--data", &data],
        dir.path(),
        r,
    ));
    let codes = root.join("extract/codes-train.tsv");
    ok(&tagasc(&["fit-svm", "--codes", p(&codes)], dir.path(), r));
    let svm = root.join("fit-svm/svm.txt");
    let out = ok(&tagasc(
        &[
            "eval",
            "--model",
            p(&ckpt),
            "--svm",
            p(&svm),
            "--data",
            &data,
        ],
        dir.path(),
        r,
    ));
    let last = out.lines().last().unwrap();
    let value = last.strip_prefix("accuracy: ").expect(last);
    let (whole, frac) = value.split_once('.').unwrap();
    assert!(
        frac.len() == 2 && whole.parse::<u32>().unwrap() <= 100,
        "{last}"
    );

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("eval/report.json")).unwrap()).unwrap();
    assert_eq!(report["total"], 6);
}

#[test]
fn missing_inputs_map_to_exit_codes() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    assert_eq!(
        tagasc(&["synth", "--spec", "nope.json"], d, None)
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        tagasc(&["synth", "--config", "nope.cfg"], d, None)
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        tagasc(&["train", "--data", "nope"], d, None).status.code(),
        Some(3)
    );
    assert_eq!(
        tagasc(&["inspect", "nope.wav"], d, None).status.code(),
        Some(3)
    );
}

#[test]
fn gradcheck_reports_each_case() {
    let dir = TempDir::new().unwrap();
    let out = ok(&tagasc(
        &["gradcheck", "--scope", "backbone"],
        dir.path(),
        None,
    ));
    assert!(out.contains("backbone_train"));
    assert!(out.trim_end().ends_with("gradcheck: pass"));
    let o = tagasc(&["gradcheck", "--scope", "nonsense"], dir.path(), None);
    assert_eq!(o.status.code(), Some(2));
}
