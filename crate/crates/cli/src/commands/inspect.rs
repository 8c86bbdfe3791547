use std::fs;

use tagasc::checkpoint::{self, MAGIC};
use tagasc::data::parse_wav;
use tagasc::train::parse_codes;
use tagasc::{AscModel, SvmModel};

use super::{load_data, require};
use crate::args::InspectArgs;
use crate::CliResult;

fn describe_model(m: &AscModel) {
    let bb = m.backbone_config();
    let fc = m.fusion_config();
    println!("checkpoint");
    println!("  fusion: {}", fc.mode);
    if fc.mode.uses_tags() {
        println!(
            "  tag dim {}  heads {}  layers {}  concat/att {}/{}  hidden {}",
            fc.tag_dim,
            fc.n_heads,
            fc.n_transform_layers,
            fc.n_transform_layers_concat,
            fc.n_transform_layers_att,
            fc.transform_hidden_dim
        );
    }
    println!("  residual skip: {}", m.backbone.residual_skip);
    println!("  parameters: {}", m.params.num_scalars());
    println!("  input: ({}, {})", bb.input_samples, bb.input_channels);
    if let Ok(stages) = bb.stage_shapes() {
        for (name, shape) in stages {
            println!("  {name:<16} {shape:?}");
        }
    }
    println!("  code dim: {}", m.code_dim());
}

pub fn inspect(a: InspectArgs) -> CliResult<()> {
    let path = &a.path;
    if path.is_dir() {
        let data = load_data(path)?;
        println!("dataset {}", path.display());
        println!("  scenes: {}", data.vocab.labels().join(", "));
        println!("  train: {}  test: {}", data.train.len(), data.test.len());
        if let Some(r) = data.train.first() {
            println!(
                "  recording shape {:?} at {} Hz",
                r.samples.shape(),
                r.sample_rate
            );
        }
        match &data.tags {
            Some(t) => println!("  tags: {} vectors of dim {}", t.len(), t.dim()),
            None => println!("  tags: none"),
        }
        return Ok(());
    }
    let bytes = fs::read(require(path)?)?;
    if bytes.starts_with(MAGIC) {
        describe_model(&checkpoint::from_bytes(&bytes)?);
    } else if bytes.starts_with(b"RIFF") {
        let rec = parse_wav(&bytes, path.display().to_string())?;
        println!(
            "wav: {} frames x {} channels, {} Hz, {:.3}s",
            rec.frames(),
            rec.channels(),
            rec.sample_rate,
            rec.duration_secs()
        );
    } else if bytes.starts_with(b"tagasc-svm") {
        let text = String::from_utf8_lossy(&bytes);
        let svm = SvmModel::parse(&text)?;
        println!(
            "svm: {} classes, dim {}, kernel {} gamma {} coef0 {}, C {}",
            svm.num_classes(),
            svm.dim(),
            svm.kernel.kind,
            svm.kernel.gamma,
            svm.kernel.coef0,
            svm.c
        );
        for (k, c) in svm.classes.iter().enumerate() {
            println!(
                "  class {k}: {} support vectors, bias {:.6}, converged {}",
                c.support.len(),
                c.bias,
                c.converged
            );
        }
    } else {
        let text = String::from_utf8(bytes).map_err(|_| {
            tagasc::Error::Data(format!("{}: unrecognized binary file", path.display()))
        })?;
        let codes = parse_codes(&text)?;
        let dim = codes.first().map_or(0, |c| c.values.len());
        println!("codes: {} rows of dimension {dim}", codes.len());
    }
    Ok(())
}
