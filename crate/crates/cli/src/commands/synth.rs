use std::fs;

use tagasc::data::{generate_synthetic, write_dataset};
use tagasc::{Dataset, SynthSpec};

use super::out_dir;
use crate::args::SynthArgs;
use crate::config::FileConfig;
use crate::manifest::Manifest;
use crate::{CliError, CliResult};

pub fn synth(a: SynthArgs) -> CliResult<()> {
    let mut manifest = Manifest::start("synth");
    let file = FileConfig::load(a.common.config.as_deref())?;
    file.check_keys(&["seed"])?;
    let mut spec = match &a.spec {
        None => SynthSpec::default(),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("spec file {}: {e}", p.display())))?;
            manifest.input(p);
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("spec file {}: {e}", p.display())))?
        }
    };
    if let Some(seed) = file.pick(a.seed, "seed")? {
        spec.seed = seed;
    }
    spec.validate()?;
    eprintln!("seed: {}", spec.seed);

    let out = out_dir(&a.common, "synth")?;
    let data: Dataset = generate_synthetic(&spec)?.into();
    write_dataset(&data, &out)?;
    println!(
        "wrote {} train + {} test recordings ({} scenes, {} tag dims) to {}",
        data.train.len(),
        data.test.len(),
        data.vocab.len(),
        spec.num_event_types,
        out.display()
    );
    manifest
        .config(serde_json::to_value(&spec).expect("spec serializes"))
        .seed(spec.seed)
        .output(&out)
        .append_to(&out)
}
