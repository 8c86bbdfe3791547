//! Audio I/O, metadata, augmentation and the synthetic dataset.
//!
//! A dataset directory holds `audio/<id>.wav`, `train.tsv`, `test.tsv`,
//! `labels.txt` and, optionally, `tags.txt`.

pub mod augment;
pub mod meta;
pub mod synth;
pub mod wav;

use std::fs;
use std::path::Path;

pub use augment::{mixup, mixup_with_lambda, pre_emphasis, sample_lambda};
pub use meta::{MetaEntry, SceneVocabulary, TagTable};
pub use synth::{generate_synthetic, SynthSpec, SyntheticDataset};
pub use wav::{parse_wav, write_wav, Recording};

use crate::error::{Error, Result};

/// A loaded train/test split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub vocab: SceneVocabulary,
    pub train: Vec<Recording>,
    pub test: Vec<Recording>,
    pub tags: Option<TagTable>,
}

impl Dataset {
    /// Fails if a recording id occurs in both splits.
    pub fn check_disjoint(&self) -> Result<()> {
        let train: std::collections::HashSet<&str> =
            self.train.iter().map(|r| r.id.as_str()).collect();
        if let Some(r) = self.test.iter().find(|r| train.contains(r.id.as_str())) {
            return Err(Error::Data(format!(
                "recording '{}' appears in both train and test splits",
                r.id
            )));
        }
        Ok(())
    }
}

impl From<SyntheticDataset> for Dataset {
    fn from(s: SyntheticDataset) -> Self {
        Self {
            vocab: s.vocab,
            train: s.train,
            test: s.test,
            tags: Some(s.tags),
        }
    }
}

fn split_entries(recs: &[Recording]) -> Vec<MetaEntry> {
    recs.iter()
        .map(|r| MetaEntry {
            filename: format!("audio/{}.wav", r.id),
            id: r.id.clone(),
            scene_label: r.scene_label.unwrap_or(0),
        })
        .collect()
}

pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join("audio"))?;
    for r in ds.train.iter().chain(&ds.test) {
        if r.scene_label.is_none() {
            return Err(Error::Data(format!("recording '{}' has no scene label", r.id)));
        }
        fs::write(
            dir.join("audio").join(format!("{}.wav", r.id)),
            write_wav(&r.samples, r.sample_rate),
        )?;
    }
    fs::write(dir.join("labels.txt"), ds.vocab.to_text())?;
    fs::write(
        dir.join("train.tsv"),
        meta::format_metadata(&split_entries(&ds.train), &ds.vocab),
    )?;
    fs::write(
        dir.join("test.tsv"),
        meta::format_metadata(&split_entries(&ds.test), &ds.vocab),
    )?;
    if let Some(tags) = &ds.tags {
        fs::write(dir.join("tags.txt"), tags.to_text())?;
    }
    Ok(())
}

fn load_split(dir: &Path, file: &str, vocab: &SceneVocabulary) -> Result<Vec<Recording>> {
    let entries = meta::load_metadata(&dir.join(file), vocab)?;
    entries
        .into_iter()
        .map(|e| {
            let path = dir.join(&e.filename);
            let bytes = fs::read(&path)
                .map_err(|err| Error::Data(format!("{}: {err}", path.display())))?;
            let mut rec = parse_wav(&bytes, e.id)?;
            rec.scene_label = Some(e.scene_label);
            Ok(rec)
        })
        .collect()
}

/// Loads a dataset directory. Without `labels.txt` the DCASE 2019 label
/// set is assumed.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let labels = dir.join("labels.txt");
    let vocab = if labels.exists() {
        SceneVocabulary::load(&labels)?
    } else {
        SceneVocabulary::dcase2019()
    };
    let train = load_split(dir, "train.tsv", &vocab)?;
    let test = load_split(dir, "test.tsv", &vocab)?;
    let tags_path = dir.join("tags.txt");
    let tags = if tags_path.exists() {
        Some(meta::load_tags(&tags_path)?)
    } else {
        None
    };
    let ds = Dataset {
        vocab,
        train,
        test,
        tags,
    };
    ds.check_disjoint()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_round_trip() {
        let spec = SynthSpec {
            n_train: 6,
            n_test: 3,
            duration_samples: 480,
            ..SynthSpec::default()
        };
        let ds: Dataset = generate_synthetic(&spec).unwrap().into();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.train, ds.train);
        assert_eq!(back.test, ds.test);
        assert_eq!(back.tags, ds.tags);
        assert_eq!(back.vocab, ds.vocab);
    }

    #[test]
    fn overlapping_splits_rejected() {
        let spec = SynthSpec {
            n_train: 2,
            n_test: 1,
            duration_samples: 64,
            ..SynthSpec::default()
        };
        let mut ds: Dataset = generate_synthetic(&spec).unwrap().into();
        ds.test[0].id = ds.train[1].id.clone();
        assert!(matches!(ds.check_disjoint(), Err(Error::Data(_))));
    }
}
