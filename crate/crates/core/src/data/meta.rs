//! Scene-label metadata and tag-vector text files.
//!
//! Metadata: one `filename<sep>scene_label` per line, separator tab or
//! comma (detected from the first record). A leading `filename<sep>scene_label`
//! header is skipped.
//!
//! Tags: one `id v1 v2 ... vc` per line, whitespace separated.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, ParseError, Result};
use crate::fusion::TagVector;

/// The ten scene classes of the DCASE 2019 task 1-a development set.
pub const DCASE2019_SCENES: [&str; 10] = [
    "airport",
    "bus",
    "metro",
    "metro_station",
    "park",
    "public_square",
    "shopping_mall",
    "street_pedestrian",
    "street_traffic",
    "tram",
];

/// Ordered scene label set; a label's index is its class id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneVocabulary {
    labels: Vec<String>,
}

impl SceneVocabulary {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if l.is_empty() || l.contains(char::is_whitespace) || l.contains(',') {
                return Err(Error::config(format!("invalid scene label '{l}'")));
            }
            if !seen.insert(l) {
                return Err(Error::config(format!("duplicate scene label '{l}'")));
            }
        }
        Ok(Self { labels })
    }

    pub fn dcase2019() -> Self {
        Self {
            labels: DCASE2019_SCENES.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// First `k` DCASE labels, or `scene<i>` names beyond ten classes.
    pub fn first(k: usize) -> Self {
        let labels = (0..k)
            .map(|i| {
                DCASE2019_SCENES
                    .get(i)
                    .map_or_else(|| format!("scene{i}"), |s| s.to_string())
            })
            .collect();
        Self { labels }
    }

    pub fn index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Reads one label per line.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect(),
        )
    }

    pub fn to_text(&self) -> String {
        self.labels.iter().map(|l| format!("{l}\n")).collect()
    }
}

/// One metadata record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaEntry {
    pub filename: String,
    /// File stem, used to join with tag files.
    pub id: String,
    pub scene_label: usize,
}

/// Recording id derived from a metadata filename: its stem.
pub fn id_from_filename(filename: &str) -> String {
    Path::new(filename)
        .file_stem()
        .map_or_else(|| filename.to_string(), |s| s.to_string_lossy().into_owned())
}

fn line_err(line: usize, reason: impl Into<String>) -> Error {
    Error::Parse(ParseError::Line {
        line,
        reason: reason.into(),
    })
}

pub fn parse_metadata(text: &str, vocab: &SceneVocabulary) -> Result<Vec<MetaEntry>> {
    let mut sep: Option<char> = None;
    let mut out = Vec::new();
    let mut seen = HashMap::new();
    let mut first = true;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let s = *sep.get_or_insert(if line.contains('\t') { '\t' } else { ',' });
        let cols: Vec<&str> = line.split(s).map(str::trim).collect();
        if cols.len() != 2 {
            return Err(line_err(
                lineno,
                format!("expected 2 columns, found {}", cols.len()),
            ));
        }
        if std::mem::take(&mut first) && cols == ["filename", "scene_label"] {
            continue;
        }
        let scene_label = vocab
            .index(cols[1])
            .ok_or_else(|| line_err(lineno, format!("unknown scene label '{}'", cols[1])))?;
        let id = id_from_filename(cols[0]);
        if let Some(prev) = seen.insert(id.clone(), lineno) {
            return Err(line_err(
                lineno,
                format!("duplicate id '{id}' (first seen on line {prev})"),
            ));
        }
        out.push(MetaEntry {
            filename: cols[0].to_string(),
            id,
            scene_label,
        });
    }
    Ok(out)
}

pub fn load_metadata(path: &Path, vocab: &SceneVocabulary) -> Result<Vec<MetaEntry>> {
    parse_metadata(&fs::read_to_string(path)?, vocab)
}

pub fn format_metadata(entries: &[MetaEntry], vocab: &SceneVocabulary) -> String {
    entries
        .iter()
        .map(|e| format!("{}\t{}\n", e.filename, vocab.label(e.scene_label)))
        .collect()
}

/// Tag vectors keyed by recording id, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TagTable {
    tags: Vec<TagVector>,
    index: HashMap<String, usize>,
}

impl TagTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, tag: TagVector) -> Result<()> {
        if let Some(first) = self.tags.first() {
            if first.len() != tag.len() {
                return Err(Error::dim(format!(
                    "tag for '{}' has {} entries, table holds {}",
                    tag.source_id,
                    tag.len(),
                    first.len()
                )));
            }
        }
        if self.index.contains_key(&tag.source_id) {
            return Err(Error::Data(format!("duplicate tag id '{}'", tag.source_id)));
        }
        self.index.insert(tag.source_id.clone(), self.tags.len());
        self.tags.push(tag);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&TagVector> {
        self.index.get(id).map(|&i| &self.tags[i])
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Tag width `c`, or 0 for an empty table.
    pub fn dim(&self) -> usize {
        self.tags.first().map_or(0, TagVector::len)
    }

    pub fn iter(&self) -> impl Iterator<Item = &TagVector> {
        self.tags.iter()
    }

    /// Serializes with shortest round-trip decimal formatting.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.tags {
            s.push_str(&t.source_id);
            for v in t.values() {
                s.push(' ');
                s.push_str(&format!("{v:?}"));
            }
            s.push('\n');
        }
        s
    }
}

pub fn parse_tags(text: &str) -> Result<TagTable> {
    let mut table = TagTable::new();
    let mut width: Option<usize> = None;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let mut fields = line.split_whitespace();
        let Some(id) = fields.next() else { continue };
        let values = fields
            .enumerate()
            .map(|(j, f)| {
                let v: f64 = f
                    .parse()
                    .map_err(|_| line_err(lineno, format!("value {} '{f}' is not a number", j + 1)))?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(line_err(
                        lineno,
                        format!("tag value {v} outside [0, 1]"),
                    ));
                }
                Ok(v)
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.is_empty() {
            return Err(line_err(lineno, format!("no tag values for '{id}'")));
        }
        match width {
            Some(w) if w != values.len() => {
                return Err(line_err(
                    lineno,
                    format!("expected {w} tag values, found {}", values.len()),
                ))
            }
            _ => width = Some(values.len()),
        }
        if table.get(id).is_some() {
            return Err(line_err(lineno, format!("duplicate id '{id}'")));
        }
        table.insert(TagVector::new(id, values)?)?;
    }
    Ok(table)
}

pub fn load_tags(path: &Path) -> Result<TagTable> {
    parse_tags(&fs::read_to_string(path)?)
}
