//! Experiment grids over fusion configurations.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fusion::{FusionConfig, FusionMode};
use crate::svm::SvmConfig;
use crate::train::{run_pipeline, TrainConfig};

/// Accuracies (percent) reported for the full-scale system on DCASE 2019
/// task 1-a. Kept as metadata; not reproducible at desk scale.
pub mod reference {
    pub const BASELINE: f64 = 73.63;
    pub const BEST_BEFORE_CODE: f64 = 75.66;
    pub const BEST_ATTENTION: f64 = 76.58;
    /// Best attention accuracy as quoted in the summary, differing from
    /// the attention table's maximum.
    pub const BEST_ATTENTION_SUMMARY: f64 = 75.58;
    pub const BEST_COMBINED: f64 = 76.75;
    /// Trainable parameters of the best full-scale system.
    pub const BEST_COMBINED_PARAMS: usize = 676_000;
}

/// Built-in grid layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mirror {
    /// Baseline, codecat and before-code with 0..=5 transform layers.
    Table2,
    /// Attention: heads {2,4,8,16,32} × depth {0,1,2,3}.
    Table3,
    /// Combined with separate stacks: heads {2,4} × concat/att depth
    /// {3/3, 3/4, 4/3, 4/4}.
    Table4,
    /// Combined with a shared stack: heads {2,4,8,16,32} × depth {0,1,2,3}.
    Table5,
}

impl Mirror {
    pub const ALL: [Mirror; 4] = [Mirror::Table2, Mirror::Table3, Mirror::Table4, Mirror::Table5];

    /// Smallest filter count divisible by every head count in the grid.
    pub fn min_filters(self) -> usize {
        match self {
            Mirror::Table2 => 1,
            Mirror::Table3 | Mirror::Table5 => 32,
            Mirror::Table4 => 4,
        }
    }

    /// Cell configurations for tags of width `tag_dim`; `hidden` is the
    /// transform width.
    pub fn spec(self, tag_dim: usize, hidden: usize) -> GridSpec {
        let heads = [2, 4, 8, 16, 32];
        let depths = [0, 1, 2, 3];
        match self {
            Mirror::Table2 => {
                let mut rows = vec!["baseline".to_string(), "codecat".to_string()];
                let mut cells = vec![
                    FusionConfig::none(),
                    FusionConfig::new(FusionMode::Codecat, tag_dim).with_hidden(hidden),
                ];
                for n in 0..=5 {
                    rows.push(format!("before_code/{n}"));
                    cells.push(
                        FusionConfig::new(FusionMode::BeforeCode, tag_dim)
                            .with_layers(n)
                            .with_hidden(hidden),
                    );
                }
                GridSpec {
                    title: self.to_string(),
                    row_axis: "system / # layers".into(),
                    col_axis: "".into(),
                    rows,
                    cols: vec!["acc".into()],
                    cells,
                }
            }
            Mirror::Table3 => {
                GridSpec::heads_by_depth(FusionMode::Attention, tag_dim, hidden, &heads, &depths)
                    .titled(self)
            }
            Mirror::Table5 => {
                GridSpec::heads_by_depth(FusionMode::CombinedShared, tag_dim, hidden, &heads, &depths)
                    .titled(self)
            }
            Mirror::Table4 => {
                let pairs = [(3, 3), (3, 4), (4, 3), (4, 4)];
                let mut cells = Vec::new();
                for h in [2, 4] {
                    for (c, a) in pairs {
                        cells.push(
                            FusionConfig::new(FusionMode::CombinedSeparate, tag_dim)
                                .with_heads(h)
                                .with_separate_layers(c, a)
                                .with_hidden(hidden),
                        );
                    }
                }
                GridSpec {
                    title: self.to_string(),
                    row_axis: "# head".into(),
                    col_axis: "# transform layers for concat/att".into(),
                    rows: vec!["2".into(), "4".into()],
                    cols: pairs.iter().map(|(c, a)| format!("{c}/{a}")).collect(),
                    cells,
                }
            }
        }
    }
}

impl fmt::Display for Mirror {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mirror::Table2 => "table2",
            Mirror::Table3 => "table3",
            Mirror::Table4 => "table4",
            Mirror::Table5 => "table5",
        })
    }
}

impl FromStr for Mirror {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mirror::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::config(format!("unknown mirror '{s}' (table2..table5)")))
    }
}

/// Row-major grid of fusion configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub title: String,
    pub row_axis: String,
    pub col_axis: String,
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub cells: Vec<FusionConfig>,
}

impl GridSpec {
    pub fn heads_by_depth(
        mode: FusionMode,
        tag_dim: usize,
        hidden: usize,
        heads: &[usize],
        depths: &[usize],
    ) -> Self {
        let mut cells = Vec::new();
        for &h in heads {
            for &d in depths {
                cells.push(
                    FusionConfig::new(mode, tag_dim)
                        .with_heads(h)
                        .with_layers(d)
                        .with_hidden(hidden),
                );
            }
        }
        Self {
            title: mode.to_string(),
            row_axis: "# head".into(),
            col_axis: "# transform layers".into(),
            rows: heads.iter().map(usize::to_string).collect(),
            cols: depths.iter().map(usize::to_string).collect(),
            cells,
        }
    }

    fn titled(mut self, m: Mirror) -> Self {
        self.title = m.to_string();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() || self.cols.is_empty() {
            return Err(Error::config("grid axes must be non-empty"));
        }
        if self.cells.len() != self.rows.len() * self.cols.len() {
            return Err(Error::config(format!(
                "{} cells for a {}x{} grid",
                self.cells.len(),
                self.rows.len(),
                self.cols.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub row: String,
    pub col: String,
    pub fusion: FusionConfig,
    pub seed: u64,
    pub config_hash: String,
    /// Test accuracy in percent, absent if the cell failed.
    pub accuracy: Option<f64>,
    pub error: Option<String>,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub title: String,
    pub row_axis: String,
    pub col_axis: String,
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    /// Row-major.
    pub cells: Vec<GridCell>,
    pub kernel: String,
}

/// First 16 hex digits of the SHA-256 of the JSON-encoded configs.
pub fn config_hash(cfg: &TrainConfig, svm: &SvmConfig) -> String {
    let json = serde_json::to_vec(&(cfg, svm)).expect("configs serialize");
    Sha256::digest(&json)[..8]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Trains and evaluates every cell with a freshly seeded model. Cells run
/// in parallel; a failing cell is recorded and the grid continues.
pub fn run_grid(spec: &GridSpec, base: &TrainConfig, svm: &SvmConfig, data: &Dataset) -> Result<GridResult> {
    spec.validate()?;
    let n_cols = spec.cols.len();
    let cells = spec
        .cells
        .par_iter()
        .enumerate()
        .map(|(i, fusion)| {
            let cfg = TrainConfig {
                fusion: fusion.clone(),
                ..base.clone()
            };
            let start = Instant::now();
            let outcome = run_pipeline(data, &cfg, svm);
            let (accuracy, error) = match outcome {
                Ok(r) => (Some(r.report.accuracy), None),
                Err(e) => (None, Some(e.to_string())),
            };
            GridCell {
                row: spec.rows[i / n_cols].clone(),
                col: spec.cols[i % n_cols].clone(),
                fusion: fusion.clone(),
                seed: cfg.seed,
                config_hash: config_hash(&cfg, svm),
                accuracy,
                error,
                wall_secs: start.elapsed().as_secs_f64(),
            }
        })
        .collect();
    Ok(GridResult {
        title: spec.title.clone(),
        row_axis: spec.row_axis.clone(),
        col_axis: spec.col_axis.clone(),
        rows: spec.rows.clone(),
        cols: spec.cols.clone(),
        cells,
        kernel: svm.kernel.to_string(),
    })
}

impl GridResult {
    pub fn cell(&self, row: usize, col: usize) -> &GridCell {
        &self.cells[row * self.cols.len() + col]
    }

    /// One JSON object per cell.
    pub fn to_json_lines(&self) -> String {
        self.cells
            .iter()
            .map(|c| {
                let mut v = serde_json::to_value(c).expect("cell serializes");
                v["grid"] = self.title.clone().into();
                v["kernel"] = self.kernel.clone().into();
                format!("{v}\n")
            })
            .collect()
    }

    /// Aligned table; the best cell of each row is wrapped in `**`.
    pub fn render(&self) -> String {
        let mut grid: Vec<Vec<String>> = Vec::with_capacity(self.rows.len() + 1);
        let mut header = vec![self.row_axis.clone()];
        header.extend(self.cols.iter().cloned());
        grid.push(header);
        for (r, name) in self.rows.iter().enumerate() {
            let accs: Vec<Option<f64>> = (0..self.cols.len()).map(|c| self.cell(r, c).accuracy).collect();
            let best = accs.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut line = vec![name.clone()];
            for a in accs {
                line.push(match a {
                    Some(v) if v == best && self.cols.len() > 1 => format!("**{v:.2}**"),
                    Some(v) => format!("{v:.2}"),
                    None => "error".into(),
                });
            }
            grid.push(line);
        }
        let widths: Vec<usize> = (0..grid[0].len())
            .map(|c| grid.iter().map(|row| row[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = format!("{} ({})\n", self.title, self.col_axis);
        if self.col_axis.is_empty() {
            out = format!("{}\n", self.title);
        }
        for (i, row) in grid.iter().enumerate() {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (s, w))| if c == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
                .collect();
            out.push_str(cells.join(" | ").trim_end());
            out.push('\n');
            if i == 0 {
                let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
                out.push_str(&rule.join("-+-"));
                out.push('\n');
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mirror_layouts() {
        let t3 = Mirror::Table3.spec(8, 16);
        assert_eq!((t3.rows.len(), t3.cols.len(), t3.cells.len()), (5, 4, 20));
        assert_eq!(t3.cells[5].n_heads, 4);
        assert_eq!(t3.cells[5].n_transform_layers, 1);
        let t4 = Mirror::Table4.spec(8, 16);
        assert_eq!((t4.rows.len(), t4.cols.len()), (2, 4));
        assert_eq!(t4.cols, ["3/3", "3/4", "4/3", "4/4"]);
        assert_eq!(t4.cells[6].n_transform_layers_concat, 4);
        assert_eq!(t4.cells[6].n_transform_layers_att, 3);
        assert!(t4.cells.iter().all(|c| c.mode == FusionMode::CombinedSeparate));
        let t5 = Mirror::Table5.spec(8, 16);
        assert!(t5.cells.iter().all(|c| c.mode == FusionMode::CombinedShared));
        assert_eq!(Mirror::Table2.spec(8, 16).cells.len(), 8);
        for m in Mirror::ALL {
            let s = m.spec(8, 16);
            s.validate().unwrap();
            for c in &s.cells {
                c.validate(m.min_filters().max(4)).unwrap();
            }
            assert_eq!(m.to_string().parse::<Mirror>().unwrap(), m);
        }
    }

    #[test]
    fn render_marks_row_maximum() {
        let spec = GridSpec::heads_by_depth(FusionMode::Attention, 4, 8, &[2, 4], &[0, 1]);
        let accs = [50.0, 75.0, 60.0, 40.0];
        let cells = spec
            .cells
            .iter()
            .zip(accs)
            .enumerate()
            .map(|(i, (f, a))| GridCell {
                row: spec.rows[i / 2].clone(),
                col: spec.cols[i % 2].clone(),
                fusion: f.clone(),
                seed: 0,
                config_hash: String::new(),
                accuracy: Some(a),
                error: None,
                wall_secs: 0.0,
            })
            .collect();
        let g = GridResult {
            title: spec.title,
            row_axis: spec.row_axis,
            col_axis: spec.col_axis,
            rows: spec.rows,
            cols: spec.cols,
            cells,
            kernel: "rbf".into(),
        };
        let text = g.render();
        assert!(text.contains("**75.00**") && text.contains("**60.00**"), "{text}");
        assert!(!text.contains("**50.00**"));
        assert_eq!(g.to_json_lines().lines().count(), 4);
    }
}
