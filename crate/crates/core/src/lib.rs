//! Tag-vector conditioned acoustic scene classification.
//!
//! A raw-waveform residual CNN produces a code for each recording; sound
//! event tag vectors from an external tagger are fused into it by
//! concatenation, by multi-head attention over the feature-map filters, or
//! both. Codes are classified by an SMO-trained kernel SVM.

pub mod autodiff;
pub mod backbone;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod fusion;
pub mod gradsuite;
pub mod grid;
pub mod layers;
pub mod model;
pub mod params;
pub mod svm;
pub mod tensor;
pub mod train;

pub use backbone::BackboneConfig;
pub use error::{Error, ParseError, Result};
pub use fusion::{AttentionMap, FusionConfig, FusionMode, TagVector};
pub use model::{build_backbone, AscModel, BackboneOutput};
pub use tensor::Tensor;
pub use data::{Dataset, Recording, SceneVocabulary, SynthSpec, TagTable};
pub use grid::{run_grid, GridResult, GridSpec, Mirror};
pub use svm::{KernelKind, KernelSpec, SvmConfig, SvmModel};
pub use train::{EvalReport, TrainConfig};
