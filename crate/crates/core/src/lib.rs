//! Multimodal embeddings for multiple-choice fill-in-the-blank questions about images.
//!
//! The crate is organised bottom-up:
//!
//! - [`proposals`]: box geometry, greedy non-maximum suppression and top-k selection.
//! - [`pooling`]: mean/max box pooling of proposal features and word-vector answer encoding.
//! - [`cca`]: normalized canonical correlation analysis joint embedding.
//! - [`selection`]: cosine decision rule and the per-category evaluation harness.
//! - [`lstm`]: an LSTM over the prompt and image trained with a cosine text-embedding loss.
//! - [`io`]: manifests, feature stores, synthetic data and the CLI pipeline.

pub mod cca;
pub mod error;
pub mod io;
pub mod lstm;
pub mod pooling;
pub mod proposals;
pub mod selection;
mod textfmt;

pub use cca::{CcaModel, DataMatrix, View};
pub use error::{Error, Result};
pub use pooling::{EmbeddingTable, FeatureVector, PoolMode};
pub use proposals::ScoredBox;
pub use selection::{Category, EvalReport, MadlibInstance, Task};
