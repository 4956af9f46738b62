//! File formats, synthetic data and the command-line pipeline.

pub mod cli;
pub mod manifest;
pub mod store;
pub mod synth;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

pub use manifest::{Manifest, ManifestRecord, Split};
pub use store::{FeatureStore, ImageFeatures, PoolConfig};
pub use synth::{generate_synthetic, SynthConfig, SyntheticData};

use crate::cca::CcaModel;
use crate::error::Result;
use crate::lstm::EmbeddedLstm;
use crate::pooling::EmbeddingTable;

pub fn load_feature_store(path: impl AsRef<Path>) -> Result<FeatureStore> {
    FeatureStore::read_from(BufReader::new(File::open(path)?))
}

pub fn save_feature_store(store: &FeatureStore, path: impl AsRef<Path>) -> Result<()> {
    store.write_to(BufWriter::new(File::create(path)?))
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    Manifest::read_jsonl(BufReader::new(File::open(path)?))
}

pub fn save_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    manifest.write_jsonl(BufWriter::new(File::create(path)?))
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    EmbeddingTable::read_word2vec(BufReader::new(File::open(path)?))
}

pub fn save_embeddings(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<()> {
    table.write_word2vec(BufWriter::new(File::create(path)?))
}

pub fn load_cca(path: impl AsRef<Path>) -> Result<CcaModel> {
    CcaModel::read_from(BufReader::new(File::open(path)?))
}

pub fn save_cca(model: &CcaModel, path: impl AsRef<Path>) -> Result<()> {
    model.write_to(BufWriter::new(File::create(path)?))
}

pub fn load_lstm(path: impl AsRef<Path>) -> Result<EmbeddedLstm> {
    EmbeddedLstm::read_from(BufReader::new(File::open(path)?))
}

pub fn save_lstm(model: &EmbeddedLstm, path: impl AsRef<Path>) -> Result<()> {
    model.write_to(BufWriter::new(File::create(path)?))
}
