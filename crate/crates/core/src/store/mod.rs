//! Retrievable per-level survey statistics: factor documents, embedders, and
//! an exhaustive cosine-similarity index.

mod document;
mod embed;
mod index;
mod normalize;

pub use document::{corpus_from_tables, load_corpus, save_corpus, survey_corpus, FactorDocument};
pub use embed::{cosine, Embedder, EmbeddingVector, HashEmbedder, RemoteEmbedder, HASH_DIM, HASH_EMBEDDER_ID};
pub use index::{build_index, FactorIndex, RetrievalResult};
pub use normalize::{age_bracket, distance_bracket, income_bracket, parse_money, QueryNormalizer};

use thiserror::Error;

use crate::llm::GatewayError;
use crate::schema::SchemaError;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("corpus error: {0}")]
    Corpus(String),
    #[error("index error: {0}")]
    Index(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;
