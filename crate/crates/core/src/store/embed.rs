use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{Result, StoreError};
use crate::llm::{GatewayError, RemoteBackend};

pub const HASH_DIM: usize = 256;
pub const HASH_EMBEDDER_ID: &str = "hash-bow-256-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Cosine similarity clamped to `[-1, 1]`; 0 when either vector is zero.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        0.0
    } else {
        (dot / denom).clamp(-1.0, 1.0)
    }
}

pub trait Embedder: Send + Sync {
    fn id(&self) -> String;
    fn embed(&self, text: &str) -> Result<EmbeddingVector>;
}

/// Bag-of-words embedder: lowercase alphanumeric tokens hashed into
/// [`HASH_DIM`] buckets, counts L2-normalized.
#[derive(Debug, Clone, Copy, Default)]
pub struct HashEmbedder;

impl HashEmbedder {
    pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
    }

    pub fn bucket(token: &str) -> usize {
        let digest = Sha256::digest(token.as_bytes());
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        (u64::from_le_bytes(head) % HASH_DIM as u64) as usize
    }
}

impl Embedder for HashEmbedder {
    fn id(&self) -> String {
        HASH_EMBEDDER_ID.into()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let mut values = vec![0.0; HASH_DIM];
        let mut any = false;
        for t in Self::tokens(text) {
            values[Self::bucket(&t)] += 1.0;
            any = true;
        }
        if !any {
            return Err(StoreError::Input("cannot embed text without word tokens".into()));
        }
        let norm = values.iter().map(|x| x * x).sum::<f64>().sqrt();
        values.iter_mut().for_each(|x| *x /= norm);
        Ok(EmbeddingVector { values })
    }
}

/// Embeddings from an OpenAI-compatible `/embeddings` endpoint.
pub struct RemoteEmbedder {
    backend: RemoteBackend,
}

impl RemoteEmbedder {
    pub fn new(backend: RemoteBackend) -> Self {
        RemoteEmbedder { backend }
    }
}

impl Embedder for RemoteEmbedder {
    fn id(&self) -> String {
        format!("remote:{}", self.backend.config().embedding_model)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        if text.trim().is_empty() {
            return Err(StoreError::Input("cannot embed empty text".into()));
        }
        let config = self.backend.config();
        let body = json!({ "model": config.embedding_model, "input": [text] });
        let value = self.backend.post_json(&config.embeddings_path, &body)?;
        let values: Vec<f64> = value
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| GatewayError::Decode("response has no data[0].embedding".into()))?
            .iter()
            .map(|x| x.as_f64().filter(|v| v.is_finite()))
            .collect::<Option<_>>()
            .ok_or_else(|| GatewayError::Decode("embedding has non-numeric entries".into()))?;
        if values.is_empty() {
            return Err(GatewayError::Decode("empty embedding".into()).into());
        }
        Ok(EmbeddingVector { values })
    }
}
