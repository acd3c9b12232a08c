//! Embedding providers and an exact cosine-similarity index.

use std::collections::HashSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A non-zero, finite embedding vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Embedding(Vec<f64>);

impl TryFrom<Vec<f64>> for Embedding {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Embedding::new(values)
    }
}

impl From<Embedding> for Vec<f64> {
    fn from(e: Embedding) -> Self {
        e.0
    }
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Embedding("empty embedding".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Embedding("embedding has non-finite components".into()));
        }
        if values.iter().all(|v| *v == 0.0) {
            return Err(Error::Embedding("zero embedding".into()));
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Cosine similarity; both vectors must share a dimension.
pub fn cosine(a: &Embedding, b: &Embedding) -> f64 {
    assert_eq!(a.dim(), b.dim(), "cosine of vectors with different dimensions");
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    (dot / (a.norm() * b.norm())).clamp(-1.0, 1.0)
}

pub trait EmbedProvider: Send + Sync {
    /// Stable identifier, used in artifact keys.
    fn id(&self) -> String;
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>>;
}

/// Embeds `texts`, checking count and dimension consistency.
pub fn embed(texts: &[String], provider: &dyn EmbedProvider) -> Result<Vec<Embedding>> {
    if texts.is_empty() {
        return Err(Error::Precondition("embed called with no texts".into()));
    }
    let out = provider.embed_batch(texts)?;
    if out.len() != texts.len() {
        return Err(Error::Embedding(format!(
            "provider returned {} vectors for {} texts",
            out.len(),
            texts.len()
        )));
    }
    let dim = out[0].dim();
    if out.iter().any(|e| e.dim() != dim) {
        return Err(Error::Embedding("provider returned vectors of mixed dimension".into()));
    }
    Ok(out)
}

/// Deterministic feature-hashing embedder over lower-cased word unigrams and
/// bigrams. Texts sharing words land close together, so retrieval behaves
/// sensibly in offline runs.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("hash embedder dimension must be positive".into()));
        }
        Ok(Self { dim })
    }

    fn add_feature(&self, values: &mut [f64], feature: &str, weight: f64) {
        let digest = Sha256::digest(feature.as_bytes());
        let h = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        let slot = (h % self.dim as u64) as usize;
        let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
        values[slot] += sign * weight;
    }

    pub fn embed_one(&self, text: &str) -> Result<Embedding> {
        let lower = text.to_lowercase();
        let words: Vec<&str> = lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .collect();
        let mut values = vec![0.0; self.dim];
        for w in &words {
            self.add_feature(&mut values, &format!("u:{w}"), 1.0);
        }
        for pair in words.windows(2) {
            self.add_feature(&mut values, &format!("b:{} {}", pair[0], pair[1]), 0.5);
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Embedding(format!("text {text:?} has no embeddable features")));
        }
        Embedding::new(values.into_iter().map(|v| v / norm).collect())
    }
}

impl EmbedProvider for HashEmbedder {
    fn id(&self) -> String {
        format!("hash-{}", self.dim)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        texts.iter().map(|t| self.embed_one(t)).collect()
    }
}

/// Client for an OpenAI-compatible `/embeddings` endpoint.
pub struct HttpEmbedder {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    api_key: Option<String>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

impl HttpEmbedder {
    pub fn new(base_url: &str, model: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Config(format!("cannot build HTTP client: {e}")))?;
        Ok(Self {
            client,
            url: format!("{}/embeddings", base_url.trim_end_matches('/')),
            model: model.into(),
            api_key,
        })
    }
}

impl EmbedProvider for HttpEmbedder {
    fn id(&self) -> String {
        format!("http-{}", self.model)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        let mut req = self
            .client
            .post(&self.url)
            .json(&serde_json::json!({ "model": self.model, "input": texts }));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| Error::Embedding(format!("embedding request failed: {e}")))?;
        let bytes = resp
            .bytes()
            .map_err(|e| Error::Embedding(format!("embedding response unreadable: {e}")))?;
        let mut parsed: EmbeddingResponse = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Embedding(format!("malformed embedding payload: {e}")))?;
        if parsed.data.iter().all(|d| d.index.is_some()) {
            parsed.data.sort_by_key(|d| d.index);
        }
        parsed.data.into_iter().map(|d| Embedding::new(d.embedding)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: String,
    pub similarity: f64,
}

/// Exact top-k cosine index. Built by a single writer, then frozen.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    entries: Vec<(String, Embedding)>,
    ids: HashSet<String>,
    frozen: bool,
}

#[derive(Serialize, Deserialize)]
struct IndexHeader {
    dim: usize,
    count: usize,
}

#[derive(Serialize, Deserialize)]
struct IndexRecord {
    id: String,
    values: Embedding,
}

impl VectorIndex {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
            ids: HashSet::new(),
            frozen: false,
        }
    }

    /// Builds and freezes an index in one go.
    pub fn from_entries(dim: usize, entries: impl IntoIterator<Item = (String, Embedding)>) -> Result<Self> {
        let mut index = Self::new(dim);
        for (id, e) in entries {
            index.insert(id, e)?;
        }
        index.freeze();
        Ok(index)
    }

    pub fn insert(&mut self, id: impl Into<String>, embedding: Embedding) -> Result<()> {
        let id = id.into();
        if self.frozen {
            return Err(Error::Index("index is frozen".into()));
        }
        if embedding.dim() != self.dim {
            return Err(Error::Index(format!(
                "dimension mismatch: index has {}, vector has {}",
                self.dim,
                embedding.dim()
            )));
        }
        if !self.ids.insert(id.clone()) {
            return Err(Error::Index(format!("duplicate id {id:?}")));
        }
        self.entries.push((id, embedding));
        Ok(())
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }

    pub fn entries(&self) -> &[(String, Embedding)] {
        &self.entries
    }

    /// The `k` most similar entries, most similar first; equal similarities
    /// keep insertion order. Returns everything when the index is smaller
    /// than `k`.
    pub fn top_k(&self, query: &Embedding, k: usize) -> Result<Vec<Neighbor>> {
        if !self.frozen {
            return Err(Error::Index("index must be frozen before querying".into()));
        }
        if k == 0 {
            return Err(Error::Precondition("k must be at least 1".into()));
        }
        if query.dim() != self.dim {
            return Err(Error::Index(format!(
                "dimension mismatch: index has {}, query has {}",
                self.dim,
                query.dim()
            )));
        }
        if self.entries.len() < k {
            tracing::info!(requested = k, available = self.entries.len(), "top-k shortfall");
        }
        let mut scored: Vec<(usize, f64)> = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, (_, e))| (i, cosine(query, e)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(i, similarity)| Neighbor {
                id: self.entries[i].0.clone(),
                similarity,
            })
            .collect())
    }

    /// Line-oriented text form: a `{dim, count}` header line, then one
    /// `{id, values}` line per entry in insertion order.
    pub fn to_text(&self) -> String {
        let mut out = serde_json::to_string(&IndexHeader {
            dim: self.dim,
            count: self.entries.len(),
        })
        .expect("header serializes");
        out.push('\n');
        for (id, values) in &self.entries {
            let line = serde_json::to_string(&IndexRecord {
                id: id.clone(),
                values: values.clone(),
            })
            .expect("record serializes");
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    /// Parses [`VectorIndex::to_text`] output; the result is frozen.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: IndexHeader =
            serde_json::from_str(lines.next().ok_or_else(|| Error::Index("index file is empty".into()))?)
                .map_err(|e| Error::Index(format!("bad index header: {e}")))?;
        let mut index = Self::new(header.dim);
        for (n, line) in lines.enumerate() {
            let rec: IndexRecord =
                serde_json::from_str(line).map_err(|e| Error::Index(format!("bad index record {}: {e}", n + 1)))?;
            index.insert(rec.id, rec.values)?;
        }
        if index.len() != header.count {
            return Err(Error::Index(format!(
                "header declares {} entries, file has {}",
                header.count,
                index.len()
            )));
        }
        index.freeze();
        Ok(index)
    }
}
