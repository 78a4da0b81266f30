//! Embedding providers and an exact cosine-similarity index over examples,
//! schema shapes and endpoint descriptions.

mod openai;

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use async_trait::async_trait;
use futures::stream::{self, StreamExt, TryStreamExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use openai::OpenAiEmbeddings;

/// Format written to `manifest.json`; loading any other version fails.
pub const INDEX_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EmbeddingError {
    #[error("embedding provider {provider} unreachable: {message}")]
    Unreachable { provider: String, message: String },
    #[error("embedding provider {provider} answered HTTP {status}: {message}")]
    Http { provider: String, status: u16, message: String },
    #[error("embedding provider {provider} returned an unreadable response: {message}")]
    InvalidResponse { provider: String, message: String },
    #[error("embedding provider {provider} is not configured: {message}")]
    Config { provider: String, message: String },
}

/// Maps text to fixed-length vectors.
#[async_trait]
pub trait EmbeddingProvider: Send + Sync {
    fn model_id(&self) -> &str;
    fn dimension(&self) -> usize;
    fn multilingual(&self) -> bool {
        false
    }
    /// One vector per input text, in input order.
    async fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbeddingError>;

    async fn embed(&self, text: &str) -> Result<Vec<f32>, EmbeddingError> {
        let mut v = self.embed_batch(&[text.to_string()]).await?;
        v.pop().ok_or_else(|| EmbeddingError::InvalidResponse {
            provider: self.model_id().to_string(),
            message: "empty batch response".into(),
        })
    }
}

/// Offline, non-semantic embedder. Each vector is drawn uniformly from
/// `[-1, 1]^dimension` by a ChaCha8 generator seeded with
/// `SHA-256(seed || text)`, so equal texts get equal vectors and distinct
/// texts get unrelated ones. Useful only for tests and dry runs.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    model_id: String,
    dimension: usize,
    seed: u64,
}

/// Deterministic hash-based provider; see [`HashEmbedder`].
pub fn mock_provider(dimension: usize, seed: u64) -> HashEmbedder {
    assert!(dimension >= 2, "mock embedder needs at least 2 dimensions");
    HashEmbedder { model_id: format!("mock-hash-{dimension}-{seed}"), dimension, seed }
}

impl HashEmbedder {
    pub fn vector(&self, text: &str) -> Vec<f32> {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(text.as_bytes());
        let mut rng = ChaCha8Rng::from_seed(hasher.finalize().into());
        (0..self.dimension).map(|_| rng.gen_range(-1.0f32..=1.0)).collect()
    }
}

#[async_trait]
impl EmbeddingProvider for HashEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    async fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbeddingError> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    Example,
    SchemaClass,
    EndpointInfo,
}

/// Something to be indexed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexInput {
    pub item_id: String,
    pub kind: ItemKind,
    pub payload_text: String,
    /// Example id, class IRI or endpoint URL, depending on `kind`.
    pub source_ref: String,
    pub endpoint_url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedItem {
    pub item_id: String,
    pub kind: ItemKind,
    pub payload_text: String,
    pub source_ref: String,
    pub endpoint_url: String,
    /// L2-normalized.
    #[serde(skip)]
    pub vector: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalHit<'a> {
    pub item: &'a IndexedItem,
    pub score: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("embedding item {item_id} failed: {source}")]
    Provider { item_id: String, source: EmbeddingError },
    #[error("query embedding failed: {0}")]
    Query(EmbeddingError),
    #[error("provider returned {got} components for {item_id}, expected {expected}")]
    DimensionMismatch { item_id: String, expected: usize, got: usize },
    #[error("index was built with {index_model}, not {provider_model}")]
    ProviderMismatch { index_model: String, provider_model: String },
    #[error("duplicate item id {0}")]
    DuplicateItem(String),
    #[error("index format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("index at {path} is corrupt: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("index i/o error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub format_version: u32,
    pub model_id: String,
    pub dimension: usize,
    pub item_count: usize,
    /// Hex SHA-256 over the vector payload followed by the item metadata.
    pub checksum: String,
}

/// Exact nearest-neighbour index: every search scans every item.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    model_id: String,
    dimension: usize,
    items: Vec<IndexedItem>,
}

/// Texts per provider call when building an index.
pub const DEFAULT_BATCH_SIZE: usize = 64;

fn normalize(v: &mut [f32]) {
    let norm = v.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x = (*x as f64 / norm) as f32);
    }
}

/// Dot product of two normalized vectors, accumulated in `f64`.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
}

/// Embeds every input and builds the index. Batches are sent to the
/// provider concurrently (at most four in flight) and reassembled in order.
pub async fn build_index(
    inputs: Vec<IndexInput>,
    provider: &dyn EmbeddingProvider,
    batch_size: usize,
) -> Result<VectorIndex, IndexError> {
    let mut seen = HashSet::new();
    for input in &inputs {
        if !seen.insert(input.item_id.as_str()) {
            return Err(IndexError::DuplicateItem(input.item_id.clone()));
        }
    }
    let dimension = provider.dimension();
    let batches: Vec<Vec<IndexInput>> =
        inputs.chunks(batch_size.max(1)).map(<[IndexInput]>::to_vec).collect();
    let embedded: Vec<Vec<IndexedItem>> = stream::iter(batches)
        .map(|batch| async move {
            let texts: Vec<String> = batch.iter().map(|i| i.payload_text.clone()).collect();
            let vectors = provider.embed_batch(&texts).await.map_err(|source| IndexError::Provider {
                item_id: batch[0].item_id.clone(),
                source,
            })?;
            if vectors.len() != batch.len() {
                return Err(IndexError::Provider {
                    item_id: batch[0].item_id.clone(),
                    source: EmbeddingError::InvalidResponse {
                        provider: provider.model_id().to_string(),
                        message: format!("{} vectors for {} texts", vectors.len(), batch.len()),
                    },
                });
            }
            batch
                .into_iter()
                .zip(vectors)
                .map(|(input, mut vector)| {
                    if vector.len() != dimension {
                        return Err(IndexError::DimensionMismatch {
                            item_id: input.item_id,
                            expected: dimension,
                            got: vector.len(),
                        });
                    }
                    normalize(&mut vector);
                    Ok(IndexedItem {
                        item_id: input.item_id,
                        kind: input.kind,
                        payload_text: input.payload_text,
                        source_ref: input.source_ref,
                        endpoint_url: input.endpoint_url,
                        vector,
                    })
                })
                .collect()
        })
        .buffered(4)
        .try_collect()
        .await?;
    Ok(VectorIndex {
        model_id: provider.model_id().to_string(),
        dimension,
        items: embedded.into_iter().flatten().collect(),
    })
}

impl VectorIndex {
    pub fn empty(model_id: impl Into<String>, dimension: usize) -> Self {
        VectorIndex { model_id: model_id.into(), dimension, items: Vec::new() }
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn items(&self) -> &[IndexedItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn count(&self, kind: ItemKind) -> usize {
        self.items.iter().filter(|i| i.kind == kind).count()
    }

    pub fn get(&self, item_id: &str) -> Option<&IndexedItem> {
        self.items.iter().find(|i| i.item_id == item_id)
    }

    /// Top `k` items by cosine similarity to `query` (normalized here),
    /// ties broken by ascending item id.
    pub fn search_vector(
        &self,
        query: &[f32],
        kind_filter: Option<ItemKind>,
        k: usize,
    ) -> Vec<RetrievalHit<'_>> {
        let mut q = query.to_vec();
        normalize(&mut q);
        let mut hits: Vec<RetrievalHit<'_>> = self
            .items
            .iter()
            .filter(|i| kind_filter.is_none_or(|kind| i.kind == kind))
            .map(|item| RetrievalHit { item, score: cosine(&q, &item.vector) })
            .collect();
        hits.sort_by(|a, b| {
            b.score.total_cmp(&a.score).then_with(|| a.item.item_id.cmp(&b.item.item_id))
        });
        hits.truncate(k);
        hits
    }

    /// Embeds `query_text` with `provider` and searches. The provider must be
    /// the one the index was built with.
    pub async fn search(
        &self,
        provider: &dyn EmbeddingProvider,
        query_text: &str,
        kind_filter: Option<ItemKind>,
        k: usize,
    ) -> Result<Vec<RetrievalHit<'_>>, IndexError> {
        self.check_provider(provider)?;
        let v = provider.embed(query_text).await.map_err(IndexError::Query)?;
        if v.len() != self.dimension {
            return Err(IndexError::DimensionMismatch {
                item_id: "<query>".into(),
                expected: self.dimension,
                got: v.len(),
            });
        }
        Ok(self.search_vector(&v, kind_filter, k))
    }

    pub fn check_provider(&self, provider: &dyn EmbeddingProvider) -> Result<(), IndexError> {
        if provider.model_id() != self.model_id {
            return Err(IndexError::ProviderMismatch {
                index_model: self.model_id.clone(),
                provider_model: provider.model_id().to_string(),
            });
        }
        Ok(())
    }

    fn payloads(&self) -> (Vec<u8>, Vec<u8>) {
        let mut vectors = Vec::with_capacity(self.items.len() * self.dimension * 4);
        let mut meta = Vec::new();
        for item in &self.items {
            for x in &item.vector {
                vectors.extend_from_slice(&x.to_le_bytes());
            }
            serde_json::to_writer(&mut meta, item).expect("items serialize");
            meta.push(b'\n');
        }
        (vectors, meta)
    }

    fn digest(vectors: &[u8], meta: &[u8]) -> String {
        let mut h = Sha256::new();
        h.update(vectors);
        h.update(meta);
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Content checksum, identical for identical inputs and provider.
    pub fn checksum(&self) -> String {
        let (vectors, meta) = self.payloads();
        Self::digest(&vectors, &meta)
    }

    pub fn manifest(&self) -> IndexManifest {
        IndexManifest {
            format_version: INDEX_FORMAT_VERSION,
            model_id: self.model_id.clone(),
            dimension: self.dimension,
            item_count: self.items.len(),
            checksum: self.checksum(),
        }
    }

    /// Writes `manifest.json`, `vectors.bin` (little-endian `f32` rows) and
    /// `items.jsonl` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<IndexManifest, IndexError> {
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| IndexError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let (vectors, meta) = self.payloads();
        let manifest = IndexManifest {
            format_version: INDEX_FORMAT_VERSION,
            model_id: self.model_id.clone(),
            dimension: self.dimension,
            item_count: self.items.len(),
            checksum: Self::digest(&vectors, &meta),
        };
        let write = |name: &str, bytes: &[u8]| {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(io_err(&path))
        };
        write("vectors.bin", &vectors)?;
        write("items.jsonl", &meta)?;
        let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        json.push(b'\n');
        write("manifest.json", &json)?;
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<VectorIndex, IndexError> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read(&path).map_err(|source| IndexError::Io { path, source })
        };
        let corrupt = |message: String| IndexError::Corrupt { path: dir.to_path_buf(), message };
        let manifest: IndexManifest = serde_json::from_slice(&read("manifest.json")?)
            .map_err(|e| corrupt(format!("manifest: {e}")))?;
        if manifest.format_version != INDEX_FORMAT_VERSION {
            return Err(IndexError::VersionMismatch {
                found: manifest.format_version,
                expected: INDEX_FORMAT_VERSION,
            });
        }
        let vectors = read("vectors.bin")?;
        let meta = read("items.jsonl")?;
        if Self::digest(&vectors, &meta) != manifest.checksum {
            return Err(corrupt("checksum mismatch".into()));
        }
        let row_bytes = manifest.dimension * 4;
        if vectors.len() != row_bytes * manifest.item_count {
            return Err(corrupt(format!("vectors.bin holds {} bytes", vectors.len())));
        }
        let mut items = Vec::with_capacity(manifest.item_count);
        for (n, line) in meta.split(|b| *b == b'\n').filter(|l| !l.is_empty()).enumerate() {
            let mut item: IndexedItem =
                serde_json::from_slice(line).map_err(|e| corrupt(format!("item {n}: {e}")))?;
            let row = vectors
                .get(n * row_bytes..(n + 1) * row_bytes)
                .ok_or_else(|| corrupt(format!("item {n} has no vector")))?;
            item.vector = row
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            items.push(item);
        }
        if items.len() != manifest.item_count {
            return Err(corrupt(format!("{} items, manifest says {}", items.len(), manifest.item_count)));
        }
        Ok(VectorIndex { model_id: manifest.model_id, dimension: manifest.dimension, items })
    }
}
