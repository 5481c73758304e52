//! Embedding providers, the per-chunk vector store, and cosine search.

use std::collections::HashMap;
use std::fs;
use std::hash::Hasher;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use fnv::FnvHasher;
use serde::Deserialize;
use thiserror::Error;

use crate::corpus::{Chunk, Corpus};
use crate::text::tokenize;

pub const DEFAULT_HASH_DIMENSION: usize = 64;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("zero vector")]
    ZeroVector,
    #[error("no vector for chunk `{0}`")]
    MissingChunk(String),
    #[error("provider `{provider}` cannot embed {what}")]
    Provider { provider: String, what: String },
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
}

/// Text → real vector. Implementations must be deterministic and keep a
/// fixed dimension.
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError>;
}

/// Signed feature hashing of normalized token counts, unit-normalized.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dimension: usize,
    seed: u64,
}

impl HashEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        Self { dimension, seed }
    }

    fn bucket(&self, token: &str) -> (usize, f64) {
        let mut h = FnvHasher::default();
        h.write(&self.seed.to_le_bytes());
        h.write(token.as_bytes());
        let v = h.finish();
        let sign = if (v >> 63) & 1 == 1 { -1.0 } else { 1.0 };
        ((v % self.dimension as u64) as usize, sign)
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_HASH_DIMENSION, 0)
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn name(&self) -> &str {
        "hash"
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let mut v = vec![0.0; self.dimension];
        for tok in tokenize(text) {
            let (i, sign) = self.bucket(&tok);
            v[i] += sign;
        }
        normalize(&mut v);
        Ok(v)
    }
}

/// Lookup table of precomputed vectors keyed by exact text, for injecting
/// embeddings from an external model.
#[derive(Debug, Clone)]
pub struct TextVectorProvider {
    dimension: usize,
    vectors: HashMap<String, Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TextVectorLine {
    text: String,
    vector: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChunkVectorLine {
    chunk_id: String,
    vector: Vec<f64>,
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, EmbedError> {
    let io = |message: String| EmbedError::Io {
        path: path.to_path_buf(),
        message,
    };
    let file = fs::File::open(path).map_err(|e| io(e.to_string()))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| io(format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

impl TextVectorProvider {
    pub fn new(vectors: HashMap<String, Vec<f64>>) -> Result<Self, EmbedError> {
        let dimension = vectors.values().next().map_or(0, Vec::len);
        if let Some(bad) = vectors.values().find(|v| v.len() != dimension) {
            return Err(EmbedError::DimensionMismatch {
                left: dimension,
                right: bad.len(),
            });
        }
        Ok(Self { dimension, vectors })
    }

    /// Read `{"text": ..., "vector": [...]}` lines.
    pub fn load(path: &Path) -> Result<Self, EmbedError> {
        let lines: Vec<TextVectorLine> = read_jsonl(path)?;
        Self::new(lines.into_iter().map(|l| (l.text, l.vector)).collect())
    }
}

impl EmbeddingProvider for TextVectorProvider {
    fn name(&self) -> &str {
        "file"
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        self.vectors
            .get(text)
            .cloned()
            .ok_or_else(|| EmbedError::Provider {
                provider: self.name().into(),
                what: format!("text {text:?}"),
            })
    }
}

/// Memoizes another provider. Safe to share across threads.
pub struct CachedEmbedder<'a> {
    inner: &'a dyn EmbeddingProvider,
    cache: Mutex<HashMap<String, Arc<Vec<f64>>>>,
}

impl<'a> CachedEmbedder<'a> {
    pub fn new(inner: &'a dyn EmbeddingProvider) -> Self {
        Self {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn get(&self, text: &str) -> Result<Arc<Vec<f64>>, EmbedError> {
        if let Some(v) = self.cache.lock().unwrap().get(text) {
            return Ok(Arc::clone(v));
        }
        let v = Arc::new(self.inner.embed(text)?);
        self.cache
            .lock()
            .unwrap()
            .entry(text.to_string())
            .or_insert_with(|| Arc::clone(&v));
        Ok(v)
    }

    pub fn provider(&self) -> &dyn EmbeddingProvider {
        self.inner
    }
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Standard cosine similarity, clamped to [-1, 1].
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, EmbedError> {
    if u.len() != v.len() {
        return Err(EmbedError::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// Cosine that treats a zero vector as "no similarity" instead of an error.
pub fn cosine_or_zero(u: &[f64], v: &[f64]) -> Result<f64, EmbedError> {
    match cosine(u, v) {
        Err(EmbedError::ZeroVector) => Ok(0.0),
        other => other,
    }
}

/// One vector per corpus chunk, indexed by global chunk id.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore {
    dimension: usize,
    vectors: Vec<Vec<f64>>,
}

/// External key of a chunk in precomputed-vector files.
pub fn chunk_key(chunk: &Chunk) -> String {
    format!("{}#{}", chunk.object_id, chunk.chunk_index)
}

impl VectorStore {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vector(&self, chunk: usize) -> Option<&[f64]> {
        self.vectors.get(chunk).map(Vec::as_slice)
    }

    /// Read `{"chunk_id": "<object id>#<chunk index>", "vector": [...]}` lines.
    pub fn load(path: &Path, corpus: &Corpus) -> Result<Self, EmbedError> {
        let lines: Vec<ChunkVectorLine> = read_jsonl(path)?;
        let mut by_key: HashMap<String, Vec<f64>> =
            lines.into_iter().map(|l| (l.chunk_id, l.vector)).collect();
        let mut vectors = Vec::with_capacity(corpus.chunks().len());
        for chunk in corpus.chunks() {
            let key = chunk_key(chunk);
            vectors.push(by_key.remove(&key).ok_or(EmbedError::MissingChunk(key))?);
        }
        Self::from_vectors(vectors)
    }

    pub fn from_vectors(vectors: Vec<Vec<f64>>) -> Result<Self, EmbedError> {
        let dimension = vectors.first().map_or(0, Vec::len);
        if let Some(bad) = vectors.iter().find(|v| v.len() != dimension) {
            return Err(EmbedError::DimensionMismatch {
                left: dimension,
                right: bad.len(),
            });
        }
        Ok(Self { dimension, vectors })
    }
}

/// Embed every chunk of `corpus`.
pub fn embed_corpus(provider: &dyn EmbeddingProvider, corpus: &Corpus) -> Result<VectorStore, EmbedError> {
    let vectors = corpus
        .chunks()
        .iter()
        .map(|c| {
            provider.embed(&c.text).map_err(|e| EmbedError::Provider {
                provider: provider.name().into(),
                what: format!("chunk `{}`: {e}", chunk_key(c)),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    VectorStore::from_vectors(vectors)
}

/// Highest chunk cosine for object `object`. Zero vectors count as 0.
pub fn object_similarity(
    store: &VectorStore,
    corpus: &Corpus,
    question_vec: &[f64],
    object: usize,
) -> Result<f64, EmbedError> {
    let mut best = f64::NEG_INFINITY;
    for chunk in corpus.chunk_range(object) {
        let v = store
            .vector(chunk)
            .ok_or_else(|| EmbedError::MissingChunk(chunk_key(&corpus.chunks()[chunk])))?;
        best = best.max(cosine_or_zero(question_vec, v)?);
    }
    Ok(best)
}

/// Similarity of every object in corpus order.
pub fn all_object_similarities(
    store: &VectorStore,
    corpus: &Corpus,
    question_vec: &[f64],
) -> Result<Vec<f64>, EmbedError> {
    (0..corpus.len())
        .map(|i| object_similarity(store, corpus, question_vec, i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DataObject;

    #[test]
    fn orthogonal_and_parallel() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[2.0, 3.0], &[2.0, 3.0]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(
            cosine(&[1.0], &[1.0, 2.0]),
            Err(EmbedError::DimensionMismatch { .. })
        ));
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 2.0]), Err(EmbedError::ZeroVector)));
        assert_eq!(cosine_or_zero(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn hash_embedder_contract() {
        let e = HashEmbedder::default();
        let v = e.embed("Free rate of K-12 students").unwrap();
        assert_eq!(v.len(), 64);
        assert_eq!(v, e.embed("free RATE of k-12 students!").unwrap());
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(e.embed("").unwrap().iter().all(|&x| x == 0.0));
        assert_ne!(v, HashEmbedder::new(64, 9).embed("free rate of k-12 students").unwrap());
    }

    fn three_chunk_corpus() -> Corpus {
        Corpus::new(
            vec![
                DataObject::passage("p", "Alpha", vec!["one.".into(), "two.".into()]),
                DataObject::passage("q", "Beta", vec!["three.".into()]),
            ],
            1,
        )
        .unwrap()
    }

    #[test]
    fn store_has_one_vector_per_chunk() {
        let corpus = three_chunk_corpus();
        let e = HashEmbedder::default();
        let store = embed_corpus(&e, &corpus).unwrap();
        assert_eq!(store.len(), 3);
        assert_eq!(store.dimension(), 64);
        assert_eq!(store, embed_corpus(&e, &corpus).unwrap());
    }

    #[test]
    fn object_similarity_takes_max_over_chunks() {
        let corpus = three_chunk_corpus();
        let q = vec![1.0, 0.0];
        let store =
            VectorStore::from_vectors(vec![vec![0.2, (1.0f64 - 0.04).sqrt()], vec![0.9, (1.0f64 - 0.81).sqrt()], vec![1.0, 0.0]])
                .unwrap();
        assert!((object_similarity(&store, &corpus, &q, 0).unwrap() - 0.9).abs() < 1e-12);
        let swapped =
            VectorStore::from_vectors(vec![vec![0.9, (1.0f64 - 0.81).sqrt()], vec![0.2, (1.0f64 - 0.04).sqrt()], vec![1.0, 0.0]])
                .unwrap();
        assert_eq!(
            object_similarity(&store, &corpus, &q, 0).unwrap(),
            object_similarity(&swapped, &corpus, &q, 0).unwrap()
        );
        assert!((object_similarity(&store, &corpus, &q, 1).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn short_store_reports_missing_chunk() {
        let corpus = three_chunk_corpus();
        let store = VectorStore::from_vectors(vec![vec![1.0, 0.0]]).unwrap();
        assert!(matches!(
            object_similarity(&store, &corpus, &[1.0, 0.0], 1),
            Err(EmbedError::MissingChunk(_))
        ));
    }

    #[test]
    fn cached_embedder_matches_inner() {
        let e = HashEmbedder::default();
        let cached = CachedEmbedder::new(&e);
        let a = cached.get("hello world").unwrap();
        let b = cached.get("hello world").unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(*a, e.embed("hello world").unwrap());
    }
}
