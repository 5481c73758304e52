//! The lexical index (N-gram trie plus BM25) and its JSON snapshot.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bm25::Bm25Index;
use crate::corpus::{Corpus, CorpusError, DataObject};
use crate::ngram::{extract_ngrams, NGram, NGramTrie};

pub const INDEX_FORMAT: &str = "arm-index/1";

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("cannot access index {path}: {message}")]
    Io { path: String, message: String },
    #[error("index {path} is not a valid snapshot: {message}")]
    Format { path: String, message: String },
    #[error("index {path} has format `{found}`, expected `{INDEX_FORMAT}`")]
    Version { path: String, found: String },
    #[error("index {path} does not match its corpus (digest mismatch)")]
    Digest { path: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone)]
pub struct Index {
    pub corpus: Corpus,
    pub trie: NGramTrie,
    pub bm25: Bm25Index,
}

/// On-disk form. Every map is ordered, so the same corpus always yields the
/// same bytes.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Snapshot {
    format: String,
    digest: String,
    chunk_units: usize,
    chunk_count: usize,
    ngram_count: usize,
    objects: Vec<DataObject>,
    trie: NGramTrie,
    bm25: Bm25Index,
}

/// SHA-256 over the chunk size and every chunk's owner and text.
pub fn corpus_digest(corpus: &Corpus) -> String {
    let mut h = Sha256::new();
    h.update(corpus.chunk_units().to_le_bytes());
    for c in corpus.chunks() {
        h.update(c.object_id.as_bytes());
        h.update([0]);
        h.update(c.text.as_bytes());
        h.update([0]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl Index {
    pub fn build(corpus: Corpus) -> Self {
        let texts: Vec<&str> = corpus.chunks().iter().map(|c| c.text.as_str()).collect();
        let grams: BTreeSet<NGram> = texts.iter().flat_map(|t| extract_ngrams(t)).collect();
        let trie = NGramTrie::build(&grams);
        let bm25 = Bm25Index::build(&texts);
        Self { corpus, trie, bm25 }
    }

    pub fn to_json(&self) -> String {
        let snap = Snapshot {
            format: INDEX_FORMAT.into(),
            digest: corpus_digest(&self.corpus),
            chunk_units: self.corpus.chunk_units(),
            chunk_count: self.corpus.chunks().len(),
            ngram_count: self.trie.len(),
            objects: self.corpus.objects().to_vec(),
            trie: self.trie.clone(),
            bm25: self.bm25.clone(),
        };
        serde_json::to_string(&snap).expect("snapshot serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        fs::write(path, self.to_json()).map_err(|e| IndexError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let p = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|e| IndexError::Io {
            path: p.clone(),
            message: e.to_string(),
        })?;
        let head: serde_json::Value = serde_json::from_str(&text).map_err(|e| IndexError::Format {
            path: p.clone(),
            message: e.to_string(),
        })?;
        let found = head.get("format").and_then(|v| v.as_str()).unwrap_or("");
        if found != INDEX_FORMAT {
            return Err(IndexError::Version {
                path: p,
                found: found.into(),
            });
        }
        let snap: Snapshot = serde_json::from_value(head).map_err(|e| IndexError::Format {
            path: p.clone(),
            message: e.to_string(),
        })?;
        let corpus = Corpus::new(snap.objects, snap.chunk_units)?;
        if corpus_digest(&corpus) != snap.digest || corpus.chunks().len() != snap.chunk_count {
            return Err(IndexError::Digest { path: p });
        }
        Ok(Self {
            corpus,
            trie: snap.trie,
            bm25: snap.bm25,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Corpus {
        Corpus::new(
            vec![
                DataObject::passage("p1", "Title", vec!["Eligible free rate.".into()]),
                DataObject::table("t1", "Schools", vec!["cds".into(), "name".into()], vec![vec!["1".into(), "Alpha".into()]]),
            ],
            20,
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("idx.json");
        let idx = Index::build(corpus());
        idx.save(&path).unwrap();
        let loaded = Index::load(&path).unwrap();
        assert_eq!(loaded.to_json(), idx.to_json());
        assert_eq!(Index::build(corpus()).to_json(), idx.to_json());
        assert!(loaded.trie.contains(&NGram::from_text("eligible free rate")));
    }

    #[test]
    fn rejects_wrong_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("idx.json");
        fs::write(&path, r#"{"format":"other/9"}"#).unwrap();
        assert!(matches!(Index::load(&path), Err(IndexError::Version { .. })));
    }
}
