//! Okapi BM25 over chunks.
//!
//! score(D, Q) = Σ_{q ∈ Q} idf(q) · tf·(k1 + 1) / (tf + k1·(1 − b + b·|D|/avgdl))
//! with idf(q) = ln(1 + (N − df + 0.5) / (df + 0.5)), which keeps every
//! term contribution non-negative. Query terms are treated as a set.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub chunk: u32,
    pub tf: u32,
}

/// Inverted lists plus the length statistics BM25 needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bm25Index {
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
}

impl Bm25Index {
    /// Build from chunk texts; the position in `docs` is the chunk id.
    pub fn build<S: AsRef<str>>(docs: &[S]) -> Self {
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths = Vec::with_capacity(docs.len());
        for (id, doc) in docs.iter().enumerate() {
            let tokens = tokenize(doc.as_ref());
            doc_lengths.push(tokens.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push(Posting {
                    chunk: id as u32,
                    tf: count,
                });
            }
        }
        let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
        let avg_doc_length = if doc_lengths.is_empty() {
            0.0
        } else {
            total as f64 / doc_lengths.len() as f64
        };
        Self {
            postings,
            doc_lengths,
            avg_doc_length,
        }
    }

    pub fn doc_count(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn doc_length(&self, chunk: usize) -> u32 {
        self.doc_lengths[chunk]
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_count() as f64;
        let df = self.doc_freq(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Score every chunk containing at least one query term. Unsorted.
    pub fn score_all<S: AsRef<str>>(&self, params: Bm25Params, query_terms: &[S]) -> HashMap<usize, f64> {
        let terms: BTreeSet<&str> = query_terms.iter().map(AsRef::as_ref).collect();
        let mut scores: HashMap<usize, f64> = HashMap::new();
        for term in terms {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(term);
            for p in list {
                let tf = p.tf as f64;
                let len_ratio = if self.avg_doc_length > 0.0 {
                    self.doc_lengths[p.chunk as usize] as f64 / self.avg_doc_length
                } else {
                    0.0
                };
                let norm = tf + params.k1 * (1.0 - params.b + params.b * len_ratio);
                *scores.entry(p.chunk as usize).or_default() += idf * tf * (params.k1 + 1.0) / norm;
            }
        }
        scores
    }

    /// Top `top_k` chunks by descending score, ties by ascending chunk id.
    /// A query with no in-vocabulary term yields an empty list.
    pub fn search<S: AsRef<str>>(&self, params: Bm25Params, query_terms: &[S], top_k: usize) -> Vec<(usize, f64)> {
        let mut ranked: Vec<(usize, f64)> = self.score_all(params, query_terms).into_iter().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(top_k);
        ranked
    }
}
