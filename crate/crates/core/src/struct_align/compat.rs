//! Pairwise compatibility between data objects: joinable columns between
//! tables, linking entities between table cells and passage sentences, and
//! linking sentences between passages.
//!
//! Every score is `w · semantic + (1 − w) · lexical` where the semantic part
//! is an embedding cosine clamped to [0, 1] and the lexical part is Jaccard
//! over column values or the overlap coefficient over token sets.

use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, DataObject, ObjectKind};
use crate::embedding::{cosine_or_zero, CachedEmbedder, EmbedError, EmbeddingProvider};
use crate::text::{jaccard, overlap_coefficient, token_set};

pub const DEFAULT_COMPAT_WEIGHT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConnectionKind {
    JoinColumn,
    EntityLink,
    SentenceLink,
}

/// Position inside an object that a connection attaches to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Locator {
    Column(usize),
    Cell { row: usize, column: usize },
    Sentence(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endpoint {
    pub object_id: String,
    pub locator: Locator,
}

/// The best-matching pair of parts behind a compatibility score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Connection {
    pub kind: ConnectionKind,
    pub a: Endpoint,
    pub b: Endpoint,
    pub semantic: f64,
    pub lexical: f64,
    pub score: f64,
}

impl Connection {
    /// The same connection seen from the other side.
    pub fn reversed(&self) -> Self {
        Self {
            a: self.b.clone(),
            b: self.a.clone(),
            ..self.clone()
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CompatError {
    #[error("object `{0}` is not a table")]
    NotATable(String),
    #[error("object `{0}` is not a passage")]
    NotAPassage(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// Distinct trimmed, non-empty values of a column.
pub fn value_set<'a>(values: impl IntoIterator<Item = &'a str>) -> BTreeSet<&'a str> {
    values.into_iter().map(str::trim).filter(|v| !v.is_empty()).collect()
}

fn semantic(embedder: &CachedEmbedder, a: &str, b: &str) -> Result<f64, EmbedError> {
    let (u, v) = (embedder.get(a)?, embedder.get(b)?);
    Ok(cosine_or_zero(&u, &v)?.clamp(0.0, 1.0))
}

fn mix(w: f64, semantic: f64, lexical: f64) -> f64 {
    w * semantic + (1.0 - w) * lexical
}

/// Compatibility of two columns given their headers and values.
pub fn column_compat<'a>(
    embedder: &CachedEmbedder,
    header_a: &str,
    values_a: impl IntoIterator<Item = &'a str>,
    header_b: &str,
    values_b: impl IntoIterator<Item = &'a str>,
    w: f64,
) -> Result<f64, EmbedError> {
    let sem = semantic(embedder, header_a, header_b)?;
    let lex = jaccard(&value_set(values_a), &value_set(values_b));
    Ok(mix(w, sem, lex))
}

fn endpoint(obj: &DataObject, locator: Locator) -> Endpoint {
    Endpoint {
        object_id: obj.id.clone(),
        locator,
    }
}

/// Best column pair between two tables.
pub fn table_table_compat(
    embedder: &CachedEmbedder,
    a: &DataObject,
    b: &DataObject,
    w: f64,
) -> Result<(f64, Option<Connection>), CompatError> {
    for t in [a, b] {
        if t.kind != ObjectKind::Table {
            return Err(CompatError::NotATable(t.id.clone()));
        }
    }
    let sets_b: Vec<BTreeSet<&str>> = (0..b.columns.len()).map(|j| value_set(b.column_values(j))).collect();
    let mut best: Option<Connection> = None;
    for (i, ha) in a.columns.iter().enumerate() {
        let set_a = value_set(a.column_values(i));
        for (j, hb) in b.columns.iter().enumerate() {
            let sem = semantic(embedder, ha, hb)?;
            let lex = jaccard(&set_a, &sets_b[j]);
            let score = mix(w, sem, lex);
            if best.as_ref().is_none_or(|c| score > c.score) {
                best = Some(Connection {
                    kind: ConnectionKind::JoinColumn,
                    a: endpoint(a, Locator::Column(i)),
                    b: endpoint(b, Locator::Column(j)),
                    semantic: sem,
                    lexical: lex,
                    score,
                });
            }
        }
    }
    Ok((best.as_ref().map_or(0.0, |c| c.score), best))
}

/// Best (cell, sentence) pair between a table and a passage.
pub fn table_passage_compat(
    embedder: &CachedEmbedder,
    table: &DataObject,
    passage: &DataObject,
    w: f64,
) -> Result<(f64, Option<Connection>), CompatError> {
    if table.kind != ObjectKind::Table {
        return Err(CompatError::NotATable(table.id.clone()));
    }
    if passage.kind != ObjectKind::Passage {
        return Err(CompatError::NotAPassage(passage.id.clone()));
    }
    let sentences: Vec<BTreeSet<String>> = passage.sentences.iter().map(|s| token_set(s)).collect();
    let mut best: Option<Connection> = None;
    for (r, row) in table.rows.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            let cell_tokens = token_set(cell);
            for (s, sentence) in passage.sentences.iter().enumerate() {
                let sem = semantic(embedder, cell, sentence)?;
                let lex = overlap_coefficient(&cell_tokens, &sentences[s]);
                let score = mix(w, sem, lex);
                if best.as_ref().is_none_or(|b| score > b.score) {
                    best = Some(Connection {
                        kind: ConnectionKind::EntityLink,
                        a: endpoint(table, Locator::Cell { row: r, column: c }),
                        b: endpoint(passage, Locator::Sentence(s)),
                        semantic: sem,
                        lexical: lex,
                        score,
                    });
                }
            }
        }
    }
    Ok((best.as_ref().map_or(0.0, |c| c.score), best))
}

/// Best sentence pair between two passages.
pub fn passage_passage_compat(
    embedder: &CachedEmbedder,
    a: &DataObject,
    b: &DataObject,
    w: f64,
) -> Result<(f64, Option<Connection>), CompatError> {
    for p in [a, b] {
        if p.kind != ObjectKind::Passage {
            return Err(CompatError::NotAPassage(p.id.clone()));
        }
    }
    let sets_b: Vec<BTreeSet<String>> = b.sentences.iter().map(|s| token_set(s)).collect();
    let mut best: Option<Connection> = None;
    for (i, sa) in a.sentences.iter().enumerate() {
        let set_a = token_set(sa);
        for (j, sb) in b.sentences.iter().enumerate() {
            let sem = semantic(embedder, sa, sb)?;
            let lex = overlap_coefficient(&set_a, &sets_b[j]);
            let score = mix(w, sem, lex);
            if best.as_ref().is_none_or(|c| score > c.score) {
                best = Some(Connection {
                    kind: ConnectionKind::SentenceLink,
                    a: endpoint(a, Locator::Sentence(i)),
                    b: endpoint(b, Locator::Sentence(j)),
                    semantic: sem,
                    lexical: lex,
                    score,
                });
            }
        }
    }
    Ok((best.as_ref().map_or(0.0, |c| c.score), best))
}

/// Dispatch on object kinds. The connection is oriented from `a` to `b`.
pub fn object_compat(
    embedder: &CachedEmbedder,
    a: &DataObject,
    b: &DataObject,
    w: f64,
) -> Result<(f64, Option<Connection>), CompatError> {
    match (a.kind, b.kind) {
        (ObjectKind::Table, ObjectKind::Table) => table_table_compat(embedder, a, b, w),
        (ObjectKind::Passage, ObjectKind::Passage) => passage_passage_compat(embedder, a, b, w),
        (ObjectKind::Table, ObjectKind::Passage) => table_passage_compat(embedder, a, b, w),
        (ObjectKind::Passage, ObjectKind::Table) => {
            let (s, c) = table_passage_compat(embedder, b, a, w)?;
            Ok((s, c.map(|c| c.reversed())))
        }
    }
}

type Entry = Arc<(f64, Option<Connection>)>;

/// Lazily computed, symmetric compatibility over corpus objects. Entries are
/// stored per unordered pair with the connection oriented from the lower
/// object index, so the result does not depend on request order.
pub struct CompatMatrix<'a> {
    corpus: &'a Corpus,
    embedder: CachedEmbedder<'a>,
    w: f64,
    cache: Mutex<HashMap<(usize, usize), Entry>>,
}

impl<'a> CompatMatrix<'a> {
    pub fn new(corpus: &'a Corpus, provider: &'a dyn EmbeddingProvider, w: f64) -> Self {
        Self {
            corpus,
            embedder: CachedEmbedder::new(provider),
            w,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn corpus(&self) -> &Corpus {
        self.corpus
    }

    /// The memoizing embedder used for the semantic parts, shared so callers
    /// can reuse its cache.
    pub fn embedder(&self) -> &CachedEmbedder<'a> {
        &self.embedder
    }

    fn entry(&self, i: usize, j: usize) -> Result<Entry, CompatError> {
        let key = (i.min(j), i.max(j));
        if let Some(e) = self.cache.lock().unwrap().get(&key) {
            return Ok(Arc::clone(e));
        }
        let value = Arc::new(object_compat(
            &self.embedder,
            self.corpus.object(key.0),
            self.corpus.object(key.1),
            self.w,
        )?);
        Ok(Arc::clone(self.cache.lock().unwrap().entry(key).or_insert(value)))
    }

    /// C between objects `i` and `j` (by corpus index). The diagonal is 0.
    pub fn score(&self, i: usize, j: usize) -> Result<f64, CompatError> {
        if i == j {
            return Ok(0.0);
        }
        Ok(self.entry(i, j)?.0)
    }

    /// Best connection oriented from `i` to `j`.
    pub fn connection(&self, i: usize, j: usize) -> Result<Option<Connection>, CompatError> {
        if i == j {
            return Ok(None);
        }
        let e = self.entry(i, j)?;
        Ok(e.1.as_ref().map(|c| if i < j { c.clone() } else { c.reversed() }))
    }

    /// The `k` objects most compatible with `i`, excluding `i` and anything in
    /// `exclude`; ties go to the smaller object id.
    pub fn most_compatible(&self, i: usize, k: usize, exclude: &BTreeSet<usize>) -> Result<Vec<usize>, CompatError> {
        let mut scored = Vec::new();
        for j in 0..self.corpus.len() {
            if j != i && !exclude.contains(&j) {
                scored.push((j, self.score(i, j)?));
            }
        }
        scored.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.corpus.object(a.0).id.cmp(&self.corpus.object(b.0).id))
        });
        Ok(scored.into_iter().take(k).map(|(j, _)| j).collect())
    }
}
