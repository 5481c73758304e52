//! Data objects (tables and passages), their serialization, and chunking.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Delimiter between serialized fields and cells.
pub const FIELD_DELIMITER: &str = " | ";

/// Default window size, in rows or sentences, for chunking.
pub const DEFAULT_CHUNK_UNITS: usize = 20;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("object `{id}`: {reason}")]
    Validation { id: String, reason: String },
    #[error("chunk size must be at least 1")]
    ZeroChunkUnits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Table,
    Passage,
}

/// One table or passage. The unit of retrieval and of gold labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataObject {
    pub id: String,
    pub kind: ObjectKind,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub columns: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rows: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sentences: Vec<String>,
}

impl DataObject {
    pub fn table(
        id: impl Into<String>,
        title: impl Into<String>,
        columns: Vec<String>,
        rows: Vec<Vec<String>>,
    ) -> Self {
        Self {
            id: id.into(),
            kind: ObjectKind::Table,
            title: title.into(),
            description: None,
            columns,
            rows,
            sentences: Vec::new(),
        }
    }

    pub fn passage(id: impl Into<String>, title: impl Into<String>, sentences: Vec<String>) -> Self {
        Self {
            id: id.into(),
            kind: ObjectKind::Passage,
            title: title.into(),
            description: None,
            columns: Vec::new(),
            rows: Vec::new(),
            sentences,
        }
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = Some(description.into());
        self
    }

    pub fn is_table(&self) -> bool {
        self.kind == ObjectKind::Table
    }

    /// Number of content units: rows for tables, sentences for passages.
    pub fn unit_count(&self) -> usize {
        match self.kind {
            ObjectKind::Table => self.rows.len(),
            ObjectKind::Passage => self.sentences.len(),
        }
    }

    /// Text of a single content unit. Table rows render their cells joined
    /// by the field delimiter.
    pub fn unit_text(&self, index: usize) -> String {
        match self.kind {
            ObjectKind::Table => self.rows[index].join(FIELD_DELIMITER),
            ObjectKind::Passage => self.sentences[index].clone(),
        }
    }

    /// Values of one table column, in row order.
    pub fn column_values(&self, column: usize) -> impl Iterator<Item = &str> {
        self.rows.iter().map(move |row| row[column].as_str())
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let fail = |reason: String| CorpusError::Validation {
            id: self.id.clone(),
            reason,
        };
        if self.id.trim().is_empty() || self.id.chars().any(char::is_whitespace) {
            return Err(fail("id must be non-empty and contain no whitespace".into()));
        }
        match self.kind {
            ObjectKind::Table => {
                if self.columns.is_empty() {
                    return Err(fail("table has no columns".into()));
                }
                if !self.sentences.is_empty() {
                    return Err(fail("table must not carry sentences".into()));
                }
                if let Some((i, row)) = self
                    .rows
                    .iter()
                    .enumerate()
                    .find(|(_, row)| row.len() != self.columns.len())
                {
                    return Err(fail(format!(
                        "row {i} has {} cells but the table has {} columns",
                        row.len(),
                        self.columns.len()
                    )));
                }
            }
            ObjectKind::Passage => {
                if self.sentences.is_empty() {
                    return Err(fail("passage has no sentences".into()));
                }
                if !self.columns.is_empty() || !self.rows.is_empty() {
                    return Err(fail("passage must not carry columns or rows".into()));
                }
            }
        }
        Ok(())
    }
}

/// Header fields repeated at the front of every chunk: the title, the
/// description when present, and for tables the column names.
pub fn object_header(obj: &DataObject) -> String {
    let mut parts: Vec<&str> = vec![obj.title.as_str()];
    if let Some(desc) = obj.description.as_deref().filter(|d| !d.trim().is_empty()) {
        parts.push(desc);
    }
    if obj.is_table() {
        parts.extend(obj.columns.iter().map(String::as_str));
    }
    parts.join(FIELD_DELIMITER)
}

/// Serialize the units in `span` together with the object header.
pub fn serialize_span(obj: &DataObject, span: Range<usize>) -> String {
    let header = object_header(obj);
    let body = match obj.kind {
        ObjectKind::Table => obj.rows[span]
            .iter()
            .map(|row| row.join(FIELD_DELIMITER))
            .collect::<Vec<_>>()
            .join(FIELD_DELIMITER),
        ObjectKind::Passage => obj.sentences[span].join(" "),
    };
    if body.is_empty() {
        header
    } else {
        format!("{header}{FIELD_DELIMITER}{body}")
    }
}

/// Whole-object serialization.
pub fn serialize_object(obj: &DataObject) -> String {
    serialize_span(obj, 0..obj.unit_count())
}

/// A serialized window of rows or sentences from one object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub object_id: String,
    pub object_index: usize,
    pub chunk_index: usize,
    pub span: Range<usize>,
    pub text: String,
}

/// Split `obj` into disjoint windows of at most `max_units` units. An object
/// with no units (a table without rows) yields one header-only chunk.
pub fn chunk_object(obj: &DataObject, object_index: usize, max_units: usize) -> Vec<Chunk> {
    assert!(max_units >= 1, "max_units must be at least 1");
    let total = obj.unit_count();
    let mut spans: Vec<Range<usize>> = (0..total)
        .step_by(max_units)
        .map(|start| start..(start + max_units).min(total))
        .collect();
    if spans.is_empty() {
        spans.push(0..0);
    }
    spans
        .into_iter()
        .enumerate()
        .map(|(chunk_index, span)| Chunk {
            object_id: obj.id.clone(),
            object_index,
            chunk_index,
            text: serialize_span(obj, span.clone()),
            span,
        })
        .collect()
}

/// Validated, chunked collection of data objects. Immutable once built.
#[derive(Debug, Clone)]
pub struct Corpus {
    objects: Vec<DataObject>,
    chunks: Vec<Chunk>,
    chunk_units: usize,
    by_id: HashMap<String, usize>,
    chunks_by_object: Vec<Range<usize>>,
}

impl PartialEq for Corpus {
    fn eq(&self, other: &Self) -> bool {
        self.objects == other.objects
            && self.chunks == other.chunks
            && self.chunk_units == other.chunk_units
    }
}

impl Corpus {
    pub fn new(objects: Vec<DataObject>, chunk_units: usize) -> Result<Self, CorpusError> {
        if chunk_units == 0 {
            return Err(CorpusError::ZeroChunkUnits);
        }
        let mut by_id = HashMap::with_capacity(objects.len());
        for (i, obj) in objects.iter().enumerate() {
            obj.validate()?;
            if by_id.insert(obj.id.clone(), i).is_some() {
                return Err(CorpusError::Validation {
                    id: obj.id.clone(),
                    reason: "duplicate id".into(),
                });
            }
        }
        let mut chunks = Vec::new();
        let mut chunks_by_object = Vec::with_capacity(objects.len());
        for (i, obj) in objects.iter().enumerate() {
            let start = chunks.len();
            chunks.extend(chunk_object(obj, i, chunk_units));
            chunks_by_object.push(start..chunks.len());
        }
        Ok(Self {
            objects,
            chunks,
            chunk_units,
            by_id,
            chunks_by_object,
        })
    }

    pub fn objects(&self) -> &[DataObject] {
        &self.objects
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn chunk_units(&self) -> usize {
        self.chunk_units
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&DataObject> {
        self.index_of(id).map(|i| &self.objects[i])
    }

    pub fn object(&self, index: usize) -> &DataObject {
        &self.objects[index]
    }

    /// Global chunk ids belonging to object `index`.
    pub fn chunk_range(&self, index: usize) -> Range<usize> {
        self.chunks_by_object[index].clone()
    }
}

/// Load a JSONL corpus file, one object per line. Blank lines are skipped.
pub fn load_corpus(path: &Path, chunk_units: usize) -> Result<Corpus, CorpusError> {
    let file = fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut objects = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let obj: DataObject = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        objects.push(obj);
    }
    Corpus::new(objects, chunk_units)
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
    for obj in corpus.objects() {
        let line = serde_json::to_string(obj).expect("data objects always serialize");
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}
