//! Retrieval trace: one JSON line per question with every intermediate
//! result of the pipeline.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::info_align::BaseSet;
use crate::lm::ScoredNGram;
use crate::struct_align::{Draft, Strategy};
use crate::verify_agg::{BeamSelection, ConfidenceTable};

pub const TRACE_FORMAT: &str = "arm-trace/1";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeywordListTrace {
    pub keyword: String,
    pub ngrams: Vec<ScoredNGram>,
    /// Segment score; absent when every beam died for this keyword.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentTrace {
    pub score: f64,
    pub lists: Vec<KeywordListTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DraftTrace {
    pub beam: usize,
    pub strategy: Strategy,
    pub search_set: Vec<String>,
    pub draft: Draft,
    pub rendering: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionTrace {
    pub format: String,
    pub question_id: String,
    pub question: String,
    pub keywords: Vec<String>,
    pub keyword_fallback: bool,
    pub alignments: Vec<AlignmentTrace>,
    pub base_sets: Vec<BaseSet>,
    pub drafts: Vec<DraftTrace>,
    pub selections: Vec<BeamSelection>,
    pub confidences: ConfidenceTable,
    pub final_ids: Vec<String>,
    pub llm_calls: usize,
}

impl QuestionTrace {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        question_id: &str,
        question: &str,
        keywords: Vec<String>,
        keyword_fallback: bool,
        alignments: Vec<AlignmentTrace>,
        base_sets: Vec<BaseSet>,
        drafts: Vec<DraftTrace>,
        selections: Vec<BeamSelection>,
        confidences: ConfidenceTable,
        final_ids: Vec<String>,
        llm_calls: usize,
    ) -> Self {
        Self {
            format: TRACE_FORMAT.into(),
            question_id: question_id.into(),
            question: question.into(),
            keywords,
            keyword_fallback,
            alignments,
            base_sets,
            drafts,
            selections,
            confidences,
            final_ids,
            llm_calls,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace serializes")
    }

    /// Structural checks beyond the field schema.
    pub fn check(&self) -> Result<(), String> {
        if self.format != TRACE_FORMAT {
            return Err(format!("format `{}`, expected `{TRACE_FORMAT}`", self.format));
        }
        if self.keywords.is_empty() {
            return Err("no keywords".into());
        }
        for a in &self.alignments {
            if a.lists.len() != self.keywords.len() {
                return Err("alignment lists do not match keywords".into());
            }
        }
        if self.selections.len() != self.drafts.len() {
            return Err("one selection per draft expected".into());
        }
        for (d, s) in self.drafts.iter().zip(&self.selections) {
            let ids: BTreeSet<&str> = d.draft.objects.iter().map(String::as_str).collect();
            if s.object_ids.iter().any(|o| !ids.contains(o.as_str())) {
                return Err(format!("selection {} leaves its draft", s.beam));
            }
            if s.object_ids.len() != s.weights.len() {
                return Err(format!("selection {} has mismatched weights", s.beam));
            }
        }
        let voted: BTreeSet<&str> = self.confidences.rows.iter().map(|r| r.object_id.as_str()).collect();
        if self.final_ids.iter().any(|id| !voted.contains(id.as_str())) {
            return Err("final list contains an object without confidence".into());
        }
        Ok(())
    }
}

/// Parse and check every line of a trace file.
pub fn validate_trace(text: &str) -> Result<Vec<QuestionTrace>, TraceError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fail = |message: String| TraceError::Schema { line: n + 1, message };
        let t: QuestionTrace = serde_json::from_str(line).map_err(|e| fail(e.to_string()))?;
        t.check().map_err(fail)?;
        out.push(t);
    }
    Ok(out)
}
