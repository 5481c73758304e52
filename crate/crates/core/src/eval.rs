//! Retrieval metrics, the evaluation harness that runs every method over a
//! question set, and deterministic CSV/JSON reports.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{
    agentic_retrieve, decomposed_retrieve, rerank_retrieve, BaselineError, Dense, Reranker, DEFAULT_MAX_ITERATIONS,
    DEFAULT_PER_SEARCH, DEFAULT_PER_SUB, DEFAULT_RERANK_POOL,
};
use crate::corpus::Corpus;
use crate::lm::{Fallback, MockScorer, Special, TokenScorer, Vocab};
use crate::pipeline::{Engine, PipelineError};
use crate::prompts::{render, Prompts};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("question `{0}` has no gold objects")]
    EmptyGold(String),
    #[error("question `{question}` names unknown gold object `{id}`")]
    UnknownGoldId { question: String, id: String },
    #[error("cannot read questions {path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
    #[error("question `{question}`: {source}")]
    Pipeline {
        question: String,
        #[source]
        source: PipelineError,
    },
    #[error("question `{question}`: {source}")]
    Baseline {
        question: String,
        #[source]
        source: BaselineError,
    },
}

/// One evaluation question. `keywords`, when present, scripts the keyword
/// step of the mock scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Question {
    #[serde(rename = "question_id", alias = "id")]
    pub id: String,
    pub question: String,
    #[serde(rename = "gold_object_ids", alias = "gold")]
    pub gold: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub keywords: Vec<String>,
}

/// Read a JSON-lines question file.
pub fn load_questions(path: &Path) -> Result<Vec<Question>, EvalError> {
    let p = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| EvalError::Io {
        path: p.clone(),
        message: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let q: Question = serde_json::from_str(line).map_err(|e| EvalError::Parse {
            path: p.clone(),
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push(q);
    }
    Ok(out)
}

pub fn questions_to_jsonl(questions: &[Question]) -> String {
    questions
        .iter()
        .map(|q| serde_json::to_string(q).expect("question serializes") + "\n")
        .collect()
}

/// Every gold id must name an object of the corpus.
pub fn check_gold(corpus: &Corpus, questions: &[Question]) -> Result<(), EvalError> {
    for q in questions {
        if q.gold.is_empty() {
            return Err(EvalError::EmptyGold(q.id.clone()));
        }
        if let Some(id) = q.gold.iter().find(|g| corpus.get(g).is_none()) {
            return Err(EvalError::UnknownGoldId {
                question: q.id.clone(),
                id: id.clone(),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub perfect_recall: bool,
}

/// Set-based precision, recall, F1, and the all-gold-retrieved flag.
/// Duplicate retrieved ids count once.
pub fn compute_metrics<S: AsRef<str>, T: AsRef<str>>(retrieved: &[S], gold: &[T]) -> Result<Metrics, EvalError> {
    let gold: BTreeSet<&str> = gold.iter().map(AsRef::as_ref).collect();
    if gold.is_empty() {
        return Err(EvalError::EmptyGold(String::new()));
    }
    let got: BTreeSet<&str> = retrieved.iter().map(AsRef::as_ref).collect();
    let hit = got.intersection(&gold).count() as f64;
    let precision = if got.is_empty() { 0.0 } else { hit / got.len() as f64 };
    let recall = hit / gold.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Metrics {
        precision,
        recall,
        f1,
        perfect_recall: gold.is_subset(&got),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Dense,
    Rerank,
    DenseDecomp,
    RerankDecomp,
    React,
    /// Alignment stage only.
    ArmIa,
    /// Alignment plus structure, without verification.
    ArmIaSa,
    Arm,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Dense,
        Method::Rerank,
        Method::DenseDecomp,
        Method::RerankDecomp,
        Method::React,
        Method::ArmIa,
        Method::ArmIaSa,
        Method::Arm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Dense => "dense",
            Method::Rerank => "rerank",
            Method::DenseDecomp => "dense-decomp",
            Method::RerankDecomp => "rerank-decomp",
            Method::React => "react",
            Method::ArmIa => "arm-ia",
            Method::ArmIaSa => "arm-ia-sa",
            Method::Arm => "arm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| EvalError::UnknownMethod(s.to_string()))
    }
}

/// How per-question mock scorers are built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", deny_unknown_fields)]
pub enum ScorerSpec {
    /// Copy bias toward tokens already in the context, stronger for the last
    /// `focus_window` tokens, with an extra logit on the stop mark.
    Echo {
        #[serde(default = "default_stop_bias")]
        stop_bias: f64,
        #[serde(default = "default_focus_window")]
        focus_window: usize,
        #[serde(default = "default_focus_weight")]
        focus_weight: f64,
        /// Boost for tokens shortly followed by a word of the question.
        #[serde(default = "default_salience_weight")]
        salience_weight: f64,
        #[serde(default = "default_salience_span")]
        salience_span: usize,
    },
    Uniform,
    Seeded { seed: u64 },
}

/// Default stop bias: above the copy logit of a token seen once (ln 2) and
/// below that of a token seen twice (ln 3), so verification keeps objects the
/// draft mentions more than once.
pub const DEFAULT_STOP_BIAS: f64 = 0.9;

pub const DEFAULT_FOCUS_WINDOW: usize = 4;
pub const DEFAULT_FOCUS_WEIGHT: f64 = 2.0;

fn default_stop_bias() -> f64 {
    DEFAULT_STOP_BIAS
}

fn default_focus_window() -> usize {
    DEFAULT_FOCUS_WINDOW
}

fn default_focus_weight() -> f64 {
    DEFAULT_FOCUS_WEIGHT
}

pub const DEFAULT_SALIENCE_WEIGHT: f64 = 1.0;
pub const DEFAULT_SALIENCE_SPAN: usize = 4;

fn default_salience_weight() -> f64 {
    DEFAULT_SALIENCE_WEIGHT
}

fn default_salience_span() -> usize {
    DEFAULT_SALIENCE_SPAN
}

impl Default for ScorerSpec {
    fn default() -> Self {
        ScorerSpec::Echo {
            stop_bias: DEFAULT_STOP_BIAS,
            focus_window: DEFAULT_FOCUS_WINDOW,
            focus_weight: DEFAULT_FOCUS_WEIGHT,
            salience_weight: DEFAULT_SALIENCE_WEIGHT,
            salience_span: DEFAULT_SALIENCE_SPAN,
        }
    }
}

impl ScorerSpec {
    /// A fresh scorer for one question. Scripted keywords are emitted right
    /// after the keyword prompt when the question carries them.
    pub fn build(&self, prompts: &Prompts, question: &Question) -> MockScorer {
        let mut m = match *self {
            ScorerSpec::Echo {
                stop_bias,
                focus_window,
                focus_weight,
                salience_weight,
                salience_span,
            } => {
                let cues: Vec<String> = crate::text::tokenize(&question.question);
                MockScorer::new(Fallback::Focus {
                    window: focus_window,
                    weight: focus_weight,
                })
                .with_bias(Special::Stop.display(), stop_bias)
                .with_salience(&cues, salience_weight, salience_span)
            }
            ScorerSpec::Uniform => MockScorer::uniform(),
            ScorerSpec::Seeded { seed } => MockScorer::seeded(seed),
        };
        if !question.keywords.is_empty() {
            let mut v = Vocab::new();
            let prompt = v.encode_lines(&render(&prompts.keywords, &[("user_question", &question.question)]));
            let prefix: Vec<String> = prompt.last().map(|&id| v.display(id).to_string()).into_iter().collect();
            let mut seq: Vec<String> = Vec::new();
            for (i, k) in question.keywords.iter().enumerate() {
                if i > 0 {
                    seq.push(Special::KeywordSep.display().into());
                }
                let ids = v.encode_text(k);
                seq.extend(ids.iter().map(|&id| v.display(id).to_string()));
            }
            seq.push(Special::End.display().into());
            m.add_script(&prefix, &seq);
        }
        m
    }
}

/// Settings of the comparison methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineParams {
    pub top_k: usize,
    pub rerank_pool: usize,
    pub per_sub: usize,
    pub max_iterations: usize,
    pub per_search: usize,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            top_k: 5,
            rerank_pool: DEFAULT_RERANK_POOL,
            per_sub: DEFAULT_PER_SUB,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            per_search: DEFAULT_PER_SEARCH,
        }
    }
}

/// Result of one method on one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieval {
    pub retrieved: Vec<String>,
    pub llm_calls: usize,
    /// Objects handed over, duplicates included.
    pub objects: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRow {
    pub question_id: String,
    pub retrieved: Vec<String>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub perfect_recall: bool,
    pub llm_calls: usize,
    pub objects: usize,
}

/// Per-method summary. P, R, F1 and PR are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub perfect_recall: f64,
    pub llm_calls: f64,
    pub avg_objects: f64,
    pub rows: Vec<QuestionRow>,
}

impl MethodReport {
    /// Macro-average rows; rows are ordered by question id.
    pub fn from_rows(method: &str, mut rows: Vec<QuestionRow>) -> Self {
        rows.sort_by(|a, b| a.question_id.cmp(&b.question_id));
        let n = rows.len().max(1) as f64;
        let mean = |f: &dyn Fn(&QuestionRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        Self {
            method: method.into(),
            precision: 100.0 * mean(&|r| r.precision),
            recall: 100.0 * mean(&|r| r.recall),
            f1: 100.0 * mean(&|r| r.f1),
            perfect_recall: 100.0 * mean(&|r| f64::from(u8::from(r.perfect_recall))),
            llm_calls: mean(&|r| r.llm_calls as f64),
            avg_objects: mean(&|r| r.objects as f64),
            rows,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub methods: Vec<MethodReport>,
}

const CSV_HEADER: &str = "method,precision,recall,f1,perfect_recall,llm_calls,avg_objects";

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{CSV_HEADER}\n");
        for m in &self.methods {
            s.push_str(&format!(
                "{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
                m.method, m.precision, m.recall, m.f1, m.perfect_recall, m.llm_calls, m.avg_objects
            ));
        }
        s
    }

    /// Fixed-width comparison table for the terminal.
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<14} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}\n",
            "method", "P", "R", "F1", "PR", "#calls", "#obj"
        );
        for m in &self.methods {
            s.push_str(&format!(
                "{:<14} {:>7.1} {:>7.1} {:>7.1} {:>7.1} {:>7.2} {:>7.2}\n",
                m.method, m.precision, m.recall, m.f1, m.perfect_recall, m.llm_calls, m.avg_objects
            ));
        }
        s
    }
}

/// Everything needed to run any method on any question.
pub struct Harness<'a> {
    pub engine: &'a Engine<'a>,
    pub dense: Dense<'a>,
    pub reranker: &'a dyn Reranker,
    pub scorer: ScorerSpec,
    pub baseline: BaselineParams,
}

impl Harness<'_> {
    fn scorer_for(&self, q: &Question) -> MockScorer {
        self.scorer.build(&self.engine.prompts, q)
    }

    pub fn retrieve(&self, method: Method, q: &Question) -> Result<Retrieval, EvalError> {
        let b = &self.baseline;
        let base = |source| EvalError::Baseline {
            question: q.id.clone(),
            source,
        };
        let single = |retrieved: Vec<String>| Retrieval {
            objects: retrieved.len(),
            retrieved,
            llm_calls: 0,
        };
        match method {
            Method::Dense => Ok(single(
                self.dense.retrieve(&q.question, b.top_k).map_err(|e| base(e.into()))?,
            )),
            Method::Rerank => Ok(single(
                rerank_retrieve(&self.dense, self.reranker, &q.question, b.rerank_pool, b.top_k)
                    .map_err(|e| base(e.into()))?,
            )),
            Method::DenseDecomp | Method::RerankDecomp => {
                let reranker = (method == Method::RerankDecomp).then_some(self.reranker);
                let mut scorer = self.scorer_for(q);
                let mut vocab = self.engine.vocab();
                let d = decomposed_retrieve(
                    &self.dense,
                    &mut scorer,
                    &mut vocab,
                    &self.engine.prompts,
                    reranker,
                    &q.question,
                    b.per_sub,
                    b.top_k,
                )
                .map_err(base)?;
                Ok(Retrieval {
                    objects: d.retrieved.len(),
                    retrieved: d.retrieved,
                    llm_calls: d.llm_calls,
                })
            }
            Method::React => {
                let mut scorer = self.scorer_for(q);
                let mut vocab = self.engine.vocab();
                let a = agentic_retrieve(
                    &self.dense,
                    &mut scorer,
                    &mut vocab,
                    &self.engine.prompts,
                    &q.question,
                    b.max_iterations,
                    b.per_search,
                )
                .map_err(base)?;
                Ok(Retrieval {
                    retrieved: a.retrieved,
                    llm_calls: a.llm_calls,
                    objects: a.objects_shown,
                })
            }
            Method::ArmIa | Method::ArmIaSa | Method::Arm => {
                let mut scorer = self.scorer_for(q);
                let out = self.run_arm(&mut scorer, q)?;
                let retrieved = match method {
                    Method::ArmIa => out.stages.alignment_only,
                    Method::ArmIaSa => out.stages.with_structure,
                    _ => out.stages.full,
                };
                Ok(Retrieval {
                    objects: retrieved.len(),
                    retrieved,
                    llm_calls: out.llm_calls,
                })
            }
        }
    }

    pub fn run_arm(
        &self,
        scorer: &mut dyn TokenScorer,
        q: &Question,
    ) -> Result<crate::pipeline::ArmOutcome, EvalError> {
        self.engine
            .run(scorer, &q.id, &q.question)
            .map_err(|source| EvalError::Pipeline {
                question: q.id.clone(),
                source,
            })
    }

    fn row(&self, method: Method, q: &Question) -> Result<QuestionRow, EvalError> {
        let r = self.retrieve(method, q)?;
        let m = compute_metrics(&r.retrieved, &q.gold).map_err(|_| EvalError::EmptyGold(q.id.clone()))?;
        Ok(QuestionRow {
            question_id: q.id.clone(),
            retrieved: r.retrieved,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            perfect_recall: m.perfect_recall,
            llm_calls: r.llm_calls,
            objects: r.objects,
        })
    }

    /// Evaluate each method over all questions, `jobs` questions at a time.
    /// The report does not depend on `jobs`.
    pub fn run(&self, methods: &[Method], questions: &[Question], jobs: usize) -> Result<EvalReport, EvalError> {
        check_gold(self.dense.corpus, questions)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .expect("thread pool starts");
        let mut reports = Vec::new();
        for &method in methods {
            let rows = pool.install(|| {
                questions
                    .par_iter()
                    .map(|q| self.row(method, q))
                    .collect::<Result<Vec<_>, _>>()
            })?;
            reports.push(MethodReport::from_rows(method.name(), rows));
        }
        Ok(EvalReport { methods: reports })
    }
}
