//! Comparison methods: dense retrieval, reranked dense retrieval, question
//! decomposition, and an iterative search-and-reason agent loop.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{serialize_object, Corpus};
use crate::embedding::{all_object_similarities, EmbedError, EmbeddingProvider, VectorStore};
use crate::lm::{decode_free, LmError, Special, TokenId, TokenScorer, Vocab};
use crate::prompts::{render, Prompts};
use crate::text::{overlap_coefficient, token_set};

pub const DEFAULT_RERANK_POOL: usize = 50;
pub const DEFAULT_PER_SUB: usize = 30;
pub const MAX_SUB_QUESTIONS: usize = 6;
pub const DEFAULT_MAX_ITERATIONS: usize = 8;
pub const DEFAULT_PER_SEARCH: usize = 5;
/// Token budget for one free-form generation.
pub const MAX_GENERATION: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Lm(#[from] LmError),
}

/// Dense retrieval context shared by every baseline.
pub struct Dense<'a> {
    pub corpus: &'a Corpus,
    pub store: &'a VectorStore,
    pub provider: &'a dyn EmbeddingProvider,
}

impl Dense<'_> {
    /// Every object with its similarity, best first, ties by id.
    pub fn ranked(&self, query: &str) -> Result<Vec<(usize, f64)>, EmbedError> {
        let q = self.provider.embed(query)?;
        let sims = all_object_similarities(self.store, self.corpus, &q)?;
        let mut out: Vec<(usize, f64)> = sims.into_iter().enumerate().collect();
        out.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.corpus.object(a.0).id.cmp(&self.corpus.object(b.0).id))
        });
        Ok(out)
    }

    pub fn retrieve(&self, query: &str, top_k: usize) -> Result<Vec<String>, EmbedError> {
        Ok(self
            .ranked(query)?
            .into_iter()
            .take(top_k)
            .map(|(i, _)| self.corpus.object(i).id.clone())
            .collect())
    }
}

/// Relevance of a serialized object to a question.
pub trait Reranker: Send + Sync {
    fn score(&self, question: &str, object_text: &str) -> f64;
}

/// Overlap coefficient between the token sets of the question and object.
#[derive(Debug, Clone, Copy, Default)]
pub struct OverlapReranker;

impl Reranker for OverlapReranker {
    fn score(&self, question: &str, object_text: &str) -> f64 {
        overlap_coefficient(&token_set(question), &token_set(object_text))
    }
}

/// Re-sort `candidates` by reranker score; equal scores keep their order.
pub fn rerank(
    corpus: &Corpus,
    reranker: &dyn Reranker,
    question: &str,
    candidates: &[usize],
    top_k: usize,
) -> Vec<String> {
    let mut scored: Vec<(usize, f64)> = candidates
        .iter()
        .map(|&i| (i, reranker.score(question, &serialize_object(corpus.object(i)))))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    scored
        .into_iter()
        .take(top_k)
        .map(|(i, _)| corpus.object(i).id.clone())
        .collect()
}

pub fn rerank_retrieve(
    dense: &Dense,
    reranker: &dyn Reranker,
    question: &str,
    pool: usize,
    top_k: usize,
) -> Result<Vec<String>, EmbedError> {
    let candidates: Vec<usize> = dense.ranked(question)?.into_iter().take(pool.max(top_k)).map(|(i, _)| i).collect();
    Ok(rerank(dense.corpus, reranker, question, &candidates, top_k))
}

/// Split a generation into sub-questions: one per non-empty line, capped.
pub fn parse_sub_questions(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .take(MAX_SUB_QUESTIONS)
        .map(String::from)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub sub_questions: Vec<String>,
    pub retrieved: Vec<String>,
    pub llm_calls: usize,
}

/// Generate sub-questions with one call, retrieve `per_sub` objects for each,
/// and rank the union by reranker score against the original question, or by
/// best dense score when no reranker is given.
#[allow(clippy::too_many_arguments)]
pub fn decomposed_retrieve(
    dense: &Dense,
    scorer: &mut dyn TokenScorer,
    vocab: &mut Vocab,
    prompts: &Prompts,
    reranker: Option<&dyn Reranker>,
    question: &str,
    per_sub: usize,
    top_k: usize,
) -> Result<Decomposition, BaselineError> {
    let ctx = vocab.encode_text(&render(&prompts.decompose, &[("user_question", question)]));
    let (out, _) = decode_free(scorer, vocab, &ctx, &[Special::End.id()], MAX_GENERATION)?;
    let mut subs = parse_sub_questions(&vocab.render(&out));
    if subs.is_empty() {
        subs.push(question.to_string());
    }
    let mut best: BTreeMap<usize, f64> = BTreeMap::new();
    let mut order = Vec::new();
    for sub in &subs {
        for (i, s) in dense.ranked(sub)?.into_iter().take(per_sub) {
            match best.get_mut(&i) {
                Some(b) => *b = b.max(s),
                None => {
                    best.insert(i, s);
                    order.push(i);
                }
            }
        }
    }
    let retrieved = match reranker {
        Some(r) => {
            // Present candidates in dense order so reranker ties stay stable.
            order.sort_by(|a, b| {
                best[b]
                    .total_cmp(&best[a])
                    .then_with(|| dense.corpus.object(*a).id.cmp(&dense.corpus.object(*b).id))
            });
            rerank(dense.corpus, r, question, &order, top_k)
        }
        None => {
            order.sort_by(|a, b| {
                best[b]
                    .total_cmp(&best[a])
                    .then_with(|| dense.corpus.object(*a).id.cmp(&dense.corpus.object(*b).id))
            });
            order.iter().take(top_k).map(|&i| dense.corpus.object(i).id.clone()).collect()
        }
    };
    Ok(Decomposition {
        sub_questions: subs,
        retrieved,
        llm_calls: 1,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Search(String),
    Finish(String),
    Malformed(String),
}

/// Find the action in one generated step. Accepts `Search[...]` and
/// `Finish[...]` (closing bracket optional) or a bare verb word followed by
/// its argument.
pub fn parse_action(text: &str) -> Action {
    parse_step(text).1
}

/// Split a generated step into its thought (text before the action) and the
/// action.
pub fn parse_step(text: &str) -> (String, Action) {
    let lower = text.to_lowercase();
    let bracketed = ["search[", "finish["]
        .iter()
        .filter_map(|verb| lower.find(verb).map(|pos| (pos, *verb)))
        .min();
    let (thought_end, verb, arg) = if let Some((pos, verb)) = bracketed {
        let rest = &text[pos + verb.len()..];
        (pos, &verb[..6], rest.split(']').next().unwrap_or("").trim().to_string())
    } else {
        let mut offset = 0;
        let mut found = None;
        for word in text.split_whitespace() {
            let start = offset + text[offset..].find(word).expect("word comes from text");
            offset = start + word.len();
            let w = word.to_lowercase();
            if w == "search" || w == "finish" {
                found = Some((start, if w == "search" { "search" } else { "finish" }, text[offset..].trim().to_string()));
                break;
            }
        }
        match found {
            Some(f) => f,
            None => return (text.trim().to_string(), Action::Malformed(text.trim().to_string())),
        }
    };
    let thought = text[..thought_end].trim().to_string();
    let action = match verb {
        "search" if arg.is_empty() => Action::Malformed(text.trim().to_string()),
        "search" => Action::Search(arg),
        _ => Action::Finish(arg),
    };
    (thought, action)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Finished,
    IterationCap,
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub thought: String,
    pub action: Action,
    /// Ids shown to the scorer after this step.
    pub observation: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTranscript {
    pub steps: Vec<Step>,
    pub iterations: usize,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentOutcome {
    /// Distinct ids in order of first appearance.
    pub retrieved: Vec<String>,
    /// Every object shown, duplicates included.
    pub objects_shown: usize,
    pub llm_calls: usize,
    pub transcript: AgentTranscript,
}

/// Marker closing every prompt step so scripted scorers can key on it.
const STEP_MARKER: &str = "next step";

/// Iterative loop: each iteration generates one line holding a thought and
/// an action. A search shows `per_search` dense results as the next
/// observation; a search on the last allowed iteration is never shown.
pub fn agentic_retrieve(
    dense: &Dense,
    scorer: &mut dyn TokenScorer,
    vocab: &mut Vocab,
    prompts: &Prompts,
    question: &str,
    max_iterations: usize,
    per_search: usize,
) -> Result<AgentOutcome, BaselineError> {
    assert!(max_iterations >= 1);
    for w in ["search", "finish"] {
        vocab.intern(w);
    }
    let mut history = String::new();
    let mut steps = Vec::new();
    let mut retrieved: Vec<String> = Vec::new();
    let mut shown = 0;
    let mut termination = Termination::IterationCap;
    for iteration in 1..=max_iterations {
        let prompt = render(&prompts.react, &[("user_question", question), ("history", &history)]);
        let mut ctx: Vec<TokenId> = vocab.encode_text(&prompt);
        ctx.extend(vocab.encode_text(STEP_MARKER));
        let (out, _) = decode_free(
            scorer,
            vocab,
            &ctx,
            &[Special::Newline.id(), Special::End.id()],
            MAX_GENERATION,
        )?;
        let line = vocab.render(&out);
        let (thought, action) = parse_step(&line);
        let mut observation = Vec::new();
        match &action {
            Action::Search(q) if iteration < max_iterations => {
                observation = dense.retrieve(q, per_search)?;
                shown += observation.len();
                history.push_str(&format!("{STEP_MARKER}: {line}\nobservation:"));
                for id in &observation {
                    if !retrieved.contains(id) {
                        retrieved.push(id.clone());
                    }
                    let obj = dense.corpus.get(id).expect("retrieved ids exist");
                    history.push_str(&format!(" {id}: {}\n", serialize_object(obj)));
                }
            }
            Action::Search(_) => {}
            Action::Finish(_) => termination = Termination::Finished,
            Action::Malformed(_) => termination = Termination::Malformed,
        }
        let stop = !matches!(action, Action::Search(_));
        steps.push(Step {
            thought,
            action,
            observation,
        });
        if stop {
            break;
        }
    }
    let iterations = steps.len();
    Ok(AgentOutcome {
        retrieved,
        objects_shown: shown,
        llm_calls: iterations - 1,
        transcript: AgentTranscript {
            steps,
            iterations,
            termination,
        },
    })
}
