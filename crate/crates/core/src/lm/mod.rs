//! Token-level language-model interface and constrained decoding.

pub mod decode;
pub mod scorer;
pub mod vocab;

use thiserror::Error;

pub use decode::{
    decode_choice, decode_free, decode_keywords, decode_ngram_segment, ngram_score, Beam, Choice, KeywordSpans,
    NGramList, ScoredNGram, Segment,
};
pub use scorer::{Fallback, MockScorer, TokenScorer, SCRIPT_TOP_LOGIT};
pub use vocab::{Special, TokenId, Vocab};

#[derive(Debug, Error)]
pub enum LmError {
    #[error("scorer returned a NaN logit for token {token:?}")]
    NonFiniteLogit { token: String },
    #[error("scorer returned {got} logits for a vocabulary of {expected}")]
    LogitLength { expected: usize, got: usize },
    #[error("every allowed token was vetoed")]
    DeadEnd,
    #[error("no beam survived while aligning keyword {keyword:?}")]
    AllBeamsDead { keyword: String },
    #[error("constraint set is empty")]
    EmptyAllowed,
    #[error("scorer backend failed: {0}")]
    Backend(String),
}
