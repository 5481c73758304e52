//! Retrieval over mixed tables and passages by aligning question keywords to
//! corpus N-grams, solving a relevance/compatibility selection problem, and
//! letting a language model verify the candidate drafts.

pub mod baselines;
pub mod bm25;
pub mod config;
pub mod corpus;
pub mod embedding;
pub mod eval;
pub mod index;
pub mod info_align;
pub mod lm;
pub mod ngram;
pub mod pipeline;
pub mod prompts;
pub mod struct_align;
pub mod synth;
pub mod text;
pub mod trace;
pub mod verify_agg;
