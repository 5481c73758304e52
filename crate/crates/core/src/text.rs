//! Token normalization shared by the N-gram index, BM25, the hashed embedder
//! and the decoder vocabulary.
//!
//! A token is a whitespace-separated word, lowercased, with leading and
//! trailing punctuation removed. Words that are pure punctuation vanish.

use std::collections::BTreeSet;

/// Normalize a single raw word. Returns `None` when nothing is left.
pub fn normalize_word(word: &str) -> Option<String> {
    let trimmed = word.trim_matches(|c: char| !c.is_alphanumeric());
    if trimmed.is_empty() {
        None
    } else {
        Some(trimmed.to_lowercase())
    }
}

/// Split `text` into normalized tokens, preserving order and duplicates.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().filter_map(normalize_word).collect()
}

/// Distinct normalized tokens of `text`.
pub fn token_set(text: &str) -> BTreeSet<String> {
    text.split_whitespace().filter_map(normalize_word).collect()
}

/// Re-join tokens into the canonical normalized text.
pub fn normalized_text(text: &str) -> String {
    tokenize(text).join(" ")
}

/// |A ∩ B| / min(|A|, |B|); zero when either side is empty.
pub fn overlap_coefficient(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let smaller = a.len().min(b.len());
    if smaller == 0 {
        return 0.0;
    }
    let shared = if a.len() <= b.len() {
        a.iter().filter(|t| b.contains(*t)).count()
    } else {
        b.iter().filter(|t| a.contains(*t)).count()
    };
    shared as f64 / smaller as f64
}

/// |A ∩ B| / |A ∪ B|; zero when both sides are empty.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let shared = a.intersection(b).count();
    let union = a.len() + b.len() - shared;
    if union == 0 {
        0.0
    } else {
        shared as f64 / union as f64
    }
}
