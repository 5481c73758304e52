//! Constrained decoders: N-gram list alignment (beam search over a token
//! trie), choice among fixed strings, keyword substrings of the question,
//! and plain greedy generation.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::scorer::TokenScorer;
use super::vocab::{Special, TokenId, Vocab};
use super::LmError;
use crate::ngram::{NGram, NGramTrie, NodeId};

/// Mean of the chosen-token logits of one N-gram.
pub fn ngram_score(logits: &[f64]) -> f64 {
    assert!(!logits.is_empty(), "n-gram has no tokens");
    logits.iter().sum::<f64>() / logits.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredNGram {
    pub ngram: NGram,
    pub score: f64,
}

/// One decoded `( g1, g2, ... )` segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NGramList {
    pub ngrams: Vec<ScoredNGram>,
    /// Mean chosen-token logit over everything emitted after the opening
    /// delimiter, separators and the closing delimiter included.
    pub score: f64,
}

impl NGramList {
    /// Tokens of every N-gram, concatenated, for use as a BM25 query.
    pub fn query_terms(&self) -> Vec<String> {
        self.ngrams
            .iter()
            .flat_map(|g| g.ngram.tokens().iter().cloned())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Segment {
    NGrams(NGramList),
    Selection { object_ids: Vec<String>, weights: Vec<f64> },
}

/// A decoding hypothesis: generated tokens, the logit of each chosen token,
/// and the structured segments decoded so far.
#[derive(Debug, Clone, PartialEq)]
pub struct Beam {
    pub tokens: Vec<TokenId>,
    pub logits: Vec<f64>,
    pub segments: Vec<Segment>,
}

impl Beam {
    pub fn ngram_list(&self) -> Option<&NGramList> {
        self.segments.iter().find_map(|s| match s {
            Segment::NGrams(l) => Some(l),
            _ => None,
        })
    }
}

fn checked<'a>(vocab: &Vocab, logits: &'a [f64]) -> Result<&'a [f64], LmError> {
    if logits.len() != vocab.len() {
        return Err(LmError::LogitLength {
            expected: vocab.len(),
            got: logits.len(),
        });
    }
    if let Some(i) = logits.iter().position(|x| x.is_nan()) {
        return Err(LmError::NonFiniteLogit {
            token: vocab.display(i as TokenId).to_string(),
        });
    }
    Ok(logits)
}

/// Highest-logit allowed token; vetoed (`-inf`) tokens are skipped and ties
/// go to the lowest id.
fn pick(logits: &[f64], allowed: impl IntoIterator<Item = TokenId>) -> Option<(TokenId, f64)> {
    allowed
        .into_iter()
        .filter(|&id| logits[id as usize] > f64::NEG_INFINITY)
        .map(|id| (id, logits[id as usize]))
        .min_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)))
}

/// Allowed tokens ordered best first, vetoed ones removed.
fn ranked(logits: &[f64], allowed: &[TokenId]) -> Vec<(TokenId, f64)> {
    let mut out: Vec<(TokenId, f64)> = allowed
        .iter()
        .filter(|&&id| logits[id as usize] > f64::NEG_INFINITY)
        .map(|&id| (id, logits[id as usize]))
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    out
}

#[derive(Debug, Clone)]
struct Hyp {
    tokens: Vec<TokenId>,
    logits: Vec<f64>,
    node: NodeId,
    current: Range<usize>,
    ngrams: Vec<Range<usize>>,
    sum: f64,
    count: usize,
    closed: bool,
}

impl Hyp {
    fn score(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }

    fn push(&mut self, id: TokenId, logit: f64) {
        self.tokens.push(id);
        self.logits.push(logit);
        self.sum += logit;
        self.count += 1;
    }

    /// Whether extending the current N-gram with `id` (landing on `node`)
    /// can still complete an N-gram that is not already in the list.
    fn leads_to_fresh(&self, vocab: &Vocab, trie: &NGramTrie, id: TokenId, node: NodeId) -> bool {
        let mut path = self.tokens[self.current.clone()].to_vec();
        path.push(id);
        let listed: Vec<&[TokenId]> = self
            .ngrams
            .iter()
            .map(|r| &self.tokens[r.clone()])
            .filter(|g| g.starts_with(&path))
            .collect();
        // Every trie subtree holds a terminal, so only listed N-grams can block it.
        listed.is_empty() || fresh_below(vocab, trie, node, &mut path, &listed)
    }

    fn current_is_duplicate(&self) -> bool {
        let cur = &self.tokens[self.current.clone()];
        self.ngrams.iter().any(|r| &self.tokens[r.clone()] == cur)
    }
}

fn fresh_below(vocab: &Vocab, trie: &NGramTrie, node: NodeId, path: &mut Vec<TokenId>, listed: &[&[TokenId]]) -> bool {
    if trie.is_terminal(node) && !listed.contains(&path.as_slice()) {
        return true;
    }
    trie.children(node).any(|(tok, child)| {
        let Some(id) = vocab.lookup(tok) else {
            return false;
        };
        path.push(id);
        let ok = fresh_below(vocab, trie, child, path, listed);
        path.pop();
        ok
    })
}

fn by_score(a: &Hyp, b: &Hyp) -> Ordering {
    b.score().total_cmp(&a.score()).then_with(|| a.tokens.cmp(&b.tokens))
}

/// Keep the best `width` hypotheses; everything returned in the second
/// vector scores no higher than anything kept.
fn prune(mut cands: Vec<Hyp>, width: usize) -> (Vec<Hyp>, Vec<Hyp>) {
    cands.sort_by(by_score);
    let rest = cands.split_off(width.min(cands.len()));
    (cands, rest)
}

/// Decode one `( ... )` segment of N-gram lists with beam search.
///
/// The opening delimiter is forced. Inside the segment every token is a trie
/// continuation of the current N-gram, a list separator after a complete
/// (and not yet listed) N-gram, or the closing delimiter after one. Returns
/// up to `beam_width` closed beams, best first.
pub fn decode_ngram_segment(
    scorer: &mut dyn TokenScorer,
    vocab: &Vocab,
    trie: &NGramTrie,
    context: &[TokenId],
    beam_width: usize,
    max_ngrams: usize,
) -> Result<Vec<Beam>, LmError> {
    assert!(beam_width >= 1 && max_ngrams >= 1);
    let open = Special::Open.id();
    let mut ctx = context.to_vec();
    let logits = scorer.logits(vocab, &ctx)?;
    let open_logit = checked(vocab, &logits)?[open as usize];

    let start = Hyp {
        tokens: vec![open],
        logits: vec![open_logit],
        node: NGramTrie::ROOT,
        current: 1..1,
        ngrams: Vec::new(),
        sum: 0.0,
        count: 0,
        closed: false,
    };
    let mut live = vec![start];
    let mut finished: Vec<Hyp> = Vec::new();

    while !live.is_empty() {
        let mut cands = Vec::new();
        for hyp in &live {
            ctx.truncate(context.len());
            ctx.extend_from_slice(&hyp.tokens);
            let logits = scorer.logits(vocab, &ctx)?;
            let logits = checked(vocab, &logits)?;

            let mut allowed: Vec<TokenId> = trie
                .children(hyp.node)
                .filter_map(|(tok, child)| vocab.lookup(tok).map(|id| (id, child)))
                .filter(|&(id, child)| hyp.leads_to_fresh(vocab, trie, id, child))
                .map(|(id, _)| id)
                .collect();
            let complete = !hyp.current.is_empty()
                && trie.is_terminal(hyp.node)
                && !hyp.current_is_duplicate();
            if complete {
                if hyp.ngrams.len() + 1 < max_ngrams {
                    allowed.push(Special::ListSep.id());
                }
                allowed.push(Special::Close.id());
            }

            for (id, logit) in ranked(logits, &allowed).into_iter().take(beam_width) {
                let mut next = hyp.clone();
                next.push(id, logit);
                let end = next.tokens.len() - 1;
                if id == Special::ListSep.id() || id == Special::Close.id() {
                    next.ngrams.push(hyp.current.clone());
                    next.current = next.tokens.len()..next.tokens.len();
                    next.node = NGramTrie::ROOT;
                    next.closed = id == Special::Close.id();
                } else {
                    let tok = vocab.display(id);
                    next.node = trie.child(hyp.node, tok).expect("allowed token is a trie child");
                    next.current = if hyp.current.is_empty() { end..end + 1 } else { hyp.current.start..end + 1 };
                }
                cands.push(next);
            }
        }
        let (closed, open_cands): (Vec<Hyp>, Vec<Hyp>) = cands.into_iter().partition(|h| h.closed);
        finished.extend(closed);
        live = prune(open_cands, beam_width).0;
    }

    finished.sort_by(by_score);
    finished.truncate(beam_width);
    Ok(finished.into_iter().map(|h| hyp_to_beam(vocab, h)).collect())
}

fn hyp_to_beam(vocab: &Vocab, h: Hyp) -> Beam {
    let ngrams = h
        .ngrams
        .iter()
        .map(|r| ScoredNGram {
            ngram: NGram::new(h.tokens[r.clone()].iter().map(|&id| vocab.display(id).to_string()).collect()),
            score: ngram_score(&h.logits[r.clone()]),
        })
        .collect();
    let score = h.score();
    Beam {
        tokens: h.tokens,
        logits: h.logits,
        segments: vec![Segment::NGrams(NGramList { ngrams, score })],
    }
}

/// Result of choosing one option among fixed token sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct Choice {
    pub index: usize,
    pub tokens: Vec<TokenId>,
    /// Logits of the option's own tokens, in order.
    pub logits: Vec<f64>,
}

#[derive(Default)]
struct OptionNode {
    children: BTreeMap<TokenId, usize>,
    option: Option<usize>,
}

/// Greedy decode constrained to exactly one of `options`. When an option is
/// a strict prefix of another, the end token decides whether to stop there.
pub fn decode_choice(
    scorer: &mut dyn TokenScorer,
    vocab: &Vocab,
    context: &[TokenId],
    options: &[Vec<TokenId>],
) -> Result<Choice, LmError> {
    if options.is_empty() || options.iter().any(Vec::is_empty) {
        return Err(LmError::EmptyAllowed);
    }
    let mut nodes = vec![OptionNode::default()];
    for (i, opt) in options.iter().enumerate() {
        let mut n = 0;
        for &id in opt {
            n = match nodes[n].children.get(&id) {
                Some(&c) => c,
                None => {
                    nodes.push(OptionNode::default());
                    let c = nodes.len() - 1;
                    nodes[n].children.insert(id, c);
                    c
                }
            };
        }
        nodes[n].option.get_or_insert(i);
    }

    let mut ctx = context.to_vec();
    let mut node = 0;
    let mut tokens = Vec::new();
    let mut chosen_logits = Vec::new();
    loop {
        let here = &nodes[node];
        if let (Some(opt), true) = (here.option, here.children.is_empty()) {
            return Ok(Choice { index: opt, tokens, logits: chosen_logits });
        }
        let logits = scorer.logits(vocab, &ctx)?;
        let logits = checked(vocab, &logits)?;
        let mut allowed: Vec<TokenId> = here.children.keys().copied().collect();
        if here.option.is_some() {
            allowed.push(Special::End.id());
        }
        let (id, logit) = pick(logits, allowed).ok_or(LmError::DeadEnd)?;
        if id == Special::End.id() {
            return Ok(Choice {
                index: here.option.expect("end only offered at a complete option"),
                tokens,
                logits: chosen_logits,
            });
        }
        tokens.push(id);
        chosen_logits.push(logit);
        ctx.push(id);
        node = here.children[&id];
    }
}

/// Keywords decoded as contiguous, non-overlapping, in-order spans of the
/// question tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct KeywordSpans {
    pub spans: Vec<Range<usize>>,
    pub tokens: Vec<TokenId>,
}

/// Greedy keyword extraction. Allowed moves: extend the current keyword with
/// the next question token, close it with the keyword separator, start a new
/// keyword at any later position, or end.
pub fn decode_keywords(
    scorer: &mut dyn TokenScorer,
    vocab: &Vocab,
    context: &[TokenId],
    question: &[TokenId],
    max_keywords: usize,
) -> Result<KeywordSpans, LmError> {
    let n = question.len();
    let mut ctx = context.to_vec();
    let mut emitted = Vec::new();
    let mut spans: Vec<Range<usize>> = Vec::new();
    let mut last_end = 0usize;
    // Current keyword: its length and every question end position it matches.
    let mut current: Option<(usize, Vec<usize>)> = None;

    let commit = |current: &mut Option<(usize, Vec<usize>)>, spans: &mut Vec<Range<usize>>, last_end: &mut usize| {
        if let Some((len, ends)) = current.take() {
            let end = *ends.iter().min().expect("live keyword has a match");
            spans.push(end - len..end);
            *last_end = end;
        }
    };

    loop {
        if spans.len() >= max_keywords {
            break;
        }
        let mut allowed: Vec<TokenId> = match &current {
            None => question[last_end.min(n)..].to_vec(),
            Some((_, ends)) => ends.iter().filter(|&&e| e < n).map(|&e| question[e]).collect(),
        };
        if current.is_some() {
            allowed.push(Special::KeywordSep.id());
        }
        allowed.push(Special::End.id());
        allowed.sort_unstable();
        allowed.dedup();

        let logits = scorer.logits(vocab, &ctx)?;
        let logits = checked(vocab, &logits)?;
        let Some((id, _)) = pick(logits, allowed) else {
            break;
        };
        ctx.push(id);
        emitted.push(id);
        if id == Special::End.id() {
            break;
        }
        if id == Special::KeywordSep.id() {
            commit(&mut current, &mut spans, &mut last_end);
            continue;
        }
        current = Some(match current.take() {
            None => (
                1,
                (last_end..n).filter(|&j| question[j] == id).map(|j| j + 1).collect(),
            ),
            Some((len, ends)) => (
                len + 1,
                ends.into_iter().filter(|&e| e < n && question[e] == id).map(|e| e + 1).collect(),
            ),
        });
    }
    commit(&mut current, &mut spans, &mut last_end);
    spans.truncate(max_keywords);
    Ok(KeywordSpans { spans, tokens: emitted })
}

/// Unconstrained greedy generation until a token in `stops` (not included)
/// or `max_tokens`. Returns the generated tokens and the stop token hit.
pub fn decode_free(
    scorer: &mut dyn TokenScorer,
    vocab: &Vocab,
    context: &[TokenId],
    stops: &[TokenId],
    max_tokens: usize,
) -> Result<(Vec<TokenId>, Option<TokenId>), LmError> {
    let mut ctx = context.to_vec();
    let mut out = Vec::new();
    for _ in 0..max_tokens {
        let logits = scorer.logits(vocab, &ctx)?;
        let logits = checked(vocab, &logits)?;
        let Some((id, _)) = pick(logits, 0..vocab.len() as TokenId) else {
            return Err(LmError::DeadEnd);
        };
        if stops.contains(&id) {
            return Ok((out, Some(id)));
        }
        out.push(id);
        ctx.push(id);
    }
    Ok((out, None))
}
