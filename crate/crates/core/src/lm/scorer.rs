//! The token-scoring contract and a deterministic scripted implementation.

use std::collections::{HashMap, HashSet};
use std::hash::Hasher;

use fnv::FnvHasher;

use super::vocab::{Special, TokenId, Vocab};
use super::LmError;

/// Autoregressive scorer: given the full context, return one logit per
/// vocabulary entry. A logit of `-inf` vetoes the token; NaN is an error.
pub trait TokenScorer {
    fn logits(&mut self, vocab: &Vocab, context: &[TokenId]) -> Result<Vec<f64>, LmError>;
}

impl<T: TokenScorer + ?Sized> TokenScorer for Box<T> {
    fn logits(&mut self, vocab: &Vocab, context: &[TokenId]) -> Result<Vec<f64>, LmError> {
        (**self).logits(vocab, context)
    }
}

/// Logit given to the top scripted continuation; later ranks step down by 1.
pub const SCRIPT_TOP_LOGIT: f64 = 100.0;

/// What the mock does when no scripted rule matches the context.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fallback {
    /// Every token scores 0.
    Uniform,
    /// Pseudo-random logits in [-1, 1] keyed by (seed, last context tokens, candidate).
    Seeded(u64),
    /// Copy bias: ln(1 + occurrences of the token in the context). Specials score 0.
    Echo,
    /// Echo plus `weight · ln(1 + occurrences)` over the last `window`
    /// context tokens, so the tail of the context steers the choice.
    Focus { window: usize, weight: f64 },
    /// Every token is vetoed.
    Veto,
}

#[derive(Debug, Clone)]
struct Rule {
    suffix: Vec<String>,
    ranked: Vec<String>,
}

/// Deterministic scorer for offline runs. Rules map a context suffix (token
/// display strings) to a ranked list of preferred continuations; the longest
/// matching suffix wins, earlier rules win ties.
/// Boost for tokens that occur shortly before any of a set of cue tokens,
/// e.g. an object id followed by words of the question.
#[derive(Debug, Clone)]
struct Salience {
    cues: HashSet<String>,
    weight: f64,
    span: usize,
}

#[derive(Debug, Clone)]
pub struct MockScorer {
    rules: Vec<Rule>,
    fallback: Fallback,
    bias: HashMap<String, f64>,
    salience: Option<Salience>,
}

impl MockScorer {
    pub fn new(fallback: Fallback) -> Self {
        Self {
            rules: Vec::new(),
            fallback,
            bias: HashMap::new(),
            salience: None,
        }
    }

    pub fn uniform() -> Self {
        Self::new(Fallback::Uniform)
    }

    pub fn seeded(seed: u64) -> Self {
        Self::new(Fallback::Seeded(seed))
    }

    pub fn echo() -> Self {
        Self::new(Fallback::Echo)
    }

    /// A scorer that vetoes everything, for dead-end paths.
    pub fn dead() -> Self {
        Self::new(Fallback::Veto)
    }

    /// Preferred continuations after `suffix`.
    pub fn rule<S: AsRef<str>>(mut self, suffix: &[S], ranked: &[S]) -> Self {
        self.add_rule(suffix, ranked);
        self
    }

    pub fn add_rule<S: AsRef<str>>(&mut self, suffix: &[S], ranked: &[S]) {
        self.rules.push(Rule {
            suffix: suffix.iter().map(|s| s.as_ref().to_string()).collect(),
            ranked: ranked.iter().map(|s| s.as_ref().to_string()).collect(),
        });
    }

    /// Script an exact token sequence to be emitted after `prefix`.
    pub fn script<S: AsRef<str>>(mut self, prefix: &[S], sequence: &[S]) -> Self {
        self.add_script(prefix, sequence);
        self
    }

    pub fn add_script<S: AsRef<str>>(&mut self, prefix: &[S], sequence: &[S]) {
        let mut key: Vec<String> = prefix.iter().map(|s| s.as_ref().to_string()).collect();
        for tok in sequence {
            self.rules.push(Rule {
                suffix: key.clone(),
                ranked: vec![tok.as_ref().to_string()],
            });
            key.push(tok.as_ref().to_string());
        }
    }

    /// Additive bias on fallback logits for one token display string.
    pub fn with_bias(mut self, token: &str, bias: f64) -> Self {
        self.bias.insert(token.to_string(), bias);
        self
    }

    /// Add `weight · ln(1 + n)` to each token's fallback logit, where `n`
    /// counts its occurrences followed within `span` tokens of the same line
    /// by a cue, plus its lines shared with a topical token (see
    /// `salience_hits`).
    pub fn with_salience<S: AsRef<str>>(mut self, cues: &[S], weight: f64, span: usize) -> Self {
        self.salience = Some(Salience {
            cues: cues.iter().map(|c| c.as_ref().to_string()).collect(),
            weight,
            span,
        });
        self
    }

    fn matching_rule(&self, vocab: &Vocab, context: &[TokenId]) -> Option<&Rule> {
        let mut best: Option<&Rule> = None;
        for rule in &self.rules {
            let n = rule.suffix.len();
            if n > context.len() {
                continue;
            }
            let tail = &context[context.len() - n..];
            let hit = tail
                .iter()
                .zip(&rule.suffix)
                .all(|(&id, s)| vocab.display(id) == s);
            if hit && best.is_none_or(|b| n > b.suffix.len()) {
                best = Some(rule);
            }
        }
        best
    }

    fn fallback_logits(&self, vocab: &Vocab, context: &[TokenId]) -> Vec<f64> {
        let n = vocab.len();
        let mut out = match self.fallback {
            Fallback::Uniform => vec![0.0; n],
            Fallback::Veto => return vec![f64::NEG_INFINITY; n],
            Fallback::Seeded(seed) => {
                let mut base = FnvHasher::default();
                base.write(&seed.to_le_bytes());
                for &id in &context[context.len().saturating_sub(3)..] {
                    base.write(vocab.display(id).as_bytes());
                    base.write_u8(0xff);
                }
                let key = base.finish();
                (0..n)
                    .map(|id| {
                        let mut h = FnvHasher::default();
                        h.write(&key.to_le_bytes());
                        h.write(vocab.display(id as TokenId).as_bytes());
                        let bits = h.finish() >> 11;
                        (bits as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
                    })
                    .collect()
            }
            Fallback::Echo => copy_logits(n, context, &[], 0.0),
            Fallback::Focus { window, weight } => {
                copy_logits(n, context, &context[context.len().saturating_sub(window)..], weight)
            }
        };
        if let Some(sal) = &self.salience {
            for (id, h) in salience_hits(vocab, context, sal).into_iter().enumerate() {
                if h > 0 && !Vocab::is_special(id as TokenId) {
                    out[id] += sal.weight * (1.0 + h as f64).ln();
                }
            }
        }
        for (tok, b) in &self.bias {
            if let Some(id) = vocab.resolve(tok) {
                out[id as usize] += b;
            }
        }
        out
    }
}

/// Per-token salience hits: one for each occurrence followed within `span`
/// tokens of the same line by a cue, plus one for each line shared with a different topical
/// token. A token is topical when every line it starts contains a cue, as an
/// object id's single description line does when it mentions the question.
fn salience_hits(vocab: &Vocab, context: &[TokenId], sal: &Salience) -> Vec<u32> {
    let is_cue = |id: TokenId| sal.cues.contains(vocab.display(id));
    let lines: Vec<&[TokenId]> = context.split(|&id| id == Special::Newline.id()).collect();
    let mut hits = vec![0u32; vocab.len()];
    for line in &lines {
        for (i, &id) in line.iter().enumerate() {
            let end = (i + 1 + sal.span).min(line.len());
            if line[i + 1..end].iter().any(|&c| is_cue(c)) {
                if let Some(h) = hits.get_mut(id as usize) {
                    *h += 1;
                }
            }
        }
    }
    // Head token -> whether every line it starts holds a cue.
    let mut heads: HashMap<TokenId, bool> = HashMap::new();
    for line in &lines {
        if let Some((&head, rest)) = line.split_first() {
            let cued = rest.iter().any(|&c| is_cue(c));
            *heads.entry(head).or_insert(true) &= cued;
        }
    }
    let topical: HashSet<TokenId> = heads.into_iter().filter(|&(_, all)| all).map(|(t, _)| t).collect();
    for line in &lines {
        for &id in line.iter() {
            if line.iter().any(|&other| other != id && topical.contains(&other)) {
                if let Some(h) = hits.get_mut(id as usize) {
                    *h += 1;
                }
            }
        }
    }
    hits
}

fn counts(n: usize, tokens: &[TokenId]) -> Vec<u32> {
    let mut c = vec![0u32; n];
    for &id in tokens {
        if let Some(x) = c.get_mut(id as usize) {
            *x += 1;
        }
    }
    c
}

/// `ln(1 + count in context) + weight · ln(1 + count in recent)`; specials 0.
fn copy_logits(n: usize, context: &[TokenId], recent: &[TokenId], weight: f64) -> Vec<f64> {
    let all = counts(n, context);
    let near = counts(n, recent);
    (0..n)
        .map(|id| {
            if Vocab::is_special(id as TokenId) {
                0.0
            } else {
                (1.0 + all[id] as f64).ln() + weight * (1.0 + near[id] as f64).ln()
            }
        })
        .collect()
}

impl TokenScorer for MockScorer {
    fn logits(&mut self, vocab: &Vocab, context: &[TokenId]) -> Result<Vec<f64>, LmError> {
        let mut out = self.fallback_logits(vocab, context);
        if let Some(rule) = self.matching_rule(vocab, context) {
            for (rank, tok) in rule.ranked.iter().enumerate() {
                if let Some(id) = vocab.resolve(tok) {
                    out[id as usize] = SCRIPT_TOP_LOGIT - rank as f64;
                }
            }
        }
        Ok(out)
    }
}
