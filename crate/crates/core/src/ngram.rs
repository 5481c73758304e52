//! 1- to 3-gram extraction and the token trie that drives constrained
//! decoding.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::text::tokenize;

pub const MAX_N: usize = 3;

/// A run of 1 to 3 normalized tokens.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NGram(Vec<String>);

impl NGram {
    /// Panics if `tokens` is empty, longer than [`MAX_N`], or contains an
    /// empty token.
    pub fn new(tokens: Vec<String>) -> Self {
        assert!(
            (1..=MAX_N).contains(&tokens.len()),
            "n-gram length {} out of range",
            tokens.len()
        );
        assert!(tokens.iter().all(|t| !t.is_empty()), "empty token in n-gram");
        Self(tokens)
    }

    pub fn from_text(text: &str) -> Self {
        Self::new(tokenize(text))
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for NGram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

/// Every contiguous window of 1..=3 normalized tokens, deduplicated.
pub fn extract_ngrams(text: &str) -> BTreeSet<NGram> {
    let tokens = tokenize(text);
    let mut out = BTreeSet::new();
    for start in 0..tokens.len() {
        for n in 1..=MAX_N.min(tokens.len() - start) {
            out.insert(NGram(tokens[start..start + n].to_vec()));
        }
    }
    out
}

pub type NodeId = usize;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
struct TrieNode {
    children: BTreeMap<String, NodeId>,
    terminal: bool,
}

/// Token-level prefix tree over every indexed N-gram.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NGramTrie {
    nodes: Vec<TrieNode>,
    len: usize,
}

/// Result of [`NGramTrie::valid_continuations`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Continuations<'a> {
    pub next: Vec<&'a str>,
    pub can_terminate: bool,
}

impl Default for NGramTrie {
    fn default() -> Self {
        Self {
            nodes: vec![TrieNode::default()],
            len: 0,
        }
    }
}

impl NGramTrie {
    pub const ROOT: NodeId = 0;

    pub fn build<'a>(ngrams: impl IntoIterator<Item = &'a NGram>) -> Self {
        let mut trie = Self::default();
        for g in ngrams {
            trie.insert(g);
        }
        trie
    }

    pub fn insert(&mut self, ngram: &NGram) {
        let mut node = Self::ROOT;
        for tok in ngram.tokens() {
            node = match self.nodes[node].children.get(tok) {
                Some(&child) => child,
                None => {
                    let child = self.nodes.len();
                    self.nodes.push(TrieNode::default());
                    self.nodes[node].children.insert(tok.clone(), child);
                    child
                }
            };
        }
        if !self.nodes[node].terminal {
            self.nodes[node].terminal = true;
            self.len += 1;
        }
    }

    /// Number of distinct N-grams stored.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn child(&self, node: NodeId, token: &str) -> Option<NodeId> {
        self.nodes[node].children.get(token).copied()
    }

    pub fn children(&self, node: NodeId) -> impl Iterator<Item = (&str, NodeId)> {
        self.nodes[node].children.iter().map(|(t, &n)| (t.as_str(), n))
    }

    pub fn is_terminal(&self, node: NodeId) -> bool {
        self.nodes[node].terminal
    }

    /// Node reached by following `prefix` from the root.
    pub fn walk<S: AsRef<str>>(&self, prefix: &[S]) -> Option<NodeId> {
        prefix
            .iter()
            .try_fold(Self::ROOT, |node, tok| self.child(node, tok.as_ref()))
    }

    pub fn contains(&self, ngram: &NGram) -> bool {
        self.walk(ngram.tokens())
            .is_some_and(|node| self.is_terminal(node))
    }

    /// Tokens that may follow `prefix`, and whether `prefix` itself is a
    /// complete indexed N-gram. An unknown prefix has no continuations.
    pub fn valid_continuations<S: AsRef<str>>(&self, prefix: &[S]) -> Continuations<'_> {
        match self.walk(prefix) {
            Some(node) => Continuations {
                next: self.children(node).map(|(t, _)| t).collect(),
                can_terminate: node != Self::ROOT && self.is_terminal(node),
            },
            None => Continuations {
                next: Vec::new(),
                can_terminate: false,
            },
        }
    }

    /// All distinct tokens appearing anywhere in the trie, sorted.
    pub fn tokens(&self) -> BTreeSet<&str> {
        self.nodes
            .iter()
            .flat_map(|n| n.children.keys().map(String::as_str))
            .collect()
    }

    /// Enumerate every stored N-gram in lexicographic token order.
    pub fn ngrams(&self) -> Vec<NGram> {
        let mut out = Vec::with_capacity(self.len);
        let mut path = Vec::new();
        self.collect(Self::ROOT, &mut path, &mut out);
        out
    }

    fn collect(&self, node: NodeId, path: &mut Vec<String>, out: &mut Vec<NGram>) {
        if node != Self::ROOT && self.nodes[node].terminal {
            out.push(NGram(path.clone()));
        }
        for (tok, &child) in &self.nodes[node].children {
            path.push(tok.clone());
            self.collect(child, path, out);
            path.pop();
        }
    }
}
