//! Information alignment: question keywords, their rephrasing into indexed
//! N-grams, and the fused lexical/semantic base set.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::bm25::{Bm25Index, Bm25Params};
use crate::corpus::Corpus;
use crate::embedding::{all_object_similarities, EmbedError, VectorStore};
use crate::lm::{decode_keywords, decode_ngram_segment, LmError, NGramList, TokenId, TokenScorer, Vocab};
use crate::ngram::NGramTrie;
use crate::text::normalized_text;

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_BASE_SIZE: usize = 10;
pub const DEFAULT_MAX_KEYWORDS: usize = 8;

/// Decoded keywords plus the tokens emitted while decoding them (keyword
/// separators and the end token included), for continuing the context.
#[derive(Debug, Clone, PartialEq)]
pub struct Keywords {
    pub keywords: Vec<String>,
    pub emitted: Vec<TokenId>,
    /// True when nothing was decoded and the whole question stands in.
    pub fallback: bool,
}

/// Extract keywords as contiguous, non-overlapping, in-order spans of the
/// normalized question. If the scorer yields none, the whole normalized
/// question becomes the single keyword.
pub fn extract_keywords(
    scorer: &mut dyn TokenScorer,
    vocab: &mut Vocab,
    context: &[TokenId],
    question: &str,
    max_keywords: usize,
) -> Result<Keywords, LmError> {
    let q = vocab.encode_text(question);
    if q.is_empty() {
        return Err(LmError::EmptyAllowed);
    }
    let spans = decode_keywords(scorer, vocab, context, &q, max_keywords)?;
    let render = |ids: &[TokenId]| ids.iter().map(|&id| vocab.display(id)).collect::<Vec<_>>().join(" ");
    if spans.spans.is_empty() {
        return Ok(Keywords {
            keywords: vec![render(&q)],
            emitted: spans.tokens,
            fallback: true,
        });
    }
    Ok(Keywords {
        keywords: spans.spans.iter().map(|r| render(&q[r.clone()])).collect(),
        emitted: spans.tokens,
        fallback: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordAlignment {
    pub keyword: String,
    /// One list per surviving beam, best first; N-grams inside a list are
    /// ordered by score, best first.
    pub ngram_lists: Vec<NGramList>,
}

/// Rephrase one keyword into indexed N-grams. The keyword tokens are
/// appended to `context` before the constrained segment. If every beam dies
/// the alignment is empty and the keyword contributes only semantically.
pub fn align_keyword(
    scorer: &mut dyn TokenScorer,
    vocab: &mut Vocab,
    trie: &NGramTrie,
    context: &[TokenId],
    keyword: &str,
    beam_width: usize,
    max_ngrams: usize,
) -> Result<KeywordAlignment, LmError> {
    let mut ctx = context.to_vec();
    ctx.extend(vocab.encode_text(keyword));
    let beams = decode_ngram_segment(scorer, vocab, trie, &ctx, beam_width, max_ngrams)?;
    let ngram_lists = beams
        .iter()
        .filter_map(|b| b.ngram_list().cloned())
        .map(|mut l| {
            l.ngrams.sort_by(|a, b| b.score.total_cmp(&a.score));
            l
        })
        .collect();
    Ok(KeywordAlignment {
        keyword: normalized_text(keyword),
        ngram_lists,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseEntry {
    pub object_id: String,
    #[serde(skip)]
    pub index: usize,
    pub fused: f64,
    pub bm25: f64,
    pub embed: f64,
    /// Unclamped object similarity, used to break ties.
    #[serde(skip)]
    pub raw_similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BaseSet {
    pub entries: Vec<BaseEntry>,
}

impl BaseSet {
    pub fn indices(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.index).collect()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.object_id.as_str()).collect()
    }
}

/// Per-object BM25 component: each query scores chunks, an object keeps its
/// best chunk score over all queries, and the result is min-max normalized
/// over the objects that were hit. Objects never hit get 0; if every hit
/// object has the same score they all get 1.
pub fn lexical_component<S: AsRef<str>>(
    corpus: &Corpus,
    bm25: &Bm25Index,
    params: Bm25Params,
    queries: &[Vec<S>],
) -> Vec<f64> {
    let mut best: HashMap<usize, f64> = HashMap::new();
    for q in queries {
        for (chunk, score) in bm25.score_all(params, q) {
            let obj = corpus.chunks()[chunk].object_index;
            let e = best.entry(obj).or_insert(f64::NEG_INFINITY);
            *e = e.max(score);
        }
    }
    let mut out = vec![0.0; corpus.len()];
    if best.is_empty() {
        return out;
    }
    let lo = best.values().copied().fold(f64::INFINITY, f64::min);
    let hi = best.values().copied().fold(f64::NEG_INFINITY, f64::max);
    for (&obj, &s) in &best {
        out[obj] = if hi > lo { (s - lo) / (hi - lo) } else { 1.0 };
    }
    out
}

/// Rank objects by `alpha · bm25 + (1 − alpha) · embed` given precomputed
/// per-object components. Ties fall to the higher raw similarity, then the
/// smaller id.
pub fn fuse(corpus: &Corpus, lexical: &[f64], similarity: &[f64], alpha: f64, base_size: usize) -> BaseSet {
    let mut entries: Vec<BaseEntry> = (0..corpus.len())
        .map(|i| {
            let embed = similarity[i].clamp(0.0, 1.0);
            BaseEntry {
                object_id: corpus.object(i).id.clone(),
                index: i,
                fused: alpha * lexical[i] + (1.0 - alpha) * embed,
                bm25: lexical[i],
                embed,
                raw_similarity: similarity[i],
            }
        })
        .collect();
    entries.sort_by(|a, b| {
        b.fused
            .total_cmp(&a.fused)
            .then(b.raw_similarity.total_cmp(&a.raw_similarity))
            .then_with(|| a.object_id.cmp(&b.object_id))
    });
    entries.truncate(base_size);
    BaseSet { entries }
}

/// Base set for one beam: one BM25 query per decoded N-gram list.
#[allow(clippy::too_many_arguments)]
pub fn retrieve_base(
    corpus: &Corpus,
    bm25: &Bm25Index,
    params: Bm25Params,
    store: &VectorStore,
    question_vec: &[f64],
    lists: &[&NGramList],
    alpha: f64,
    base_size: usize,
) -> Result<BaseSet, EmbedError> {
    let queries: Vec<Vec<String>> = lists
        .iter()
        .map(|l| l.query_terms())
        .filter(|q| !q.is_empty())
        .collect();
    let lexical = lexical_component(corpus, bm25, params, &queries);
    let similarity = all_object_similarities(store, corpus, question_vec)?;
    Ok(fuse(corpus, &lexical, &similarity, alpha, base_size))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DataObject;
    use crate::lm::MockScorer;
    use crate::ngram::NGram;

    fn corpus(n: usize) -> Corpus {
        let objs = (0..n)
            .map(|i| DataObject::passage(format!("o{i}"), format!("T{i}"), vec![format!("s{i}")]))
            .collect();
        Corpus::new(objs, 20).unwrap()
    }

    #[test]
    fn scripted_keywords() {
        let mut v = Vocab::new();
        let ctx = v.encode_text("keywords");
        let mut m = MockScorer::uniform().script(
            &["keywords"],
            &["highest", "eligible", "free", "rate", "|", "california", "</s>"],
        );
        let k = extract_keywords(&mut m, &mut v, &ctx, "highest eligible free rate in California", 8).unwrap();
        assert_eq!(k.keywords, vec!["highest eligible free rate", "california"]);
        assert!(!k.fallback);
    }

    #[test]
    fn single_word_falls_back() {
        let mut v = Vocab::new();
        let k = extract_keywords(&mut MockScorer::uniform(), &mut v, &[], "Paris", 8).unwrap();
        assert_eq!(k.keywords, vec!["paris"]);
        assert!(k.fallback);
    }

    #[test]
    fn alumni_alignment() {
        let grams: Vec<NGram> = ["alumni", "former", "university"].iter().map(|s| NGram::from_text(s)).collect();
        let trie = NGramTrie::build(&grams);
        let mut v = Vocab::new();
        for t in trie.tokens() {
            v.intern(t);
        }
        let mut m = MockScorer::uniform().script(
            &["alumni"],
            &["(", "alumni", ",", "former", ",", "university", ")"],
        );
        let a = align_keyword(&mut m, &mut v, &trie, &[], "alumni", 1, 3).unwrap();
        let got: Vec<String> = a.ngram_lists[0].ngrams.iter().map(|g| g.ngram.to_string()).collect();
        assert_eq!(got, vec!["alumni", "former", "university"]);
    }

    #[test]
    fn dead_scorer_gives_empty_alignment() {
        let trie = NGramTrie::build(&[NGram::from_text("x")]);
        let mut v = Vocab::new();
        v.intern("x");
        let a = align_keyword(&mut MockScorer::dead(), &mut v, &trie, &[], "zzz", 3, 3).unwrap();
        assert!(a.ngram_lists.is_empty());
    }

    #[test]
    fn fusion_by_hand() {
        let c = corpus(5);
        let lex = [1.0, 0.0, 0.5, 0.2, 0.0];
        let sim = [0.0, 0.9, 0.4, 0.6, -0.3];
        let b = fuse(&c, &lex, &sim, 0.5, 10);
        // fused: 0.5, 0.45, 0.45, 0.4, 0.0; o1 beats o2 on raw similarity.
        assert_eq!(b.ids(), vec!["o0", "o1", "o2", "o3", "o4"]);
        assert!((b.entries[2].fused - 0.45).abs() < 1e-12);
        assert_eq!(b.entries[4].embed, 0.0);
        assert_eq!(fuse(&c, &lex, &sim, 0.5, 2).entries.len(), 2);
    }

    #[test]
    fn alpha_extremes() {
        let c = corpus(3);
        let lex = [0.0, 1.0, 0.0];
        let sim = [0.9, 0.1, 0.5];
        assert_eq!(fuse(&c, &lex, &sim, 1.0, 3).ids()[0], "o1");
        assert_eq!(fuse(&c, &lex, &sim, 0.0, 3).ids(), vec!["o0", "o2", "o1"]);
    }

    #[test]
    fn lexical_normalization() {
        let c = corpus(3);
        let texts: Vec<&str> = c.chunks().iter().map(|ch| ch.text.as_str()).collect();
        let idx = Bm25Index::build(&texts);
        let lex = lexical_component(&c, &idx, Bm25Params::default(), &[vec!["s1"]]);
        assert_eq!(lex, vec![0.0, 1.0, 0.0]);
        let none = lexical_component::<&str>(&c, &idx, Bm25Params::default(), &[]);
        assert_eq!(none, vec![0.0; 3]);
    }
}
