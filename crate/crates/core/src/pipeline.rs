//! The full retrieval pipeline for one question: keywords, N-gram alignment
//! and base sets per beam, expansion and drafts, verification of each draft,
//! and aggregation. All of it runs as a single continuous decode.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bm25::Bm25Params;
use crate::embedding::{all_object_similarities, EmbedError, EmbeddingProvider, VectorStore};
use crate::index::Index;
use crate::info_align::{
    extract_keywords, fuse, lexical_component, BaseSet, DEFAULT_ALPHA, DEFAULT_BASE_SIZE, DEFAULT_MAX_KEYWORDS,
};
use crate::lm::{decode_ngram_segment, LmError, NGramList, Special, TokenId, TokenScorer, Vocab};
use crate::prompts::{render, Prompts};
use crate::struct_align::{
    expand_base, solve_mip, CompatError, CompatMatrix, Draft, MipError, MipInstance, Strategy, DEFAULT_COMPAT_WEIGHT,
    DEFAULT_STRATEGIES,
};
use crate::trace::{AlignmentTrace, DraftTrace, KeywordListTrace, QuestionTrace};
use crate::verify_agg::{
    aggregate, finalize, serialize_draft, verify_select, BeamSelection, ConfidenceTable, DEFAULT_FINAL_K,
    DEFAULT_LAMBDA,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Compat(#[from] CompatError),
    #[error(transparent)]
    Mip(#[from] MipError),
    #[error("empty question")]
    EmptyQuestion,
}

/// Tunables of the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmParams {
    pub alpha: f64,
    pub compat_weight: f64,
    pub lambda: f64,
    pub base_size: usize,
    pub mip_k: usize,
    pub final_k: usize,
    pub beam_width: usize,
    pub max_ngrams: usize,
    pub max_keywords: usize,
    pub strategies: Vec<Strategy>,
}

impl Default for ArmParams {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            compat_weight: DEFAULT_COMPAT_WEIGHT,
            lambda: DEFAULT_LAMBDA,
            base_size: DEFAULT_BASE_SIZE,
            mip_k: 5,
            final_k: DEFAULT_FINAL_K,
            beam_width: 3,
            max_ngrams: 3,
            max_keywords: DEFAULT_MAX_KEYWORDS,
            strategies: DEFAULT_STRATEGIES.to_vec(),
        }
    }
}

/// Rankings after each stage, for ablations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutputs {
    /// Top of the best beam's base set.
    pub alignment_only: Vec<String>,
    /// Vote over drafts in which every draft object counts equally.
    pub with_structure: Vec<String>,
    /// Vote over verified selections.
    pub full: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ArmOutcome {
    pub final_ids: Vec<String>,
    pub confidences: ConfidenceTable,
    pub stages: StageOutputs,
    pub drafts: Vec<Draft>,
    pub selections: Vec<BeamSelection>,
    pub llm_calls: usize,
    pub trace: QuestionTrace,
}

/// Everything that stays fixed across questions: the index, chunk vectors,
/// the embedding provider, and the decoder vocabulary seeded with every
/// indexed token and object id.
pub struct Engine<'a> {
    pub index: &'a Index,
    pub store: &'a VectorStore,
    pub compat: CompatMatrix<'a>,
    pub params: ArmParams,
    pub bm25: Bm25Params,
    pub prompts: Prompts,
    vocab: Vocab,
}

struct AlignBeam {
    tail: Vec<TokenId>,
    lists: Vec<Option<NGramList>>,
    score: f64,
}

impl<'a> Engine<'a> {
    pub fn new(
        index: &'a Index,
        store: &'a VectorStore,
        provider: &'a dyn EmbeddingProvider,
        params: ArmParams,
        bm25: Bm25Params,
        prompts: Prompts,
    ) -> Self {
        let mut vocab = Vocab::new();
        for t in index.trie.tokens() {
            vocab.intern(t);
        }
        for o in index.corpus.objects() {
            vocab.encode_literal(&o.id);
        }
        Self {
            index,
            store,
            compat: CompatMatrix::new(&index.corpus, provider, params.compat_weight),
            params,
            bm25,
            prompts,
            vocab,
        }
    }

    /// A fresh copy of the seeded vocabulary.
    pub fn vocab(&self) -> Vocab {
        self.vocab.clone()
    }

    pub fn question_vector(&self, question: &str) -> Result<Vec<f64>, EmbedError> {
        Ok(self.compat.embedder().get(question)?.as_ref().clone())
    }

    /// Decode N-gram lists keyword by keyword, keeping the best
    /// `beam_width` partial hypotheses by summed list score.
    fn align(
        &self,
        scorer: &mut dyn TokenScorer,
        vocab: &mut Vocab,
        context: &[TokenId],
        keywords: &[String],
    ) -> Result<Vec<AlignBeam>, LmError> {
        let p = &self.params;
        let mut beams = vec![AlignBeam {
            tail: Vec::new(),
            lists: Vec::new(),
            score: 0.0,
        }];
        for kw in keywords {
            let kw_tokens = vocab.encode_text(kw);
            let mut next = Vec::new();
            for beam in &beams {
                let mut ctx = context.to_vec();
                ctx.extend(&beam.tail);
                ctx.extend(&kw_tokens);
                let decoded = decode_ngram_segment(scorer, vocab, &self.index.trie, &ctx, p.beam_width, p.max_ngrams)?;
                if decoded.is_empty() {
                    let mut tail = beam.tail.clone();
                    tail.extend(&kw_tokens);
                    tail.extend([Special::Open.id(), Special::Close.id(), Special::KeywordSep.id()]);
                    let mut lists = beam.lists.clone();
                    lists.push(None);
                    next.push(AlignBeam {
                        tail,
                        lists,
                        score: beam.score,
                    });
                }
                for d in decoded {
                    let mut tail = beam.tail.clone();
                    tail.extend(&kw_tokens);
                    tail.extend(&d.tokens);
                    tail.push(Special::KeywordSep.id());
                    let list = d.ngram_list().cloned().expect("segment beams carry a list");
                    let mut lists = beam.lists.clone();
                    let score = beam.score + list.score;
                    lists.push(Some(list));
                    next.push(AlignBeam { tail, lists, score });
                }
            }
            next.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.tail.cmp(&b.tail)));
            next.truncate(p.beam_width);
            beams = next;
        }
        Ok(beams)
    }

    fn draft_for(&self, members: &[usize], similarity: &[f64]) -> Result<Draft, PipelineError> {
        let corpus = &self.index.corpus;
        let m = members.len();
        let mut compat = vec![vec![0.0; m]; m];
        for x in 0..m {
            for y in x + 1..m {
                let c = self.compat.score(members[x], members[y])?;
                compat[x][y] = c;
                compat[y][x] = c;
            }
        }
        let inst = MipInstance {
            ids: members.iter().map(|&i| corpus.object(i).id.clone()).collect(),
            relevance: members.iter().map(|&i| similarity[i].clamp(0.0, 1.0)).collect(),
            compat,
            k: self.params.mip_k.min(m),
        };
        let mut draft = solve_mip(&inst)?;
        for link in &mut draft.links {
            let (a, b) = (corpus.index_of(&link.a), corpus.index_of(&link.b));
            if let (Some(a), Some(b)) = (a, b) {
                link.connection = self.compat.connection(a, b)?;
            }
        }
        Ok(draft)
    }

    /// Run the pipeline for one question with a dedicated scorer.
    pub fn run(
        &self,
        scorer: &mut dyn TokenScorer,
        question_id: &str,
        question: &str,
    ) -> Result<ArmOutcome, PipelineError> {
        let p = &self.params;
        let corpus = &self.index.corpus;
        let mut vocab = self.vocab();
        if vocab.encode_text(question).is_empty() {
            return Err(PipelineError::EmptyQuestion);
        }
        let qvec = self.question_vector(question)?;
        let similarity = all_object_similarities(self.store, corpus, &qvec)?;

        let mut ctx = vocab.encode_lines(&render(&self.prompts.keywords, &[("user_question", question)]));
        let kw = extract_keywords(scorer, &mut vocab, &ctx, question, p.max_keywords)?;
        ctx.extend(&kw.emitted);
        ctx.push(Special::Newline.id());
        ctx.extend(vocab.encode_lines(&self.prompts.align));
        ctx.push(Special::Newline.id());

        let beams = self.align(scorer, &mut vocab, &ctx, &kw.keywords)?;

        let mut alignments = Vec::new();
        let mut base_sets = Vec::new();
        let mut draft_traces = Vec::new();
        let mut drafts = Vec::new();
        let mut selections = Vec::new();
        let mut structure_votes = Vec::new();

        for (b, beam) in beams.iter().enumerate() {
            alignments.push(AlignmentTrace {
                score: beam.score,
                lists: kw
                    .keywords
                    .iter()
                    .zip(&beam.lists)
                    .map(|(k, l)| KeywordListTrace {
                        keyword: k.clone(),
                        ngrams: l.as_ref().map(|l| l.ngrams.clone()).unwrap_or_default(),
                        score: l.as_ref().map(|l| l.score),
                    })
                    .collect(),
            });
            let queries: Vec<Vec<String>> = beam.lists.iter().flatten().map(NGramList::query_terms).collect();
            let lexical = lexical_component(corpus, &self.index.bm25, self.bm25, &queries);
            let base = fuse(corpus, &lexical, &similarity, p.alpha, p.base_size);
            let sets = expand_base(&base.indices(), &self.compat, &p.strategies)?;
            base_sets.push(base);

            let relevance: BTreeMap<String, f64> = (0..corpus.len())
                .map(|i| (corpus.object(i).id.clone(), similarity[i].clamp(0.0, 1.0)))
                .collect();
            for set in sets.into_iter().filter(|s| !s.members.is_empty()) {
                let draft = self.draft_for(&set.members, &similarity)?;
                let sdraft = serialize_draft(&draft, &relevance, &qvec, self.compat.embedder(), corpus)?;
                let mut vctx = ctx.clone();
                vctx.extend(&beam.tail);
                vctx.push(Special::Newline.id());
                let (before, after) = self.prompts.verify.split_once("{draft}").unwrap_or((&self.prompts.verify, ""));
                vctx.extend(vocab.encode_lines(before));
                vctx.extend(sdraft.tokens(&mut vocab));
                vctx.extend(vocab.encode_lines(after));
                let beam_id = selections.len();
                let (sel, _) = verify_select(scorer, &mut vocab, &vctx, &sdraft.object_ids, beam_id)?;
                structure_votes.push(BeamSelection {
                    beam: beam_id,
                    object_ids: draft.objects.clone(),
                    weights: vec![1.0; draft.objects.len()],
                });
                draft_traces.push(DraftTrace {
                    beam: b,
                    strategy: set.strategy,
                    search_set: set.members.iter().map(|&i| corpus.object(i).id.clone()).collect(),
                    draft: draft.clone(),
                    rendering: sdraft.text,
                });
                drafts.push(draft);
                selections.push(sel);
            }
        }

        let confidences = aggregate(&selections, p.lambda);
        let final_ids = finalize(&confidences, p.final_k);
        let stages = StageOutputs {
            alignment_only: base_sets
                .first()
                .map(|b: &BaseSet| b.ids().into_iter().take(p.final_k).map(String::from).collect())
                .unwrap_or_default(),
            with_structure: finalize(&aggregate(&structure_votes, p.lambda), p.final_k),
            full: final_ids.clone(),
        };
        let trace = QuestionTrace::new(
            question_id,
            question,
            kw.keywords.clone(),
            kw.fallback,
            alignments,
            base_sets,
            draft_traces,
            selections.clone(),
            confidences.clone(),
            final_ids.clone(),
            1,
        );
        Ok(ArmOutcome {
            final_ids,
            confidences,
            stages,
            drafts,
            selections,
            llm_calls: 1,
            trace,
        })
    }
}
