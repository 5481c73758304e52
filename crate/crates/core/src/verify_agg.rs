//! Self-verification and aggregation: drafts are rendered into the decoding
//! context, the scorer picks objects from each draft, and the picks across
//! beams are combined into confidences.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{object_header, Corpus, DataObject, FIELD_DELIMITER};
use crate::embedding::{cosine_or_zero, CachedEmbedder, EmbedError};
use crate::lm::{decode_choice, LmError, Special, TokenId, TokenScorer, Vocab};
use crate::struct_align::{Connection, ConnectionKind, Draft, Locator};

pub const DEFAULT_LAMBDA: f64 = 0.5;
pub const DEFAULT_FINAL_K: usize = 5;
/// Content units (rows or sentences) shown per object in a draft.
pub const DRAFT_UNITS: usize = 5;

/// A piece of draft text: object ids stay verbatim so the decoder can copy
/// them; everything else is ordinary text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DraftPart {
    Id(String),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerializedDraft {
    pub text: String,
    /// Object ids in rendering order.
    pub object_ids: Vec<String>,
    pub connections: Vec<String>,
    pub parts: Vec<DraftPart>,
}

impl SerializedDraft {
    /// Token form of the rendering for the decoding context.
    pub fn tokens(&self, vocab: &mut Vocab) -> Vec<TokenId> {
        let mut out = Vec::new();
        for part in &self.parts {
            match part {
                DraftPart::Id(id) => out.extend(vocab.encode_literal(id)),
                DraftPart::Text(t) if t == "\n" => out.push(Special::Newline.id()),
                DraftPart::Text(t) => out.extend(vocab.encode_text(t)),
            }
        }
        out
    }
}

/// Indices of the `k` most similar units, returned in their original order.
/// Equal similarities keep the earlier unit.
pub fn top_units(similarities: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..similarities.len()).collect();
    idx.sort_by(|&a, &b| similarities[b].total_cmp(&similarities[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

fn locator_text(obj: &DataObject, loc: Locator) -> String {
    match loc {
        Locator::Column(c) => obj.columns[c].clone(),
        Locator::Cell { row, column } => obj.rows[row][column].clone(),
        Locator::Sentence(s) => obj.sentences[s].clone(),
    }
}

/// Render one connection as draft parts.
pub fn connection_parts(corpus: &Corpus, conn: &Connection) -> Vec<DraftPart> {
    let (Some(a), Some(b)) = (corpus.get(&conn.a.object_id), corpus.get(&conn.b.object_id)) else {
        return Vec::new();
    };
    let (ta, tb) = (locator_text(a, conn.a.locator), locator_text(b, conn.b.locator));
    let prefix = if conn.kind == ConnectionKind::JoinColumn { "column " } else { "" };
    vec![
        DraftPart::Text(format!("{prefix}{ta} in ")),
        DraftPart::Id(a.id.clone()),
        DraftPart::Text(format!(" connects with {prefix}{tb} in ")),
        DraftPart::Id(b.id.clone()),
    ]
}

fn parts_text(parts: &[DraftPart]) -> String {
    parts
        .iter()
        .map(|p| match p {
            DraftPart::Id(s) | DraftPart::Text(s) => s.as_str(),
        })
        .collect()
}

/// Render a draft: each object as its header plus its most question-similar
/// rows or sentences, objects ordered by descending relevance then id,
/// followed by one line per connection.
pub fn serialize_draft(
    draft: &Draft,
    relevance: &BTreeMap<String, f64>,
    question_vec: &[f64],
    embedder: &CachedEmbedder,
    corpus: &Corpus,
) -> Result<SerializedDraft, EmbedError> {
    let mut ids: Vec<&String> = draft.objects.iter().collect();
    let rel = |id: &str| relevance.get(id).copied().unwrap_or(0.0);
    ids.sort_by(|a, b| rel(b).total_cmp(&rel(a)).then_with(|| a.cmp(b)));

    let mut parts = Vec::new();
    for id in &ids {
        let Some(obj) = corpus.get(id) else { continue };
        let sims = (0..obj.unit_count())
            .map(|u| cosine_or_zero(question_vec, &embedder.get(&obj.unit_text(u))?))
            .collect::<Result<Vec<f64>, EmbedError>>()?;
        let mut body = object_header(obj);
        for u in top_units(&sims, DRAFT_UNITS) {
            body.push_str(FIELD_DELIMITER);
            body.push_str(&obj.unit_text(u));
        }
        parts.push(DraftPart::Id((*id).clone()));
        parts.push(DraftPart::Text(format!(": {body}")));
        parts.push(DraftPart::Text("\n".into()));
    }
    let mut connections = Vec::new();
    for link in &draft.links {
        if let Some(conn) = &link.connection {
            let line = connection_parts(corpus, conn);
            connections.push(parts_text(&line));
            parts.extend(line);
            parts.push(DraftPart::Text("\n".into()));
        }
    }
    Ok(SerializedDraft {
        text: parts_text(&parts),
        object_ids: ids.into_iter().cloned().collect(),
        connections,
        parts,
    })
}

/// Objects one beam kept after verification, with the mean logit of the
/// tokens spelling each name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamSelection {
    pub beam: usize,
    pub object_ids: Vec<String>,
    pub weights: Vec<f64>,
}

/// Repeatedly choose a not-yet-chosen draft object (or, after the first, the
/// stop symbol). Chosen names are separated by list separators in the
/// context. Returns the selection and the tokens emitted.
pub fn verify_select(
    scorer: &mut dyn TokenScorer,
    vocab: &mut Vocab,
    context: &[TokenId],
    object_ids: &[String],
    beam: usize,
) -> Result<(BeamSelection, Vec<TokenId>), LmError> {
    if object_ids.is_empty() {
        return Err(LmError::EmptyAllowed);
    }
    let encoded: Vec<Vec<TokenId>> = object_ids.iter().map(|id| vocab.encode_literal(id)).collect();
    let mut ctx = context.to_vec();
    let mut emitted = Vec::new();
    let mut remaining: Vec<usize> = (0..object_ids.len()).collect();
    let mut selection = BeamSelection {
        beam,
        object_ids: Vec::new(),
        weights: Vec::new(),
    };
    while !remaining.is_empty() {
        let mut options: Vec<Vec<TokenId>> = remaining.iter().map(|&i| encoded[i].clone()).collect();
        let may_stop = !selection.object_ids.is_empty();
        if may_stop {
            options.push(vec![Special::Stop.id()]);
        }
        let choice = decode_choice(scorer, vocab, &ctx, &options)?;
        ctx.extend(&choice.tokens);
        emitted.extend(&choice.tokens);
        if may_stop && choice.index == remaining.len() {
            break;
        }
        let picked = remaining.remove(choice.index);
        selection.object_ids.push(object_ids[picked].clone());
        selection.weights.push(choice.logits.iter().sum::<f64>() / choice.logits.len() as f64);
        ctx.push(Special::ListSep.id());
        emitted.push(Special::ListSep.id());
    }
    if remaining.is_empty() {
        ctx.push(Special::Stop.id());
        emitted.push(Special::Stop.id());
    }
    Ok((selection, emitted))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceRow {
    pub object_id: String,
    pub votes: usize,
    pub avg_weight: f64,
    pub weight_norm: f64,
    pub count_norm: f64,
    pub confidence: f64,
}

/// Voted objects only, sorted by confidence descending, ties by id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfidenceTable {
    pub rows: Vec<ConfidenceRow>,
}

/// Weighted vote over beams. Mean vote weights are min-max normalized over
/// the voted objects (all equal ⇒ 1), raw vote counts go through a softmax,
/// and the two mix with `lambda`.
pub fn aggregate(selections: &[BeamSelection], lambda: f64) -> ConfidenceTable {
    let mut votes: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for sel in selections {
        let mut seen = BTreeSet::new();
        for (id, &w) in sel.object_ids.iter().zip(&sel.weights) {
            if seen.insert(id.as_str()) {
                votes.entry(id).or_default().push(w);
            }
        }
    }
    if votes.is_empty() {
        return ConfidenceTable::default();
    }
    let avg: BTreeMap<&str, f64> = votes
        .iter()
        .map(|(id, ws)| {
            // Summing in sorted order keeps the result independent of beam order.
            let mut sorted = ws.clone();
            sorted.sort_by(f64::total_cmp);
            (*id, sorted.iter().sum::<f64>() / ws.len() as f64)
        })
        .collect();
    let lo = avg.values().copied().fold(f64::INFINITY, f64::min);
    let hi = avg.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let max_count = votes.values().map(Vec::len).max().unwrap_or(0) as f64;
    let z: f64 = votes.values().map(|ws| (ws.len() as f64 - max_count).exp()).sum();

    let mut rows: Vec<ConfidenceRow> = votes
        .iter()
        .map(|(id, ws)| {
            let a = avg[id];
            let weight_norm = if hi > lo { (a - lo) / (hi - lo) } else { 1.0 };
            let count_norm = (ws.len() as f64 - max_count).exp() / z;
            ConfidenceRow {
                object_id: id.to_string(),
                votes: ws.len(),
                avg_weight: a,
                weight_norm,
                count_norm,
                confidence: lambda * weight_norm + (1.0 - lambda) * count_norm,
            }
        })
        .collect();
    rows.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then_with(|| a.object_id.cmp(&b.object_id)));
    ConfidenceTable { rows }
}

/// The `final_k` most confident objects.
pub fn finalize(table: &ConfidenceTable, final_k: usize) -> Vec<String> {
    table.rows.iter().take(final_k).map(|r| r.object_id.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::MockScorer;
    use proptest::prelude::*;

    fn sel(beam: usize, ids: &[&str], w: &[f64]) -> BeamSelection {
        BeamSelection {
            beam,
            object_ids: ids.iter().map(|s| s.to_string()).collect(),
            weights: w.to_vec(),
        }
    }

    #[test]
    fn top_rows_by_similarity() {
        let sims = [0.1, 0.9, 0.3, 0.8, 0.2, 0.7, 0.0, 0.6, 0.5, 0.4];
        assert_eq!(top_units(&sims, 5), vec![1, 3, 5, 7, 8]);
        assert_eq!(top_units(&sims[..3], 5), vec![0, 1, 2]);
    }

    #[test]
    fn single_object_is_selected() {
        let mut v = Vocab::new();
        let ids = vec!["t1".to_string()];
        let (s, _) = verify_select(&mut MockScorer::uniform(), &mut v, &[], &ids, 0).unwrap();
        assert_eq!(s.object_ids, ids);
    }

    #[test]
    fn scripted_selection() {
        let mut v = Vocab::new();
        let ids: Vec<String> = ["t1", "p2", "t3"].iter().map(|s| s.to_string()).collect();
        let ctx = v.encode_text("select");
        let mut m = MockScorer::uniform().script(&["select"], &["t1", ",", "p2", ",", "<>"]);
        let (s, _) = verify_select(&mut m, &mut v, &ctx, &ids, 0).unwrap();
        assert_eq!(s.object_ids, vec!["t1", "p2"]);
    }

    #[test]
    fn symmetric_single_beam() {
        let t = aggregate(&[sel(0, &["A", "B"], &[1.0, 1.0])], 0.5);
        assert_eq!(t.rows[0].count_norm, 0.5);
        assert_eq!(t.rows[0].confidence, t.rows[1].confidence);
    }

    #[test]
    fn more_votes_win() {
        let beams = [
            sel(0, &["A", "B"], &[1.0, 1.0]),
            sel(1, &["A"], &[1.0]),
            sel(2, &["A"], &[1.0]),
        ];
        for lambda in [0.0, 0.5, 0.99] {
            let t = aggregate(&beams, lambda);
            assert_eq!(t.rows[0].object_id, "A");
            assert!(t.rows[0].confidence > t.rows[1].confidence);
        }
    }

    #[test]
    fn three_beams_by_hand() {
        let beams = [
            sel(0, &["A", "B"], &[2.0, 1.0]),
            sel(1, &["A", "C"], &[4.0, 3.0]),
            sel(2, &["B"], &[2.0]),
        ];
        let t = aggregate(&beams, 0.5);
        // avg: A 3, B 1.5, C 3 -> norm A 1, B 0, C 1; counts 2, 2, 1.
        let e = std::f64::consts::E;
        let z = 2.0 * e * e + e;
        let row = |id: &str| t.rows.iter().find(|r| r.object_id == id).unwrap().clone();
        assert!((row("A").confidence - (0.5 + 0.5 * e * e / z)).abs() < 1e-9);
        assert!((row("B").confidence - 0.5 * e * e / z).abs() < 1e-9);
        assert!((row("C").confidence - (0.5 + 0.5 * e / z)).abs() < 1e-9);
        assert_eq!(finalize(&t, 2), vec!["A", "C"]);
        assert_eq!(finalize(&t, 10).len(), 3);
    }

    proptest! {
        #[test]
        fn selections_stay_in_draft(seed in 0u64..100_000, n in 1usize..7) {
            let mut v = Vocab::new();
            let ids: Vec<String> = (0..n).map(|i| format!("obj_{i}")).collect();
            let ctx = v.encode_text("some context");
            let (s, _) = verify_select(&mut MockScorer::seeded(seed), &mut v, &ctx, &ids, 0).unwrap();
            prop_assert!(!s.object_ids.is_empty());
            for id in &s.object_ids {
                prop_assert!(ids.contains(id));
            }
        }

        #[test]
        fn beam_order_is_irrelevant(ws in prop::collection::vec((0usize..4, -3.0f64..3.0), 1..12), rot in 0usize..5) {
            let names = ["A", "B", "C", "D"];
            let beams: Vec<BeamSelection> = ws.chunks(3).enumerate().map(|(b, c)| {
                let mut ids = Vec::new();
                let mut w = Vec::new();
                for &(i, x) in c {
                    if !ids.contains(&names[i]) {
                        ids.push(names[i]);
                        w.push(x);
                    }
                }
                sel(b, &ids, &w)
            }).collect();
            let mut rotated = beams.clone();
            let len = rotated.len();
            rotated.rotate_left(rot % len);
            let a = aggregate(&beams, 0.5);
            let b = aggregate(&rotated, 0.5);
            prop_assert_eq!(finalize(&a, 3), finalize(&b, 3));
        }
    }
}
