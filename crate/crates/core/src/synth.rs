//! Generator for the planted-bridge benchmark: themed groups of tables and
//! passages where every question needs a bridging table that shares no token
//! with the question and is reachable only through a joinable column.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{serialize_object, DataObject};
use crate::eval::Question;
use crate::struct_align::compat::value_set;
use crate::text::{jaccard, token_set};

pub const DEFAULT_THEMES: usize = 10;
const ROWS: usize = 6;
/// Bridge rows; each repeats one anchor key, so the key columns have Jaccard 5/6.
const SHARED_KEYS: usize = 5;
const MIN_BRIDGE_JACCARD: f64 = 0.8;
const HEADER_WORDS: usize = 3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Benchmark {
    pub objects: Vec<DataObject>,
    pub questions: Vec<Question>,
}

/// Source of pronounceable made-up words, each handed out once.
struct Words {
    rng: ChaCha8Rng,
    used: BTreeSet<String>,
}

impl Words {
    fn next(&mut self) -> String {
        const ONSETS: [&str; 14] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
        const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
        loop {
            let syllables = self.rng.gen_range(2..=3);
            let w: String = (0..syllables)
                .map(|_| {
                    let o = ONSETS[self.rng.gen_range(0..ONSETS.len())];
                    let v = VOWELS[self.rng.gen_range(0..VOWELS.len())];
                    format!("{o}{v}")
                })
                .collect();
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn many(&mut self, n: usize) -> Vec<String> {
        (0..n).map(|_| self.next()).collect()
    }

    fn number(&mut self) -> String {
        self.rng.gen_range(100..1000).to_string()
    }
}

struct Theme {
    anchor: DataObject,
    bridge: DataObject,
    target: DataObject,
    decoy_table: DataObject,
    decoy_passage: DataObject,
    questions: [(String, Vec<String>, bool); 2],
}

fn theme(w: &mut Words) -> Theme {
    let [q1, q2, q3, q4, c1, c2, c3, c4, b1, b2, d1, d3] =
        <[String; 12]>::try_from(w.many(12)).expect("twelve words");
    // Multi-word headers keep chance hash collisions between unrelated
    // headers to a fraction of a full match.
    let mut phrase = |n: usize| w.many(n).join(" ");
    let (k, m) = (phrase(HEADER_WORDS), phrase(HEADER_WORDS));
    let anchor_cols = vec![k.clone(), format!("{q3} {q4} {}", phrase(1)), phrase(HEADER_WORDS)];
    let bridge_cols = vec![k, m.clone(), phrase(HEADER_WORDS)];
    let target_cols = vec![m, format!("{c3} {c4} {}", phrase(1))];
    let decoy_cols = vec![phrase(HEADER_WORDS), format!("{q3} {}", phrase(2))];
    let sentences = vec![
        format!("{q2} {} {c2} {}.", phrase(2), phrase(3)),
        format!("{d3} {} {c3} {}.", phrase(2), phrase(3)),
    ];
    let keys = w.many(ROWS);
    let links = w.many(ROWS);

    let anchor_rows = (0..ROWS)
        .map(|r| vec![keys[r].clone(), w.next(), w.number()])
        .collect();
    let anchor = DataObject::table("", format!("{q1} {q2}"), anchor_cols, anchor_rows);

    let bridge_rows = (0..SHARED_KEYS)
        .map(|r| vec![keys[r].clone(), links[r].clone(), w.next()])
        .collect();
    let bridge = DataObject::table("", format!("{b1} {b2}"), bridge_cols, bridge_rows);

    let target_rows = (0..ROWS).map(|r| vec![links[r].clone(), w.number()]).collect();
    let target = DataObject::table("", format!("{c1} {c2}"), target_cols, target_rows);

    let decoy_rows = (0..ROWS).map(|_| vec![w.next(), w.next()]).collect();
    let decoy_table = DataObject::table("", format!("{q1} {d1}"), decoy_cols, decoy_rows);
    let decoy_passage = DataObject::passage("", format!("{c1} {d3}"), sentences);

    let two = (
        format!("which {q3} {q4} of the {q1} {q2} ranks highest"),
        vec![format!("{q3} {q4}"), format!("{q1} {q2}")],
        false,
    );
    let three = (
        format!("what {c3} {c4} of the {c1} {c2} matches the {q1} {q2}"),
        vec![format!("{c3} {c4}"), format!("{c1} {c2}"), format!("{q1} {q2}")],
        true,
    );
    Theme {
        anchor,
        bridge,
        target,
        decoy_table,
        decoy_passage,
        questions: [two, three],
    }
}

/// Build the benchmark: `themes` groups of five objects and two questions per
/// group (one with two gold objects, one with three). Object ids are shuffled
/// so that id order carries no signal.
pub fn planted_bridge(themes: usize, seed: u64) -> Benchmark {
    let mut w = Words {
        rng: ChaCha8Rng::seed_from_u64(seed),
        used: BTreeSet::new(),
    };
    let groups: Vec<Theme> = (0..themes).map(|_| theme(&mut w)).collect();
    let mut ids: Vec<usize> = (0..themes * 5).collect();
    ids.shuffle(&mut w.rng);
    let id = |n: usize| format!("obj{:03}", ids[n]);

    let mut objects = Vec::new();
    let mut questions = Vec::new();
    for (t, g) in groups.into_iter().enumerate() {
        let base = t * 5;
        let parts = [g.anchor, g.bridge, g.target, g.decoy_table, g.decoy_passage];
        for (j, mut o) in parts.into_iter().enumerate() {
            o.id = id(base + j);
            objects.push(o);
        }
        for (n, (text, keywords, with_target)) in g.questions.into_iter().enumerate() {
            let mut gold = vec![id(base), id(base + 1)];
            if with_target {
                gold.push(id(base + 2));
            }
            questions.push(Question {
                id: format!("q{:02}", t * 2 + n),
                question: text,
                gold,
                keywords,
            });
        }
    }
    objects.sort_by(|a, b| a.id.cmp(&b.id));
    Benchmark { objects, questions }
}

/// Check the planted properties: each question's bridge shares no token with
/// it and has a column with Jaccard at least 0.8 against a gold table that
/// does share tokens with the question. Returns a description of the first
/// failure.
pub fn check_bridges(bench: &Benchmark) -> Result<(), String> {
    let find = |id: &str| bench.objects.iter().find(|o| o.id == id);
    for q in &bench.questions {
        let qtokens = token_set(&q.question);
        let gold: Vec<&DataObject> = q
            .gold
            .iter()
            .map(|g| find(g).ok_or_else(|| format!("{}: unknown gold `{g}`", q.id)))
            .collect::<Result<_, _>>()?;
        let visible = |o: &DataObject| !token_set(&serialize_object(o)).is_disjoint(&qtokens);
        let bridge = gold
            .iter()
            .find(|o| !visible(o))
            .ok_or_else(|| format!("{}: every gold object shares a token with the question", q.id))?;
        let joined = gold.iter().filter(|o| o.is_table() && visible(o)).any(|t| {
            (0..bridge.columns.len()).any(|i| {
                (0..t.columns.len()).any(|j| {
                    jaccard(&value_set(bridge.column_values(i)), &value_set(t.column_values(j))) >= MIN_BRIDGE_JACCARD
                })
            })
        });
        if !joined {
            return Err(format!("{}: bridge `{}` has no joinable column", q.id, bridge.id));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Corpus;

    #[test]
    fn shape_and_planted_properties() {
        let b = planted_bridge(DEFAULT_THEMES, 7);
        assert_eq!(b.objects.len(), 50);
        assert_eq!(b.questions.len(), 20);
        assert!(b.questions.iter().all(|q| (2..=3).contains(&q.gold.len())));
        check_bridges(&b).unwrap();
        Corpus::new(b.objects.clone(), 20).unwrap();
    }

    #[test]
    fn deterministic_per_seed() {
        let a = serde_json::to_string(&planted_bridge(3, 1)).unwrap();
        assert_eq!(a, serde_json::to_string(&planted_bridge(3, 1)).unwrap());
        assert_ne!(a, serde_json::to_string(&planted_bridge(3, 2)).unwrap());
    }

    #[test]
    fn keywords_are_question_spans() {
        for q in planted_bridge(4, 3).questions {
            for k in &q.keywords {
                assert!(q.question.contains(k.as_str()), "{k} not in {}", q.question);
            }
        }
    }
}
