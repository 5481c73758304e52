//! Selection problem over candidate objects:
//!
//! maximize Σ R_i b_i + Σ C_ij c_ij
//! s.t. b, c binary; Σ b_i = k; Σ c_ij ≤ 2(k − 1); 2 c_ij ≤ b_i + b_j,
//!
//! with c indexed by unordered pairs. For a fixed selection the optimal c
//! picks the 2(k − 1) largest strictly positive C among selected pairs, so
//! only the b variables need to be searched.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::compat::Connection;

/// Largest instance the exhaustive solver accepts.
pub const BRUTE_FORCE_MAX: usize = 15;

const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MipError {
    #[error("cannot select {k} of {m} objects")]
    Infeasible { k: usize, m: usize },
    #[error("exhaustive search limited to {BRUTE_FORCE_MAX} objects, got {0}")]
    TooLarge(usize),
    #[error("malformed instance: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MipInstance {
    pub ids: Vec<String>,
    pub relevance: Vec<f64>,
    /// Symmetric M×M matrix; the diagonal is ignored.
    pub compat: Vec<Vec<f64>>,
    pub k: usize,
}

impl MipInstance {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Upper bound on the number of connections.
    pub fn max_links(&self) -> usize {
        2 * self.k.saturating_sub(1)
    }

    fn validate(&self) -> Result<(), MipError> {
        let m = self.ids.len();
        if self.relevance.len() != m || self.compat.len() != m || self.compat.iter().any(|r| r.len() != m) {
            return Err(MipError::Malformed("dimensions disagree".into()));
        }
        if self.k == 0 {
            return Err(MipError::Malformed("k must be at least 1".into()));
        }
        if self.k > m {
            return Err(MipError::Infeasible { k: self.k, m });
        }
        let finite = self.relevance.iter().chain(self.compat.iter().flatten()).all(|x| x.is_finite());
        if !finite {
            return Err(MipError::Malformed("non-finite coefficient".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub a: String,
    pub b: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connection: Option<Connection>,
}

/// A solution: the selected objects and the connections among them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draft {
    /// Selected ids in instance order.
    pub objects: Vec<String>,
    pub links: Vec<Link>,
    pub objective: f64,
}

/// Solver seam so an external optimizer can stand in for the built-in ones.
pub trait MipSolver {
    fn solve(&self, instance: &MipInstance) -> Result<Draft, MipError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BranchAndBound;

#[derive(Debug, Clone, Copy, Default)]
pub struct BruteForce;

impl MipSolver for BranchAndBound {
    fn solve(&self, instance: &MipInstance) -> Result<Draft, MipError> {
        solve_mip(instance)
    }
}

impl MipSolver for BruteForce {
    fn solve(&self, instance: &MipInstance) -> Result<Draft, MipError> {
        brute_force_mip(instance)
    }
}

/// Optimal links for a fixed selection: the largest strictly positive C,
/// ties by pair index, at most `max_links` of them.
fn best_links(inst: &MipInstance, selected: &[usize]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (x, &i) in selected.iter().enumerate() {
        for &j in &selected[x + 1..] {
            if inst.compat[i][j] > 0.0 {
                pairs.push((i, j));
            }
        }
    }
    pairs.sort_by(|&(a, b), &(c, d)| inst.compat[c][d].total_cmp(&inst.compat[a][b]).then((a, b).cmp(&(c, d))));
    pairs.truncate(inst.max_links());
    pairs
}

/// Objective of the best completion of a selection, summed in a fixed order
/// so every solver reports bit-identical values for the same set.
fn evaluate(inst: &MipInstance, selected: &[usize]) -> (f64, Vec<(usize, usize)>) {
    let links = best_links(inst, selected);
    let mut total = 0.0;
    for &i in selected {
        total += inst.relevance[i];
    }
    for &(i, j) in &links {
        total += inst.compat[i][j];
    }
    (total, links)
}

fn id_key<'a>(inst: &'a MipInstance, selected: &[usize]) -> Vec<&'a str> {
    let mut ids: Vec<&str> = selected.iter().map(|&i| inst.ids[i].as_str()).collect();
    ids.sort_unstable();
    ids
}

struct Best {
    objective: f64,
    selected: Vec<usize>,
}

impl Best {
    fn offer(&mut self, inst: &MipInstance, selected: &[usize], objective: f64) {
        let better = objective > self.objective
            || (objective == self.objective && id_key(inst, selected) < id_key(inst, &self.selected));
        if self.selected.is_empty() || better {
            self.objective = objective;
            self.selected = selected.to_vec();
        }
    }
}

fn into_draft(inst: &MipInstance, mut selected: Vec<usize>) -> Draft {
    selected.sort_unstable();
    let (objective, links) = evaluate(inst, &selected);
    Draft {
        objects: selected.iter().map(|&i| inst.ids[i].clone()).collect(),
        links: links
            .into_iter()
            .map(|(i, j)| Link {
                a: inst.ids[i].clone(),
                b: inst.ids[j].clone(),
                score: inst.compat[i][j],
                connection: None,
            })
            .collect(),
        objective,
    }
}

/// Exact solver: depth-first branch and bound over the selection variables.
/// Among optimal selections the one with the lexicographically smallest
/// sorted id list wins.
pub fn solve_mip(inst: &MipInstance) -> Result<Draft, MipError> {
    inst.validate()?;
    let m = inst.len();
    // Branch on objects in descending relevance so good incumbents come early.
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| inst.relevance[b].total_cmp(&inst.relevance[a]).then(a.cmp(&b)));
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            if inst.compat[i][j] > 0.0 {
                pairs.push((i, j));
            }
        }
    }
    pairs.sort_by(|&(a, b), &(c, d)| inst.compat[c][d].total_cmp(&inst.compat[a][b]));

    let mut search = Search {
        inst,
        order,
        pairs,
        available: vec![true; m],
        chosen: Vec::with_capacity(inst.k),
        best: Best {
            objective: f64::NEG_INFINITY,
            selected: Vec::new(),
        },
    };
    search.branch(0);
    let selected = std::mem::take(&mut search.best.selected);
    Ok(into_draft(inst, selected))
}

struct Search<'a> {
    inst: &'a MipInstance,
    order: Vec<usize>,
    pairs: Vec<(usize, usize)>,
    /// Objects that are selected or still undecided.
    available: Vec<bool>,
    chosen: Vec<usize>,
    best: Best,
}

impl Search<'_> {
    fn bound(&self, pos: usize) -> f64 {
        let inst = self.inst;
        let need = inst.k - self.chosen.len();
        let mut total: f64 = self.chosen.iter().map(|&i| inst.relevance[i]).sum();
        // `order` is sorted by relevance, so the first `need` undecided objects are the best.
        total += self.order[pos..].iter().take(need).map(|&i| inst.relevance[i]).sum::<f64>();
        let mut links = inst.max_links();
        for &(i, j) in &self.pairs {
            if links == 0 {
                break;
            }
            if self.available[i] && self.available[j] {
                total += inst.compat[i][j];
                links -= 1;
            }
        }
        total
    }

    fn branch(&mut self, pos: usize) {
        let inst = self.inst;
        if self.chosen.len() == inst.k {
            let mut sel = self.chosen.clone();
            sel.sort_unstable();
            let (objective, _) = evaluate(inst, &sel);
            self.best.offer(inst, &sel, objective);
            return;
        }
        if self.order.len() - pos < inst.k - self.chosen.len() {
            return;
        }
        if !self.best.selected.is_empty() && self.bound(pos) + BOUND_SLACK < self.best.objective {
            return;
        }
        let obj = self.order[pos];
        self.chosen.push(obj);
        self.branch(pos + 1);
        self.chosen.pop();

        self.available[obj] = false;
        self.branch(pos + 1);
        self.available[obj] = true;
    }
}

/// Exhaustive reference solver over every k-subset.
pub fn brute_force_mip(inst: &MipInstance) -> Result<Draft, MipError> {
    inst.validate()?;
    let m = inst.len();
    if m > BRUTE_FORCE_MAX {
        return Err(MipError::TooLarge(m));
    }
    let mut best = Best {
        objective: f64::NEG_INFINITY,
        selected: Vec::new(),
    };
    for mask in 0u32..(1 << m) {
        if mask.count_ones() as usize != inst.k {
            continue;
        }
        let sel: Vec<usize> = (0..m).filter(|&i| mask & (1 << i) != 0).collect();
        let (objective, _) = evaluate(inst, &sel);
        best.offer(inst, &sel, objective);
    }
    Ok(into_draft(inst, best.selected))
}
