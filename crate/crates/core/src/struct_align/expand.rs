//! Growing the base set into candidate search sets by following the most
//! compatible neighbours.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::compat::{CompatError, CompatMatrix};

/// Expansion scheme: `per_step` neighbours per frontier object, `steps` rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strategy {
    pub per_step: usize,
    pub steps: usize,
}

impl Strategy {
    pub const fn new(per_step: usize, steps: usize) -> Self {
        Self { per_step, steps }
    }
}

pub const DEFAULT_STRATEGIES: [Strategy; 3] = [Strategy::new(1, 1), Strategy::new(2, 1), Strategy::new(1, 2)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSet {
    pub strategy: Strategy,
    /// Corpus indices: the base first, then additions in the order found.
    pub members: Vec<usize>,
}

/// Expand `base` (corpus indices) once per strategy. Each round looks only
/// at the objects added in the previous round (the base in round one) and
/// adds, for each, its `per_step` most compatible objects not yet present.
pub fn expand_base(
    base: &[usize],
    matrix: &CompatMatrix,
    strategies: &[Strategy],
) -> Result<Vec<SearchSet>, CompatError> {
    strategies
        .iter()
        .map(|&strategy| {
            let mut members = base.to_vec();
            let mut present: BTreeSet<usize> = base.iter().copied().collect();
            let mut frontier = base.to_vec();
            for _ in 0..strategy.steps {
                let mut added = Vec::new();
                for &obj in &frontier {
                    for j in matrix.most_compatible(obj, strategy.per_step, &present)? {
                        present.insert(j);
                        members.push(j);
                        added.push(j);
                    }
                }
                frontier = added;
            }
            Ok(SearchSet { strategy, members })
        })
        .collect()
}
