use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::tree::LabeledTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeKind {
    /// `size` edges in a line.
    Path,
    /// A centre with `size` leaves.
    Star,
    /// `size` vertices: a spine of about `2 log2(size)` with legs dealt round-robin.
    Caterpillar,
    /// `size` vertices in heap order.
    Binary,
    /// `size` vertices, each attached to a uniformly random earlier one.
    Random,
}

impl TreeKind {
    pub const ALL: [TreeKind; 5] = [
        TreeKind::Path,
        TreeKind::Star,
        TreeKind::Caterpillar,
        TreeKind::Binary,
        TreeKind::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TreeKind::Path => "path",
            TreeKind::Star => "star",
            TreeKind::Caterpillar => "caterpillar",
            TreeKind::Binary => "binary",
            TreeKind::Random => "random",
        }
    }
}

impl fmt::Display for TreeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TreeKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TreeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| HarnessError::InvalidParams(format!("unknown tree kind {s:?}")))
    }
}

fn labels(count: usize) -> Vec<String> {
    let width = (count.max(2) - 1).to_string().len();
    (0..count).map(|i| format!("v{i:0width$}")).collect()
}

fn from_parents(names: &[String], parent: impl Fn(usize) -> usize) -> Result<LabeledTree, HarnessError> {
    if names.len() == 1 {
        return Ok(LabeledTree::single(&names[0])?);
    }
    let edges: Vec<(&str, &str)> = (1..names.len())
        .map(|i| (names[parent(i)].as_str(), names[i].as_str()))
        .collect();
    Ok(LabeledTree::from_edges(&edges)?)
}

/// Deterministic in `(kind, size, seed)`; only `Random` looks at the seed.
pub fn generate_tree(kind: TreeKind, size: usize, seed: u64) -> Result<LabeledTree, HarnessError> {
    if size == 0 {
        return Err(HarnessError::InvalidParams(format!("{kind} tree needs size >= 1")));
    }
    match kind {
        TreeKind::Path => from_parents(&labels(size + 1), |i| i - 1),
        TreeKind::Star => from_parents(&labels(size + 1), |_| 0),
        TreeKind::Binary => from_parents(&labels(size), |i| (i - 1) / 2),
        TreeKind::Caterpillar => {
            let log = usize::BITS - size.leading_zeros();
            let spine = (2 * log as usize).min(size);
            from_parents(&labels(size), |i| if i < spine { i - 1 } else { (i - spine) % spine })
        }
        TreeKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut names = labels(size);
            names.shuffle(&mut rng);
            let parents: Vec<usize> = (0..size).map(|i| if i == 0 { 0 } else { rng.gen_range(0..i) }).collect();
            from_parents(&names, |i| parents[i])
        }
    }
}
