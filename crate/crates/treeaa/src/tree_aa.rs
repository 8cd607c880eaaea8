//! Approximate agreement on trees.
//!
//! Final mode runs the Fox path finder, then agrees on the index of the
//! input's projection onto `P` and outputs the vertex of `Q` at the rounded
//! index. Legacy mode agrees on an Euler list index first, builds the path
//! from the root to that entry, then agrees on the projection index along it.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gradecast;
use crate::path_select::{FoxPathFinderParty, FoxPaths, LegacyPath, LegacyPathFinderParty};
use crate::real_aa::{check_resilience, plan_iterations, RealAaError, RealAaOutput, RealAaParty};
use crate::sim::{
    run_simulation, Adversary, Inbox, Outgoing, Protocol, Round, SimConfig, SimError, SimOutcome,
};
use crate::tree::{LabeledTree, TreeError, TreePath, VertexId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TreeAaError {
    #[error("cannot round non-finite value {0}")]
    NonFinite(f64),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    RealAa(#[from] RealAaError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Nearest integer, halves rounding up.
pub fn closest_int(j: f64) -> Result<i64, TreeAaError> {
    const LIMIT: f64 = (1u64 << 62) as f64;
    if !j.is_finite() || j.abs() >= LIMIT {
        return Err(TreeAaError::NonFinite(j));
    }
    let z = j.floor();
    let r = if j - z < (z + 1.0) - j { z } else { z + 1.0 };
    Ok(r as i64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Final,
    Legacy,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Final => "final",
            Mode::Legacy => "legacy",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "final" => Ok(Mode::Final),
            "legacy" => Ok(Mode::Legacy),
            other => Err(format!("unknown mode {other:?} (expected final or legacy)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseKind {
    /// A single gradecast of paths.
    PathGradecast,
    /// Real-valued AA; every value lies within `d_bound` of the others.
    RealAa { d_bound: f64, iterations: u32 },
}

/// A contiguous block of rounds running one sub-protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase {
    pub first_round: Round,
    pub rounds: Round,
    pub kind: PhaseKind,
}

impl Phase {
    pub fn contains(&self, round: Round) -> bool {
        round >= self.first_round && round < self.first_round + self.rounds
    }

    /// 1-based round within the phase.
    pub fn local(&self, round: Round) -> Round {
        round - self.first_round + 1
    }
}

/// The public round schedule of a run. Empty when the tree is trivial.
pub fn layout(mode: Mode, n: usize, t: usize, tree: &LabeledTree) -> Result<Vec<Phase>, TreeAaError> {
    check_resilience(n, t)?;
    let d = tree.diameter();
    if d <= 1 {
        return Ok(Vec::new());
    }
    let inner = plan_iterations(n, t, d as f64, 1.0)?;
    let phases = match mode {
        Mode::Final => vec![
            Phase {
                first_round: 1,
                rounds: gradecast::ROUNDS,
                kind: PhaseKind::PathGradecast,
            },
            Phase {
                first_round: 1 + gradecast::ROUNDS,
                rounds: 3 * inner,
                kind: PhaseKind::RealAa {
                    d_bound: d as f64,
                    iterations: inner,
                },
            },
        ],
        Mode::Legacy => {
            let d_list = 2.0 * tree.len() as f64;
            let outer = plan_iterations(n, t, d_list, 1.0)?;
            vec![
                Phase {
                    first_round: 1,
                    rounds: 3 * outer,
                    kind: PhaseKind::RealAa {
                        d_bound: d_list,
                        iterations: outer,
                    },
                },
                Phase {
                    first_round: 1 + 3 * outer,
                    rounds: 3 * inner,
                    kind: PhaseKind::RealAa {
                        d_bound: d as f64,
                        iterations: inner,
                    },
                },
            ]
        }
    };
    Ok(phases)
}

/// Total rounds a run takes.
pub fn expected_rounds(mode: Mode, n: usize, t: usize, tree: &LabeledTree) -> Result<Round, TreeAaError> {
    Ok(layout(mode, n, t, tree)?.iter().map(|p| p.rounds).sum())
}

/// What a party did on the way to its output.
#[derive(Debug, Clone, PartialEq)]
pub enum Trace {
    /// Diameter at most 1: own input returned without communication.
    Trivial,
    Final {
        paths: FoxPaths,
        index: usize,
        j: f64,
        rounded: i64,
    },
    Legacy {
        finder: LegacyPath,
        index: usize,
        j: f64,
        rounded: i64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeAaOutput {
    pub vertex: VertexId,
    pub trace: Trace,
    /// Value trajectory of the last real-valued AA phase.
    pub real: Option<RealAaOutput>,
}

/// The vertex of `path` at 1-based `c`, clamped into the path.
fn vertex_at(path: &TreePath, c: i64) -> VertexId {
    let k = c.clamp(1, path.len() as i64) as usize;
    path.at(k).expect("index clamped into the path")
}

/// TreeAA given `(P, Q)`: agree on the projection index along `P` and read
/// the result off `Q`.
#[derive(Debug, Clone)]
pub struct TreeAaParty {
    q: TreePath,
    index: usize,
    real: RealAaParty,
}

impl TreeAaParty {
    pub fn new(
        tree: &LabeledTree,
        n: usize,
        t: usize,
        input: VertexId,
        p: &TreePath,
        q: TreePath,
    ) -> Result<Self, TreeAaError> {
        let proj = tree.project_onto_path(p, input)?;
        let index = p.position(proj).expect("projection lies on the path");
        let plan = plan_iterations(n, t, tree.diameter().max(1) as f64, 1.0)?;
        Ok(TreeAaParty {
            q,
            index,
            real: RealAaParty::new(n, t, plan, index as f64),
        })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn rounds(&self) -> Round {
        self.real.rounds()
    }

    fn finish(&self) -> Option<(VertexId, f64, i64, RealAaOutput)> {
        let out = self.real.output()?;
        let rounded = closest_int(out.value).unwrap_or(self.index as i64);
        Some((vertex_at(&self.q, rounded), out.value, rounded, out))
    }
}

impl Protocol for TreeAaParty {
    type Output = (VertexId, i64);

    fn send(&mut self, round: Round) -> Vec<Outgoing> {
        self.real.send(round)
    }

    fn receive(&mut self, round: Round, inbox: &Inbox) {
        self.real.receive(round, inbox);
    }

    fn output(&self) -> Option<Self::Output> {
        self.finish().map(|(v, _, c, _)| (v, c))
    }
}

/// The legacy output rule: past the end of the path, take its last vertex.
pub fn legacy_output(path: &TreePath, c: i64) -> VertexId {
    if c > path.len() as i64 {
        path.last()
    } else {
        vertex_at(path, c)
    }
}

#[derive(Debug, Clone)]
enum Stage {
    Done(TreeAaOutput),
    FoxPaths(FoxPathFinderParty),
    FoxAgree(FoxPaths, TreeAaParty),
    LegacyPaths(LegacyPathFinderParty),
    LegacyAgree {
        finder: LegacyPath,
        index: usize,
        real: RealAaParty,
    },
}

/// A party of the end-to-end tree protocol in either mode.
#[derive(Debug, Clone)]
pub struct TreeParty {
    tree: Arc<LabeledTree>,
    n: usize,
    t: usize,
    input: VertexId,
    offset: Round,
    stage: Stage,
}

impl TreeParty {
    pub fn new(
        tree: Arc<LabeledTree>,
        list: Option<Arc<crate::tree::EulerList>>,
        mode: Mode,
        n: usize,
        t: usize,
        input: VertexId,
    ) -> Result<Self, TreeAaError> {
        check_resilience(n, t)?;
        if !tree.contains(input) {
            return Err(TreeError::UnknownVertex(input.to_string()).into());
        }
        let stage = if tree.diameter() <= 1 {
            Stage::Done(TreeAaOutput {
                vertex: input,
                trace: Trace::Trivial,
                real: None,
            })
        } else {
            match mode {
                Mode::Final => Stage::FoxPaths(FoxPathFinderParty::new(tree.clone(), n, t, input)?),
                Mode::Legacy => {
                    let list = match list {
                        Some(l) => l,
                        None => Arc::new(tree.euler_list(tree.root())?),
                    };
                    Stage::LegacyPaths(LegacyPathFinderParty::new(tree.clone(), list, n, t, input)?)
                }
            }
        };
        Ok(TreeParty {
            tree,
            n,
            t,
            input,
            offset: 0,
            stage,
        })
    }

    fn advance(&mut self, round: Round) {
        let next = match &self.stage {
            Stage::FoxPaths(f) => f.output().map(|paths| {
                let inner = TreeAaParty::new(&self.tree, self.n, self.t, self.input, &paths.p, paths.q.clone())
                    .expect("input and paths belong to the tree");
                Stage::FoxAgree(paths, inner)
            }),
            Stage::FoxAgree(paths, inner) => inner.finish().map(|(vertex, j, rounded, real)| {
                Stage::Done(TreeAaOutput {
                    vertex,
                    trace: Trace::Final {
                        paths: paths.clone(),
                        index: inner.index(),
                        j,
                        rounded,
                    },
                    real: Some(real),
                })
            }),
            Stage::LegacyPaths(f) => f.output().map(|finder| {
                // The path finder must have used up its whole round budget.
                assert_eq!(round, f.rounds(), "legacy path finder finished early");
                let proj = self
                    .tree
                    .project_onto_path(&finder.path, self.input)
                    .expect("input belongs to the tree");
                let index = finder.path.position(proj).expect("projection lies on the path");
                let plan = plan_iterations(self.n, self.t, self.tree.diameter() as f64, 1.0)
                    .expect("parameters validated at construction");
                Stage::LegacyAgree {
                    finder,
                    index,
                    real: RealAaParty::new(self.n, self.t, plan, index as f64),
                }
            }),
            Stage::LegacyAgree { finder, index, real } => real.output().map(|out| {
                let rounded = closest_int(out.value).unwrap_or(*index as i64);
                Stage::Done(TreeAaOutput {
                    vertex: legacy_output(&finder.path, rounded),
                    trace: Trace::Legacy {
                        finder: finder.clone(),
                        index: *index,
                        j: out.value,
                        rounded,
                    },
                    real: Some(out),
                })
            }),
            Stage::Done(_) => None,
        };
        if let Some(next) = next {
            self.stage = next;
            self.offset = round;
            // A zero-round follow-up finishes immediately.
            self.advance(round);
        }
    }
}

impl Protocol for TreeParty {
    type Output = TreeAaOutput;

    fn send(&mut self, round: Round) -> Vec<Outgoing> {
        let local = round - self.offset;
        match &mut self.stage {
            Stage::FoxPaths(f) => f.send(local),
            Stage::FoxAgree(_, inner) => inner.send(local),
            Stage::LegacyPaths(f) => f.send(local),
            Stage::LegacyAgree { real, .. } => real.send(local),
            Stage::Done(_) => Vec::new(),
        }
    }

    fn receive(&mut self, round: Round, inbox: &Inbox) {
        let local = round - self.offset;
        match &mut self.stage {
            Stage::FoxPaths(f) => f.receive(local, inbox),
            Stage::FoxAgree(_, inner) => inner.receive(local, inbox),
            Stage::LegacyPaths(f) => f.receive(local, inbox),
            Stage::LegacyAgree { real, .. } => real.receive(local, inbox),
            Stage::Done(_) => return,
        }
        self.advance(round);
    }

    fn output(&self) -> Option<Self::Output> {
        match &self.stage {
            Stage::Done(out) => Some(out.clone()),
            _ => None,
        }
    }
}

/// Run the tree protocol with one input per party.
pub fn run_tree_protocol(
    tree: Arc<LabeledTree>,
    mode: Mode,
    inputs: &[VertexId],
    t: usize,
    adversary: &mut dyn Adversary,
    seed: u64,
) -> Result<SimOutcome<TreeAaOutput>, TreeAaError> {
    let n = inputs.len();
    let list = match mode {
        Mode::Legacy => Some(Arc::new(tree.euler_list(tree.root())?)),
        Mode::Final => None,
    };
    let parties = inputs
        .iter()
        .map(|&v| TreeParty::new(tree.clone(), list.clone(), mode, n, t, v))
        .collect::<Result<Vec<_>, _>>()?;
    let planned = expected_rounds(mode, n, t, &tree)?;
    let config = SimConfig {
        n,
        t,
        seed,
        round_cap: 10 * (3 + planned),
    };
    Ok(run_simulation(&config, parties, adversary)?)
}
