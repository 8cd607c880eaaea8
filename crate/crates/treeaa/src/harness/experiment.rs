use std::collections::BTreeSet;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adversary::{build_adversary, AttackContext, ADVERSARIES};
use super::generate::{generate_tree, TreeKind};
use super::report::{Format, RunReport};
use super::HarnessError;
use crate::bounds::lb_rounds;
use crate::sim::{Round, SimOutcome};
use crate::tree::{parse_tree, LabeledTree, VertexId};
use crate::tree_aa::{expected_rounds, layout, run_tree_protocol, Mode, TreeAaOutput};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeSource {
    /// An edge-list file.
    File(PathBuf),
    Generate {
        kind: TreeKind,
        size: usize,
        #[serde(default)]
        seed: u64,
    },
    /// Inline edge-list text.
    Edges(String),
}

impl TreeSource {
    /// The tree and the name reported as `tree_kind`.
    pub fn load(&self) -> Result<(LabeledTree, String), HarnessError> {
        match self {
            TreeSource::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
                    path: path.clone(),
                    source,
                })?;
                Ok((parse_tree(&text)?, "file".into()))
            }
            TreeSource::Generate { kind, size, seed } => {
                Ok((generate_tree(*kind, *size, *seed)?, kind.name().into()))
            }
            TreeSource::Edges(text) => Ok((parse_tree(text)?, "edges".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputAssignment {
    /// One label per party.
    Explicit(Vec<String>),
    /// Uniformly random vertices, drawn from the run seed.
    RandomValid,
    /// Alternating between the two ends of a longest path.
    EndpointsOfDiameter,
}

impl FromStr for InputAssignment {
    type Err = HarnessError;

    /// `random-valid`, `endpoints-of-diameter`, or comma separated labels.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random-valid" | "random" => Ok(InputAssignment::RandomValid),
            "endpoints-of-diameter" | "endpoints" => Ok(InputAssignment::EndpointsOfDiameter),
            "" => Err(HarnessError::InvalidConfig("empty input assignment".into())),
            labels => Ok(InputAssignment::Explicit(
                labels.split(',').map(|l| l.trim().to_string()).collect(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub tree: TreeSource,
    pub n: usize,
    pub t: usize,
    pub inputs: InputAssignment,
    pub adversary: String,
    pub seeds: Vec<u64>,
    pub mode: Mode,
    #[serde(default)]
    pub format: Format,
    /// Directory receiving one JSONL transcript per run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcripts: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.n <= 3 * self.t {
            return Err(HarnessError::InvalidConfig(format!(
                "need t < n/3, got n={}, t={}",
                self.n, self.t
            )));
        }
        if !ADVERSARIES.contains(&self.adversary.as_str()) {
            return Err(HarnessError::UnknownAdversary(self.adversary.clone()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::InvalidConfig("no seeds".into()));
        }
        if let InputAssignment::Explicit(labels) = &self.inputs {
            if labels.len() != self.n {
                return Err(HarnessError::InvalidConfig(format!(
                    "{} explicit inputs for n={}",
                    labels.len(),
                    self.n
                )));
            }
        }
        Ok(())
    }
}

pub fn assign_inputs(
    tree: &LabeledTree,
    assignment: &InputAssignment,
    n: usize,
    seed: u64,
) -> Result<Vec<VertexId>, HarnessError> {
    match assignment {
        InputAssignment::Explicit(labels) => {
            if labels.len() != n {
                return Err(HarnessError::InvalidConfig(format!("{} explicit inputs for n={n}", labels.len())));
            }
            Ok(labels.iter().map(|l| tree.vertex(l)).collect::<Result<_, _>>()?)
        }
        InputAssignment::RandomValid => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x696e_7075_7473);
            Ok((0..n).map(|_| VertexId::new(rng.gen_range(0..tree.len()))).collect())
        }
        InputAssignment::EndpointsOfDiameter => {
            let (a, b) = tree.diameter_endpoints();
            Ok((0..n).map(|i| if i % 2 == 0 { a } else { b }).collect())
        }
    }
}

/// Oracle verdicts over the final honest parties.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    /// Every honest output lies in the hull of the honest inputs.
    pub valid: bool,
    /// Largest tree distance between two honest outputs.
    pub max_dist: usize,
}

impl Verdict {
    pub fn holds(&self) -> bool {
        self.valid && self.max_dist <= 1
    }
}

pub fn judge(tree: &LabeledTree, honest_inputs: &[VertexId], outputs: &[VertexId]) -> Result<Verdict, HarnessError> {
    let hull = tree.convex_hull(honest_inputs.iter().copied())?;
    let valid = outputs.iter().all(|o| hull.contains(o));
    let distinct: BTreeSet<VertexId> = outputs.iter().copied().collect();
    let mut max_dist = 0;
    for &a in &distinct {
        let (dist, _) = tree.bfs(a);
        for &b in &distinct {
            max_dist = max_dist.max(dist[b.index()]);
        }
    }
    Ok(Verdict { valid, max_dist })
}

#[derive(Debug, Clone)]
pub struct Execution {
    pub inputs: Vec<VertexId>,
    pub outcome: SimOutcome<TreeAaOutput>,
    pub verdict: Verdict,
    pub expected_rounds: Round,
}

impl Execution {
    pub fn honest_inputs(&self) -> Vec<VertexId> {
        self.outcome.outputs.keys().map(|p| self.inputs[p.slot()]).collect()
    }
}

/// One run of the tree protocol against a registry adversary.
pub fn execute(
    tree: &Arc<LabeledTree>,
    mode: Mode,
    t: usize,
    inputs: Vec<VertexId>,
    adversary: &str,
    seed: u64,
) -> Result<Execution, HarnessError> {
    let n = inputs.len();
    let phases = layout(mode, n, t, tree)?;
    let expected = phases.iter().map(|p| p.rounds).sum();
    let mut adv = build_adversary(
        adversary,
        AttackContext {
            n,
            t,
            tree: Some(tree.clone()),
            phases,
        },
    )?;
    let outcome = run_tree_protocol(tree.clone(), mode, &inputs, t, adv.as_mut(), seed)?;
    let honest: Vec<VertexId> = outcome.outputs.keys().map(|p| inputs[p.slot()]).collect();
    let outputs: Vec<VertexId> = outcome.outputs.values().map(|o| o.vertex).collect();
    let verdict = judge(tree, &honest, &outputs)?;
    Ok(Execution {
        inputs,
        outcome,
        verdict,
        expected_rounds: expected,
    })
}

fn run_seed(
    cfg: &ExperimentConfig,
    tree: &Arc<LabeledTree>,
    tree_kind: &str,
    diameter: usize,
    seed: u64,
) -> Result<RunReport, HarnessError> {
    let inputs = assign_inputs(tree, &cfg.inputs, cfg.n, seed)?;
    let run = execute(tree, cfg.mode, cfg.t, inputs, &cfg.adversary, seed)?;
    let transcript = match &cfg.transcripts {
        Some(dir) => {
            let path = dir.join(format!("{}-seed{seed}.jsonl", cfg.mode.name()));
            std::fs::write(&path, run.outcome.transcript.to_jsonl()).map_err(|source| HarnessError::Io {
                path: path.clone(),
                source,
            })?;
            Some(path.display().to_string())
        }
        None => None,
    };
    Ok(RunReport {
        seed,
        mode: cfg.mode,
        n: cfg.n,
        t: cfg.t,
        adversary: cfg.adversary.clone(),
        tree_kind: tree_kind.to_string(),
        vertices: tree.len(),
        diameter,
        rounds: run.outcome.rounds,
        lb_rounds: lb_rounds(cfg.n, cfg.t, diameter as f64).unwrap_or(0),
        max_dist: run.verdict.max_dist,
        valid: run.verdict.valid,
        outputs: run
            .outcome
            .outputs
            .iter()
            .map(|(p, o)| (p.get(), tree.label(o.vertex).to_string()))
            .collect(),
        transcript,
    })
}

/// One report per seed, in seed order. Seeds run in parallel.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunReport>, HarnessError> {
    cfg.validate()?;
    let (tree, kind) = cfg.tree.load()?;
    let tree = Arc::new(tree);
    // Fail on bad labels before spawning anything.
    assign_inputs(&tree, &cfg.inputs, cfg.n, 0)?;
    expected_rounds(cfg.mode, cfg.n, cfg.t, &tree)?;
    if let Some(dir) = &cfg.transcripts {
        std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
            path: dir.clone(),
            source,
        })?;
    }
    let diameter = tree.diameter();
    cfg.seeds
        .par_iter()
        .map(|&seed| run_seed(cfg, &tree, &kind, diameter, seed))
        .collect()
}
