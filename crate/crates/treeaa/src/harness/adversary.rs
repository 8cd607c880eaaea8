//! The adversary registry.
//!
//! Every round of every protocol here belongs to some gradecast, so each
//! strategy works out which phase, iteration and gradecast stage a round is
//! in and answers with well-formed gradecast messages (or nothing). Honest
//! behaviour of a corrupted party is reconstructed from the transcript by
//! replaying its inbox into a shadow [`Gradecast`].

use std::collections::BTreeSet;
use std::sync::Arc;

use bytes::Bytes;
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::HarnessError;
use crate::gradecast::{decode_message, encode_message, Gradecast, Stage};
use crate::path_select::{decode_path, encode_path};
use crate::real_aa::{decode_value, encode_value};
use crate::sim::{Adversary, AdversaryView, Inbox, Outgoing, PartyId, Round};
use crate::tree::{LabeledTree, TreePath, VertexId};
use crate::tree_aa::{Phase, PhaseKind};

pub const ADVERSARIES: [&str; 6] = [
    "silent",
    "skew-high",
    "skew-low",
    "equivocator",
    "split-world",
    "adaptive-late",
];

/// Public knowledge the adversary plans with.
#[derive(Debug, Clone)]
pub struct AttackContext {
    pub n: usize,
    pub t: usize,
    /// Needed to craft paths; only path phases use it.
    pub tree: Option<Arc<LabeledTree>>,
    pub phases: Vec<Phase>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Behavior {
    Silent,
    SkewHigh,
    SkewLow,
    Equivocator,
    SplitWorld,
    AdaptiveLate,
}

pub fn build_adversary(name: &str, ctx: AttackContext) -> Result<Box<dyn Adversary + Send>, HarnessError> {
    let behavior = match name {
        "silent" => Behavior::Silent,
        "skew-high" => Behavior::SkewHigh,
        "skew-low" => Behavior::SkewLow,
        "equivocator" => Behavior::Equivocator,
        "split-world" => Behavior::SplitWorld,
        "adaptive-late" => Behavior::AdaptiveLate,
        other => return Err(HarnessError::UnknownAdversary(other.to_string())),
    };
    if ctx.phases.iter().any(|p| p.kind == PhaseKind::PathGradecast) && ctx.tree.is_none() {
        return Err(HarnessError::InvalidConfig("path phases need the tree".into()));
    }
    Ok(Box::new(Registered { ctx, behavior }))
}

struct Registered {
    ctx: AttackContext,
    behavior: Behavior,
}

/// Where a round sits in the schedule.
struct Position {
    phase: Phase,
    stage: Stage,
    /// 0-based gradecast iteration within the phase.
    iteration: u32,
    /// Global round of this iteration's first stage.
    first: Round,
}

/// A split planned for one faulty sender in one iteration.
struct Split {
    sender: PartyId,
    value: Bytes,
    /// Honest parties that receive the value in the first stage.
    reached: Vec<PartyId>,
    /// Honest parties pushed to a candidate by faulty echoes.
    candidates: Vec<PartyId>,
    /// Honest parties receiving faulty votes.
    favored: Vec<PartyId>,
}

fn inbox_of(view: &AdversaryView<'_>, round: Round, party: PartyId) -> Inbox {
    Inbox::new(
        view.transcript
            .round(round)
            .iter()
            .filter(|e| e.receiver == party)
            .cloned()
            .collect(),
    )
}

/// What each honest sender broadcast in the first stage of an iteration.
fn honest_sends(view: &AdversaryView<'_>, first: Round) -> Vec<(PartyId, Bytes)> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for e in view.transcript.round(first) {
        if view.is_honest(e.sender) && seen.insert(e.sender) {
            if let Ok(mut slots) = decode_message(Stage::Send, 1, &e.payload) {
                if let Some(Some(v)) = slots.pop() {
                    out.push((e.sender, v));
                }
            }
        }
    }
    out
}

/// Vertex farthest from the root among those whose root path extends `path`.
fn deepest_below(tree: &LabeledTree, path: &TreePath) -> TreePath {
    let (dist, parent) = tree.bfs(tree.root());
    let top = path.last();
    let mut best = top;
    let mut stack = vec![top];
    while let Some(v) = stack.pop() {
        if dist[v.index()] > dist[best.index()] || (dist[v.index()] == dist[best.index()] && v < best) {
            best = v;
        }
        for &w in tree.neighbors(v) {
            if parent[w.index()] == Some(v) {
                stack.push(w);
            }
        }
    }
    tree.path_between(tree.root(), best).expect("vertex of the tree")
}

impl Registered {
    fn position(&self, round: Round) -> Option<Position> {
        let phase = *self.ctx.phases.iter().find(|p| p.contains(round))?;
        let local = phase.local(round);
        Some(Position {
            phase,
            stage: Stage::of_round(local),
            iteration: (local - 1) / 3,
            first: round - (local - 1) % 3,
        })
    }

    /// Round in which adaptive-late corrupts: the start of the second half
    /// of the last real-valued phase.
    fn late_round(&self) -> Option<Round> {
        let phase = self
            .ctx
            .phases
            .iter()
            .rev()
            .find(|p| matches!(p.kind, PhaseKind::RealAa { .. }))?;
        let PhaseKind::RealAa { iterations, .. } = phase.kind else {
            unreachable!()
        };
        if iterations == 0 {
            return None;
        }
        let skip = iterations - iterations.div_ceil(2);
        Some(phase.first_round + 3 * skip)
    }

    fn tree(&self) -> &LabeledTree {
        self.ctx.tree.as_deref().expect("checked at construction")
    }

    /// (low, high) extreme values for the current iteration.
    fn extremes(&self, view: &AdversaryView<'_>, pos: &Position) -> (Bytes, Bytes) {
        let sends = honest_sends(view, pos.first);
        match pos.phase.kind {
            PhaseKind::RealAa { d_bound, .. } => {
                let xs: Vec<f64> = sends.iter().filter_map(|(_, b)| decode_value(b)).collect();
                let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let (lo, hi) = if xs.is_empty() { (0.0, 0.0) } else { (lo, hi) };
                (encode_value(lo - d_bound), encode_value(hi + d_bound))
            }
            PhaseKind::PathGradecast => {
                let tree = self.tree();
                let low = TreePath::single(tree.root());
                let high = deepest_below(tree, &low);
                (encode_path(tree, &low), encode_path(tree, &high))
            }
        }
    }

    /// Value pushed at the camp a split favours.
    fn split_value(&self, view: &AdversaryView<'_>, pos: &Position, upper: bool) -> Bytes {
        match pos.phase.kind {
            PhaseKind::RealAa { .. } => {
                let (low, high) = self.extremes(view, pos);
                if upper {
                    high
                } else {
                    low
                }
            }
            PhaseKind::PathGradecast => {
                let tree = self.tree();
                let honest: Vec<TreePath> = honest_sends(view, pos.first)
                    .iter()
                    .filter_map(|(_, b)| decode_path(tree, b).ok())
                    .collect();
                let base = if upper {
                    honest.iter().max_by_key(|p| p.len()).cloned()
                } else {
                    honest.iter().min_by_key(|p| p.len()).cloned()
                }
                .unwrap_or_else(|| TreePath::single(tree.root()));
                encode_path(tree, &deepest_below(tree, &base))
            }
        }
    }

    /// Shadow of `party`'s honest gradecast state up to (not including) `stage`.
    fn shadow(&self, view: &AdversaryView<'_>, pos: &Position, party: PartyId) -> Gradecast {
        let mut gc = Gradecast::new(self.ctx.n, self.ctx.t, Bytes::new(), BTreeSet::new());
        if pos.stage >= Stage::Echo {
            gc.absorb(Stage::Send, &inbox_of(view, pos.first, party));
        }
        if pos.stage >= Stage::Vote {
            gc.absorb(Stage::Echo, &inbox_of(view, pos.first + 1, party));
        }
        gc
    }

    fn honest_slots(&self, view: &AdversaryView<'_>, pos: &Position, party: PartyId) -> Vec<Option<Bytes>> {
        let gc = self.shadow(view, pos, party);
        match pos.stage {
            Stage::Echo => gc.received().to_vec(),
            _ => gc.candidates().to_vec(),
        }
    }

    fn splits(&self, view: &AdversaryView<'_>, pos: &Position) -> Vec<Split> {
        let (n, t) = (self.ctx.n, self.ctx.t);
        let corrupted: Vec<PartyId> = view.corrupted.iter().copied().collect();
        let faulty = corrupted.len();
        if faulty == 0 {
            return Vec::new();
        }
        let honest = view.honest();
        let half = honest.len().div_ceil(2);
        let (camp_a, camp_b) = honest.split_at(half);

        let active: Vec<PartyId> = match (self.behavior, pos.phase.kind) {
            (Behavior::SplitWorld, PhaseKind::RealAa { iterations, .. }) => corrupted
                .iter()
                .enumerate()
                .filter(|(k, _)| *k as u32 % iterations.max(1) == pos.iteration % iterations.max(1))
                .map(|(_, &p)| p)
                .collect(),
            _ => corrupted.clone(),
        };
        let path_phase = pos.phase.kind == PhaseKind::PathGradecast;

        active
            .iter()
            .enumerate()
            .map(|(i, &sender)| {
                let upper = i % 2 == 0;
                let (favored, other) = if upper { (camp_a, camp_b) } else { (camp_b, camp_a) };
                let order: Vec<PartyId> = favored.iter().chain(other).copied().collect();
                // Grades (2 at the favoured camp, 1 elsewhere) or (1, 0).
                let high_split = path_phase && sender.get() % 2 == 0;
                let reach = (n - t).saturating_sub(faulty).min(order.len());
                let cands = if high_split { n - 2 * t } else { t }.min(order.len());
                Split {
                    sender,
                    value: self.split_value(view, pos, upper),
                    reached: order[..reach].to_vec(),
                    candidates: order[..cands].to_vec(),
                    favored: favored.to_vec(),
                }
            })
            .collect()
    }

    fn split_send(&self, view: &AdversaryView<'_>, pos: &Position, party: PartyId) -> Vec<Outgoing> {
        let splits = self.splits(view, pos);
        match pos.stage {
            Stage::Send => match splits.iter().find(|s| s.sender == party) {
                Some(s) => {
                    let msg = encode_message(Stage::Send, &[Some(s.value.clone())]);
                    s.reached
                        .iter()
                        .map(|&to| Outgoing {
                            to,
                            payload: msg.clone(),
                        })
                        .collect()
                }
                // Waiting for its turn: look honest so nobody blacklists it.
                None => match camouflage(view, pos) {
                    Some(v) => Outgoing::broadcast(self.ctx.n, encode_message(Stage::Send, &[Some(v)])),
                    None => Vec::new(),
                },
            },
            stage => {
                let base = self.honest_slots(view, pos, party);
                PartyId::all(self.ctx.n)
                    .map(|to| {
                        let mut slots = base.clone();
                        for s in &splits {
                            let targets = if stage == Stage::Echo { &s.candidates } else { &s.favored };
                            slots[s.sender.slot()] = targets.contains(&to).then(|| s.value.clone());
                        }
                        Outgoing {
                            to,
                            payload: encode_message(stage, &slots),
                        }
                    })
                    .collect()
            }
        }
    }

    fn skew_send(&self, view: &AdversaryView<'_>, pos: &Position, party: PartyId) -> Vec<Outgoing> {
        match pos.stage {
            Stage::Send => {
                let (low, high) = self.extremes(view, pos);
                let v = if self.behavior == Behavior::SkewHigh { high } else { low };
                Outgoing::broadcast(self.ctx.n, encode_message(Stage::Send, &[Some(v)]))
            }
            stage => {
                let slots = self.honest_slots(view, pos, party);
                Outgoing::broadcast(self.ctx.n, encode_message(stage, &slots))
            }
        }
    }

    fn equivocate(
        &self,
        view: &AdversaryView<'_>,
        pos: &Position,
        party: PartyId,
        rng: &mut ChaCha8Rng,
    ) -> Vec<Outgoing> {
        let (low, high) = self.extremes(view, pos);
        let pick = |rng: &mut ChaCha8Rng| match rng.gen_range(0..3) {
            0 => Some(low.clone()),
            1 => Some(high.clone()),
            _ => None,
        };
        match pos.stage {
            Stage::Send => {
                let flip = rng.gen_bool(0.5);
                PartyId::all(self.ctx.n)
                    .map(|to| {
                        let v = if (to.get() % 2 == 0) ^ flip { low.clone() } else { high.clone() };
                        Outgoing {
                            to,
                            payload: encode_message(Stage::Send, &[Some(v)]),
                        }
                    })
                    .collect()
            }
            stage => {
                let base = self.honest_slots(view, pos, party);
                PartyId::all(self.ctx.n)
                    .map(|to| {
                        let mut slots = base.clone();
                        for (k, slot) in slots.iter_mut().enumerate() {
                            let faulty_slot = view.corrupted.contains(&PartyId::from_slot(k));
                            if faulty_slot || rng.gen_bool(0.3) {
                                *slot = pick(rng);
                            }
                        }
                        Outgoing {
                            to,
                            payload: encode_message(stage, &slots),
                        }
                    })
                    .collect()
            }
        }
    }

    /// The `t` honest parties that sent the largest values last iteration.
    fn late_victims(&self, view: &AdversaryView<'_>, rng: &mut ChaCha8Rng) -> BTreeSet<PartyId> {
        let t = self.ctx.t;
        let previous = view.round.checked_sub(3).and_then(|r| self.position(r).map(|p| (r, p)));
        if let Some((r, pos)) = previous {
            if matches!(pos.phase.kind, PhaseKind::RealAa { .. }) && pos.stage == Stage::Send {
                let mut sent: Vec<(f64, PartyId)> = honest_sends(view, r)
                    .into_iter()
                    .filter_map(|(p, b)| decode_value(&b).map(|x| (x, p)))
                    .collect();
                sent.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                if sent.len() >= t {
                    return sent.into_iter().take(t).map(|(_, p)| p).collect();
                }
            }
        }
        random_subset(self.ctx.n, t, rng)
    }
}

/// The median honest value of the current iteration.
fn camouflage(view: &AdversaryView<'_>, pos: &Position) -> Option<Bytes> {
    let mut xs: Vec<f64> = honest_sends(view, pos.first)
        .iter()
        .filter_map(|(_, b)| decode_value(b))
        .collect();
    xs.sort_by(f64::total_cmp);
    xs.get(xs.len() / 2).map(|&x| encode_value(x))
}

fn random_subset(n: usize, t: usize, rng: &mut ChaCha8Rng) -> BTreeSet<PartyId> {
    sample(rng, n, t).into_iter().map(PartyId::from_slot).collect()
}

impl Adversary for Registered {
    fn corrupt(&mut self, view: &AdversaryView<'_>, rng: &mut ChaCha8Rng) -> BTreeSet<PartyId> {
        if !view.corrupted.is_empty() || self.ctx.t == 0 {
            return view.corrupted.clone();
        }
        match self.behavior {
            Behavior::AdaptiveLate => {
                if Some(view.round) == self.late_round() {
                    self.late_victims(view, rng)
                } else {
                    BTreeSet::new()
                }
            }
            _ if view.round == 1 => random_subset(self.ctx.n, self.ctx.t, rng),
            _ => BTreeSet::new(),
        }
    }

    fn byzantine_send(
        &mut self,
        view: &AdversaryView<'_>,
        party: PartyId,
        rng: &mut ChaCha8Rng,
    ) -> Vec<Outgoing> {
        let Some(pos) = self.position(view.round) else {
            return Vec::new();
        };
        match self.behavior {
            Behavior::Silent => Vec::new(),
            Behavior::SkewHigh | Behavior::SkewLow => self.skew_send(view, &pos, party),
            Behavior::Equivocator => self.equivocate(view, &pos, party, rng),
            Behavior::SplitWorld | Behavior::AdaptiveLate => self.split_send(view, &pos, party),
        }
    }
}

/// End of the root path the skew-high attack pushes toward.
pub fn farthest_from_root(tree: &LabeledTree) -> VertexId {
    deepest_below(tree, &TreePath::single(tree.root())).last()
}
