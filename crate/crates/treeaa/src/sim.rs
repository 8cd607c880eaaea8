//! Lockstep synchronous network with authenticated point-to-point channels
//! and a rushing, adaptive Byzantine adversary.
//!
//! Each round the adversary may first corrupt more parties, then every
//! honest party emits its messages, then the adversary (having seen all of
//! them) emits messages for the corrupted parties. Everything sent in round
//! `k` is delivered at the end of round `k`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use bytes::Bytes;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Round = u32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("round {round}: adversary strategy violation: {reason}")]
    StrategyViolation { round: Round, reason: String },
    #[error("honest parties still running after the round cap of {cap}")]
    NonTermination { cap: Round },
    #[error("corrupt transcript: {0}")]
    CorruptTranscript(String),
}

/// 1-based party index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartyId(u32);

impl PartyId {
    pub fn new(index: u32) -> Self {
        assert!(index >= 1, "party ids are 1-based");
        PartyId(index)
    }

    pub fn get(self) -> u32 {
        self.0
    }

    /// 0-based position, for indexing per-party vectors.
    pub fn slot(self) -> usize {
        (self.0 - 1) as usize
    }

    pub fn from_slot(slot: usize) -> Self {
        PartyId(slot as u32 + 1)
    }

    pub fn all(n: usize) -> impl Iterator<Item = PartyId> {
        (1..=n as u32).map(PartyId)
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundEnvelope {
    pub round: Round,
    pub sender: PartyId,
    pub receiver: PartyId,
    pub payload: Bytes,
}

/// A message as produced by a party; the simulator stamps sender and round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outgoing {
    pub to: PartyId,
    pub payload: Bytes,
}

impl Outgoing {
    pub fn broadcast(n: usize, payload: Bytes) -> Vec<Outgoing> {
        PartyId::all(n)
            .map(|to| Outgoing {
                to,
                payload: payload.clone(),
            })
            .collect()
    }
}

/// Messages delivered to one party in one round, ordered by sender.
#[derive(Debug, Clone, Default)]
pub struct Inbox {
    messages: Vec<RoundEnvelope>,
}

impl Inbox {
    pub fn new(mut messages: Vec<RoundEnvelope>) -> Self {
        messages.sort_by_key(|e| e.sender);
        Inbox { messages }
    }

    pub fn envelopes(&self) -> &[RoundEnvelope] {
        &self.messages
    }

    /// Payload of the first message from `sender`; later duplicates are ignored.
    pub fn from_sender(&self, sender: PartyId) -> Option<&Bytes> {
        let i = self.messages.partition_point(|e| e.sender < sender);
        self.messages
            .get(i)
            .filter(|e| e.sender == sender)
            .map(|e| &e.payload)
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }
}

/// A per-party round-driven state machine.
pub trait Protocol {
    type Output: Clone;

    fn send(&mut self, round: Round) -> Vec<Outgoing>;

    fn receive(&mut self, round: Round, inbox: &Inbox);

    fn output(&self) -> Option<Self::Output>;
}

/// What the adversary gets to look at before acting.
pub struct AdversaryView<'a> {
    pub round: Round,
    pub n: usize,
    pub t: usize,
    pub transcript: &'a Transcript,
    pub corrupted: &'a BTreeSet<PartyId>,
}

impl AdversaryView<'_> {
    pub fn is_honest(&self, p: PartyId) -> bool {
        !self.corrupted.contains(&p)
    }

    pub fn honest(&self) -> Vec<PartyId> {
        PartyId::all(self.n).filter(|p| self.is_honest(*p)).collect()
    }
}

pub trait Adversary {
    /// The cumulative corrupted set from this round on. Called at the start
    /// of every round, before any round message exists.
    fn corrupt(&mut self, view: &AdversaryView<'_>, rng: &mut ChaCha8Rng) -> BTreeSet<PartyId>;

    /// Messages for corrupted `party`; the view already holds this round's
    /// honest messages.
    fn byzantine_send(
        &mut self,
        view: &AdversaryView<'_>,
        party: PartyId,
        rng: &mut ChaCha8Rng,
    ) -> Vec<Outgoing>;
}

/// Never corrupts anybody.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoAdversary;

impl Adversary for NoAdversary {
    fn corrupt(&mut self, view: &AdversaryView<'_>, _: &mut ChaCha8Rng) -> BTreeSet<PartyId> {
        view.corrupted.clone()
    }

    fn byzantine_send(&mut self, _: &AdversaryView<'_>, _: PartyId, _: &mut ChaCha8Rng) -> Vec<Outgoing> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Corrupted,
    Output,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalEvent {
    pub round: Round,
    pub party: PartyId,
    pub kind: EventKind,
}

/// Every envelope of a run in delivery order, plus per-party events.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    pub envelopes: Vec<RoundEnvelope>,
    pub events: Vec<LocalEvent>,
}

#[derive(Serialize, Deserialize)]
struct Record {
    round: Round,
    sender: u32,
    receiver: u32,
    payload_hex: String,
}

impl Transcript {
    /// Envelopes of round `round`, assuming rounds are non-decreasing.
    pub fn round(&self, round: Round) -> &[RoundEnvelope] {
        let lo = self.envelopes.partition_point(|e| e.round < round);
        let hi = self.envelopes.partition_point(|e| e.round <= round);
        &self.envelopes[lo..hi]
    }

    pub fn last_round(&self) -> Round {
        self.envelopes.last().map_or(0, |e| e.round)
    }

    /// One JSON object per line: `{"round","sender","receiver","payload_hex"}`.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.envelopes {
            let rec = Record {
                round: e.round,
                sender: e.sender.get(),
                receiver: e.receiver.get(),
                payload_hex: hex::encode(&e.payload),
            };
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Parse the line format back. Ordering is checked by [`replay_transcript`].
    pub fn from_jsonl(text: &str) -> Result<Transcript, SimError> {
        let mut envelopes = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(line)
                .map_err(|e| SimError::CorruptTranscript(format!("line {}: {e}", i + 1)))?;
            if rec.sender == 0 || rec.receiver == 0 {
                return Err(SimError::CorruptTranscript(format!(
                    "line {}: party ids are 1-based",
                    i + 1
                )));
            }
            let payload = hex::decode(&rec.payload_hex)
                .map_err(|e| SimError::CorruptTranscript(format!("line {}: {e}", i + 1)))?;
            envelopes.push(RoundEnvelope {
                round: rec.round,
                sender: PartyId(rec.sender),
                receiver: PartyId(rec.receiver),
                payload: Bytes::from(payload),
            });
        }
        Ok(Transcript {
            envelopes,
            events: Vec::new(),
        })
    }
}

/// Per-party inboxes, one entry per round (index 0 is round 1).
pub type Replay = BTreeMap<PartyId, Vec<Vec<RoundEnvelope>>>;

/// Rebuild every party's per-round inbox from a transcript.
pub fn replay_transcript(tr: &Transcript) -> Result<Replay, SimError> {
    let mut last = 0;
    for (i, e) in tr.envelopes.iter().enumerate() {
        if e.round == 0 {
            return Err(SimError::CorruptTranscript(format!("envelope {i}: round 0")));
        }
        if e.round < last {
            return Err(SimError::CorruptTranscript(format!(
                "envelope {i}: round {} after round {last}",
                e.round
            )));
        }
        if e.sender.0 == 0 || e.receiver.0 == 0 {
            return Err(SimError::CorruptTranscript(format!("envelope {i}: party id 0")));
        }
        last = e.round;
    }
    let rounds = last as usize;
    let mut out: Replay = BTreeMap::new();
    for e in &tr.envelopes {
        out.entry(e.sender).or_insert_with(|| vec![Vec::new(); rounds]);
        out.entry(e.receiver)
            .or_insert_with(|| vec![Vec::new(); rounds])[e.round as usize - 1]
            .push(e.clone());
    }
    for inboxes in out.values_mut() {
        for inbox in inboxes {
            inbox.sort_by_key(|e| e.sender);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimConfig {
    pub n: usize,
    pub t: usize,
    pub seed: u64,
    pub round_cap: Round,
}

#[derive(Debug, Clone)]
pub struct SimOutcome<O> {
    /// Outputs of the parties still honest at the end.
    pub outputs: BTreeMap<PartyId, O>,
    pub corrupted: BTreeSet<PartyId>,
    pub rounds: Round,
    pub transcript: Transcript,
}

pub fn run_simulation<P: Protocol>(
    config: &SimConfig,
    mut parties: Vec<P>,
    adversary: &mut dyn Adversary,
) -> Result<SimOutcome<P::Output>, SimError> {
    let SimConfig { n, t, seed, round_cap } = *config;
    if n == 0 || t >= n {
        return Err(SimError::InvalidConfig(format!("need 0 <= t < n, got n={n}, t={t}")));
    }
    if parties.len() != n {
        return Err(SimError::InvalidConfig(format!(
            "{} party programs for n={n}",
            parties.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corrupted: BTreeSet<PartyId> = BTreeSet::new();
    let mut transcript = Transcript::default();
    let mut outputs: Vec<Option<P::Output>> = parties.iter().map(|p| p.output()).collect();
    let mut round: Round = 0;

    for (slot, out) in outputs.iter().enumerate() {
        if out.is_some() {
            transcript.events.push(LocalEvent {
                round: 0,
                party: PartyId::from_slot(slot),
                kind: EventKind::Output,
            });
        }
    }

    let running = |outputs: &[Option<P::Output>], corrupted: &BTreeSet<PartyId>| {
        PartyId::all(n).any(|p| !corrupted.contains(&p) && outputs[p.slot()].is_none())
    };

    while running(&outputs, &corrupted) {
        if round >= round_cap {
            return Err(SimError::NonTermination { cap: round_cap });
        }
        round += 1;

        let next = adversary.corrupt(
            &AdversaryView {
                round,
                n,
                t,
                transcript: &transcript,
                corrupted: &corrupted,
            },
            &mut rng,
        );
        if !next.is_superset(&corrupted) {
            return Err(SimError::StrategyViolation {
                round,
                reason: "corruption is permanent".into(),
            });
        }
        if next.len() > t {
            return Err(SimError::StrategyViolation {
                round,
                reason: format!("{} corrupted parties exceed t={t}", next.len()),
            });
        }
        if let Some(bad) = next.iter().find(|p| p.slot() >= n) {
            return Err(SimError::StrategyViolation {
                round,
                reason: format!("no such party {bad}"),
            });
        }
        for &p in next.difference(&corrupted) {
            transcript.events.push(LocalEvent {
                round,
                party: p,
                kind: EventKind::Corrupted,
            });
        }
        corrupted = next;

        let active: Vec<PartyId> = PartyId::all(n)
            .filter(|p| !corrupted.contains(p) && outputs[p.slot()].is_none())
            .collect();
        let start = transcript.envelopes.len();
        for &p in &active {
            for out in parties[p.slot()].send(round) {
                assert!(out.to.slot() < n, "{p} addressed unknown party {}", out.to);
                transcript.envelopes.push(RoundEnvelope {
                    round,
                    sender: p,
                    receiver: out.to,
                    payload: out.payload,
                });
            }
        }
        let byzantine: Vec<PartyId> = corrupted.iter().copied().collect();
        for b in byzantine {
            let msgs = adversary.byzantine_send(
                &AdversaryView {
                    round,
                    n,
                    t,
                    transcript: &transcript,
                    corrupted: &corrupted,
                },
                b,
                &mut rng,
            );
            for out in msgs {
                if out.to.slot() >= n {
                    return Err(SimError::StrategyViolation {
                        round,
                        reason: format!("{b} addressed unknown party {}", out.to),
                    });
                }
                transcript.envelopes.push(RoundEnvelope {
                    round,
                    sender: b,
                    receiver: out.to,
                    payload: out.payload,
                });
            }
        }

        let mut buckets: Vec<Vec<RoundEnvelope>> = vec![Vec::new(); n];
        for e in &transcript.envelopes[start..] {
            buckets[e.receiver.slot()].push(e.clone());
        }
        for &p in &active {
            let inbox = Inbox::new(std::mem::take(&mut buckets[p.slot()]));
            let party = &mut parties[p.slot()];
            party.receive(round, &inbox);
            if let Some(out) = party.output() {
                outputs[p.slot()] = Some(out);
                transcript.events.push(LocalEvent {
                    round,
                    party: p,
                    kind: EventKind::Output,
                });
            }
        }
    }

    let outputs = outputs
        .into_iter()
        .enumerate()
        .filter_map(|(slot, o)| {
            let p = PartyId::from_slot(slot);
            if corrupted.contains(&p) {
                None
            } else {
                o.map(|o| (p, o))
            }
        })
        .collect();
    Ok(SimOutcome {
        outputs,
        corrupted,
        rounds: round,
        transcript,
    })
}
