//! Three-round graded broadcast, run as `n` parallel sender instances.
//!
//! Round 1 every sender sends its value. Round 2 every party echoes, per
//! instance, what it received; a value echoed by at least `n - t` parties
//! becomes that instance's candidate. Round 3 every party votes its
//! candidates; `n - t` votes give grade 2, `t + 1` votes give grade 1.
//!
//! Wire format of one message: a stage byte, a big-endian `u32` slot count,
//! then the slots. A slot is tag `0` for ⊥, or tag `1`, a big-endian `u32`
//! length and that many bytes. Round 1 carries one slot, rounds 2 and 3
//! carry `n`. Anything else decodes as an absent message.

use std::collections::BTreeSet;

use bytes::{BufMut, Bytes, BytesMut};
use thiserror::Error;

use crate::sim::{Inbox, Outgoing, PartyId, Protocol, Round};

pub const ROUNDS: Round = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[repr(u8)]
pub enum Stage {
    Send = 1,
    Echo = 2,
    Vote = 3,
}

impl Stage {
    /// Stage of the `round`-th round of an invocation (1-based, cyclic).
    pub fn of_round(round: Round) -> Stage {
        match (round - 1) % 3 {
            0 => Stage::Send,
            1 => Stage::Echo,
            _ => Stage::Vote,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("message truncated")]
    Truncated,
    #[error("expected stage {expected}, found {found}")]
    WrongStage { expected: u8, found: u8 },
    #[error("expected {expected} slots, found {found}")]
    WrongCount { expected: usize, found: usize },
    #[error("unknown slot tag {0}")]
    BadTag(u8),
    #[error("{0} trailing bytes")]
    Trailing(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GradedValue {
    pub value: Option<Bytes>,
    pub grade: u8,
}

impl GradedValue {
    pub fn bottom() -> Self {
        GradedValue {
            value: None,
            grade: 0,
        }
    }
}

pub fn encode_message(stage: Stage, slots: &[Option<Bytes>]) -> Bytes {
    let size: usize = slots
        .iter()
        .map(|s| 1 + s.as_ref().map_or(0, |b| 4 + b.len()))
        .sum();
    let mut buf = BytesMut::with_capacity(5 + size);
    buf.put_u8(stage as u8);
    buf.put_u32(slots.len() as u32);
    for slot in slots {
        match slot {
            None => buf.put_u8(0),
            Some(b) => {
                buf.put_u8(1);
                buf.put_u32(b.len() as u32);
                buf.put_slice(b);
            }
        }
    }
    buf.freeze()
}

pub fn decode_message(stage: Stage, count: usize, msg: &Bytes) -> Result<Vec<Option<Bytes>>, CodecError> {
    let take = |pos: usize, len: usize| -> Result<usize, CodecError> {
        pos.checked_add(len)
            .filter(|&end| end <= msg.len())
            .ok_or(CodecError::Truncated)
    };
    let read_u32 = |pos: usize| -> Result<u32, CodecError> {
        let end = take(pos, 4)?;
        Ok(u32::from_be_bytes(msg[pos..end].try_into().expect("4 bytes")))
    };

    let found = *msg.first().ok_or(CodecError::Truncated)?;
    if found != stage as u8 {
        return Err(CodecError::WrongStage {
            expected: stage as u8,
            found,
        });
    }
    let n = read_u32(1)? as usize;
    if n != count {
        return Err(CodecError::WrongCount {
            expected: count,
            found: n,
        });
    }
    let mut pos = 5;
    let mut slots = Vec::with_capacity(count);
    for _ in 0..count {
        let end = take(pos, 1)?;
        let tag = msg[pos];
        pos = end;
        match tag {
            0 => slots.push(None),
            1 => {
                let len = read_u32(pos)? as usize;
                let start = pos + 4;
                let end = take(start, len)?;
                slots.push(Some(msg.slice(start..end)));
                pos = end;
            }
            t => return Err(CodecError::BadTag(t)),
        }
    }
    if pos != msg.len() {
        return Err(CodecError::Trailing(msg.len() - pos));
    }
    Ok(slots)
}

/// The value reaching `threshold` among `votes`, if any. When several do
/// (impossible with honest thresholds) the most supported, then smallest, wins.
fn winner<'a>(votes: impl Iterator<Item = &'a Bytes>, threshold: usize) -> Option<(Bytes, usize)> {
    let mut tally: Vec<(&Bytes, usize)> = Vec::new();
    for v in votes {
        match tally.iter_mut().find(|(w, _)| *w == v) {
            Some(entry) => entry.1 += 1,
            None => tally.push((v, 1)),
        }
    }
    tally
        .into_iter()
        .filter(|&(_, c)| c >= threshold)
        .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(a.0)))
        .map(|(v, c)| (v.clone(), c))
}

/// One party's state for one gradecast invocation.
///
/// Senders in `ignore` are treated as if they had sent ⊥: this party echoes
/// and votes ⊥ in their instances.
#[derive(Debug, Clone)]
pub struct Gradecast {
    n: usize,
    t: usize,
    value: Bytes,
    ignore: BTreeSet<PartyId>,
    received: Vec<Option<Bytes>>,
    candidates: Vec<Option<Bytes>>,
    result: Option<Vec<GradedValue>>,
}

impl Gradecast {
    pub fn new(n: usize, t: usize, value: Bytes, ignore: BTreeSet<PartyId>) -> Self {
        Gradecast {
            n,
            t,
            value,
            ignore,
            received: vec![None; n],
            candidates: vec![None; n],
            result: None,
        }
    }

    /// The message this party broadcasts in `stage`.
    pub fn message(&self, stage: Stage) -> Bytes {
        match stage {
            Stage::Send => encode_message(stage, &[Some(self.value.clone())]),
            Stage::Echo => encode_message(stage, &self.received),
            Stage::Vote => encode_message(stage, &self.candidates),
        }
    }

    fn decoded(&self, stage: Stage, inbox: &Inbox) -> Vec<Option<Vec<Option<Bytes>>>> {
        let count = if stage == Stage::Send { 1 } else { self.n };
        PartyId::all(self.n)
            .map(|p| {
                inbox
                    .from_sender(p)
                    .and_then(|m| decode_message(stage, count, m).ok())
            })
            .collect()
    }

    pub fn absorb(&mut self, stage: Stage, inbox: &Inbox) {
        let msgs = self.decoded(stage, inbox);
        match stage {
            Stage::Send => {
                for (k, m) in msgs.into_iter().enumerate() {
                    let ignored = self.ignore.contains(&PartyId::from_slot(k));
                    self.received[k] = if ignored {
                        None
                    } else {
                        m.and_then(|mut s| s.pop().flatten())
                    };
                }
            }
            Stage::Echo => {
                for k in 0..self.n {
                    let echoes = msgs.iter().flatten().filter_map(|s| s[k].as_ref());
                    self.candidates[k] = if self.ignore.contains(&PartyId::from_slot(k)) {
                        None
                    } else {
                        winner(echoes, self.n - self.t).map(|(v, _)| v)
                    };
                }
            }
            Stage::Vote => {
                let mut out = Vec::with_capacity(self.n);
                for k in 0..self.n {
                    let votes = msgs.iter().flatten().filter_map(|s| s[k].as_ref());
                    out.push(match winner(votes, self.t + 1) {
                        Some((v, c)) if c >= self.n - self.t => GradedValue {
                            value: Some(v),
                            grade: 2,
                        },
                        Some((v, _)) => GradedValue {
                            value: Some(v),
                            grade: 1,
                        },
                        None => GradedValue::bottom(),
                    });
                }
                self.result = Some(out);
            }
        }
    }

    /// Round-1 values per sender slot, as echoed in round 2.
    pub fn received(&self) -> &[Option<Bytes>] {
        &self.received
    }

    /// Candidates per sender slot, as voted in round 3.
    pub fn candidates(&self) -> &[Option<Bytes>] {
        &self.candidates
    }

    /// Graded values indexed by sender slot, once round 3 is absorbed.
    pub fn result(&self) -> Option<&[GradedValue]> {
        self.result.as_deref()
    }
}

/// A standalone gradecast invocation as a simulator protocol.
#[derive(Debug, Clone)]
pub struct GradecastParty {
    n: usize,
    inner: Gradecast,
}

impl GradecastParty {
    pub fn new(n: usize, t: usize, value: Bytes) -> Self {
        GradecastParty {
            n,
            inner: Gradecast::new(n, t, value, BTreeSet::new()),
        }
    }
}

impl Protocol for GradecastParty {
    type Output = Vec<GradedValue>;

    fn send(&mut self, round: Round) -> Vec<Outgoing> {
        Outgoing::broadcast(self.n, self.inner.message(Stage::of_round(round)))
    }

    fn receive(&mut self, round: Round, inbox: &Inbox) {
        self.inner.absorb(Stage::of_round(round), inbox);
    }

    fn output(&self) -> Option<Self::Output> {
        self.inner.result().map(|r| r.to_vec())
    }
}
