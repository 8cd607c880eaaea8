//! Real-valued approximate agreement: a fixed number of iterations, each a
//! gradecast of the current value followed by a trimmed mean.
//!
//! A sender whose gradecast arrives with grade at most 1 is blacklisted and
//! from then on this party echoes and votes ⊥ in its instances, so once every
//! honest party has blacklisted it the sender only ever gets grade 0.
//! Trimming removes `t - missing` values from each side, where `missing`
//! counts senders without a usable grade 1 or 2 value. Missing senders are
//! always faulty, so what is left to trim bounds the faulty values present.

use std::collections::BTreeSet;

use bytes::Bytes;
use thiserror::Error;

use crate::gradecast::{GradedValue, Gradecast, Stage};
use crate::sim::{
    run_simulation, Adversary, Inbox, Outgoing, PartyId, Protocol, Round, SimConfig, SimError,
    SimOutcome,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RealAaError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("only {usable} usable values with n={n}, t={t}")]
    InsufficientValues { usable: usize, n: usize, t: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
}

pub fn check_resilience(n: usize, t: usize) -> Result<(), RealAaError> {
    if n <= 3 * t {
        return Err(RealAaError::InvalidParams(format!("need n > 3t, got n={n}, t={t}")));
    }
    Ok(())
}

/// Smallest `R >= 0` with `d * t^R / (R^R (n-2t)^R) <= epsilon`.
pub fn plan_iterations(n: usize, t: usize, d_bound: f64, epsilon: f64) -> Result<u32, RealAaError> {
    check_resilience(n, t)?;
    if !(d_bound > 0.0 && d_bound.is_finite()) {
        return Err(RealAaError::InvalidParams(format!("d_bound must be positive, got {d_bound}")));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(RealAaError::InvalidParams(format!("epsilon must be positive, got {epsilon}")));
    }
    let mut r = 0u32;
    while !within(d_bound, epsilon, t as f64, r, (n - 2 * t) as f64) {
        r += 1;
    }
    Ok(r)
}

/// Whether `d * t^r / (r^r m^r) <= eps`, with `0^0 = 1`.
fn within(d: f64, eps: f64, t: f64, r: u32, m: f64) -> bool {
    if r == 0 {
        return d <= eps;
    }
    if t == 0.0 {
        return true;
    }
    let e = r as i32;
    let num = d * t.powi(e);
    let den = eps * (r as f64).powi(e) * m.powi(e);
    if num.is_finite() && den.is_finite() && den > 0.0 {
        num <= den
    } else {
        d.ln() + r as f64 * t.ln() <= eps.ln() + r as f64 * ((r as f64).ln() + m.ln())
    }
}

pub fn encode_value(x: f64) -> Bytes {
    Bytes::copy_from_slice(&x.to_be_bytes())
}

/// A finite double from exactly 8 big-endian bytes.
pub fn decode_value(b: &[u8]) -> Option<f64> {
    let arr: [u8; 8] = b.try_into().ok()?;
    Some(f64::from_be_bytes(arr)).filter(|x| x.is_finite())
}

pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// One iteration's update from the gradecast results, indexed by sender slot.
pub fn trim_mean_update(
    received: &[GradedValue],
    prior_blacklist: &BTreeSet<PartyId>,
    n: usize,
    t: usize,
) -> Result<(f64, BTreeSet<PartyId>), RealAaError> {
    let mut blacklist = prior_blacklist.clone();
    let mut w = Vec::with_capacity(received.len());
    for (slot, g) in received.iter().enumerate() {
        let value = g.value.as_deref().and_then(decode_value);
        match value {
            Some(x) if g.grade >= 1 => w.push(x),
            _ => {}
        }
        if g.grade <= 1 || value.is_none() {
            blacklist.insert(PartyId::from_slot(slot));
        }
    }
    let missing = n.saturating_sub(w.len());
    if missing > t || w.is_empty() {
        return Err(RealAaError::InsufficientValues { usable: w.len(), n, t });
    }
    let trim = t - missing;
    w.sort_by(f64::total_cmp);
    let kept = &w[trim..w.len() - trim];
    Ok((pairwise_sum(kept) / kept.len() as f64, blacklist))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealAaOutput {
    pub value: f64,
    /// Value at every iteration boundary, starting with the input.
    pub trajectory: Vec<f64>,
    pub blacklist: BTreeSet<PartyId>,
}

/// One party running `plan` iterations.
#[derive(Debug, Clone)]
pub struct RealAaParty {
    n: usize,
    t: usize,
    plan: u32,
    value: f64,
    blacklist: BTreeSet<PartyId>,
    current: Option<Gradecast>,
    trajectory: Vec<f64>,
}

impl RealAaParty {
    pub fn new(n: usize, t: usize, plan: u32, input: f64) -> Self {
        RealAaParty {
            n,
            t,
            plan,
            value: input,
            blacklist: BTreeSet::new(),
            current: None,
            trajectory: vec![input],
        }
    }

    pub fn rounds(&self) -> Round {
        3 * self.plan
    }

    fn iteration(&self) -> u32 {
        self.trajectory.len() as u32 - 1
    }
}

impl Protocol for RealAaParty {
    type Output = RealAaOutput;

    fn send(&mut self, round: Round) -> Vec<Outgoing> {
        let stage = Stage::of_round(round);
        let gc = self.current.get_or_insert_with(|| {
            Gradecast::new(self.n, self.t, encode_value(self.value), self.blacklist.clone())
        });
        Outgoing::broadcast(self.n, gc.message(stage))
    }

    fn receive(&mut self, round: Round, inbox: &Inbox) {
        let stage = Stage::of_round(round);
        let Some(gc) = self.current.as_mut() else {
            return;
        };
        gc.absorb(stage, inbox);
        if stage == Stage::Vote {
            let result = gc.result().expect("vote stage yields a result").to_vec();
            self.current = None;
            // Unreachable failures leave the value unchanged.
            if let Ok((value, blacklist)) = trim_mean_update(&result, &self.blacklist, self.n, self.t) {
                self.value = value;
                self.blacklist = blacklist;
            }
            self.trajectory.push(self.value);
        }
    }

    fn output(&self) -> Option<Self::Output> {
        (self.iteration() >= self.plan).then(|| RealAaOutput {
            value: self.value,
            trajectory: self.trajectory.clone(),
            blacklist: self.blacklist.clone(),
        })
    }
}

/// Run real-valued AA with one input per party and the given adversary.
pub fn run_real_aa(
    inputs: &[f64],
    t: usize,
    d_bound: f64,
    epsilon: f64,
    adversary: &mut dyn Adversary,
    seed: u64,
) -> Result<SimOutcome<RealAaOutput>, RealAaError> {
    let n = inputs.len();
    let plan = plan_iterations(n, t, d_bound, epsilon)?;
    let parties = inputs.iter().map(|&x| RealAaParty::new(n, t, plan, x)).collect();
    let config = SimConfig {
        n,
        t,
        seed,
        round_cap: 10 * (3 + 3 * plan),
    };
    Ok(run_simulation(&config, parties, adversary)?)
}
