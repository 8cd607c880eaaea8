//! Round-complexity bound calculators.
//!
//! `k_bound` is the distance two honest outputs can be forced apart after
//! `R` rounds: `D` times the largest product of `R` positive integers summing
//! to at most `t`, divided by `(n + t)^R`.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub n: usize,
    pub t: usize,
    pub rounds: u32,
    pub d: f64,
}

impl BoundParams {
    fn validate(&self) -> Result<(), BoundsError> {
        if self.n <= self.t {
            return Err(BoundsError::InvalidParams(format!("need n > t, got n={}, t={}", self.n, self.t)));
        }
        if self.rounds == 0 {
            return Err(BoundsError::InvalidParams("need at least one round".into()));
        }
        if !(self.d > 0.0 && self.d.is_finite()) {
            return Err(BoundsError::InvalidParams(format!("d must be positive, got {}", self.d)));
        }
        Ok(())
    }
}

/// `exp(log_num - log_den)`, or the direct quotient when both sides are representable.
fn quotient(num: f64, den: f64, log_num: f64, log_den: f64) -> f64 {
    if num.is_finite() && den.is_finite() && den > 0.0 {
        num / den
    } else {
        (log_num - log_den).exp()
    }
}

/// Largest product of `r` positive integers with sum at most `t`, as
/// (value, natural log). Zero when `t < r`.
pub fn max_partition_product(t: usize, r: u32) -> (f64, f64) {
    let r = r as usize;
    if t < r || r == 0 {
        return (0.0, f64::NEG_INFINITY);
    }
    let (q, extra) = (t / r, t % r);
    let value = ((q + 1) as f64).powi(extra as i32) * (q as f64).powi((r - extra) as i32);
    let log = extra as f64 * ((q + 1) as f64).ln() + (r - extra) as f64 * (q as f64).ln();
    (value, log)
}

pub fn k_bound(p: &BoundParams) -> Result<f64, BoundsError> {
    p.validate()?;
    let (prod, log_prod) = max_partition_product(p.t, p.rounds);
    if prod == 0.0 {
        return Ok(0.0);
    }
    let r = p.rounds as i32;
    let base = (p.n + p.t) as f64;
    Ok(quotient(
        p.d * prod,
        base.powi(r),
        p.d.ln() + log_prod,
        r as f64 * base.ln(),
    ))
}

pub fn k_bound_simple(p: &BoundParams) -> Result<f64, BoundsError> {
    p.validate()?;
    if p.t == 0 {
        return Ok(0.0);
    }
    let r = p.rounds as i32;
    let (t, rf, base) = (p.t as f64, p.rounds as f64, (p.n + p.t) as f64);
    Ok(quotient(
        p.d * t.powi(r),
        rf.powi(r) * base.powi(r),
        p.d.ln() + rf * t.ln(),
        rf * (rf.ln() + base.ln()),
    ))
}

/// Smallest `R >= 1` with `k_bound_simple <= 1`.
pub fn lb_rounds(n: usize, t: usize, d: f64) -> Result<u32, BoundsError> {
    if t == 0 || n <= t {
        return Err(BoundsError::InvalidParams(format!("need n > t >= 1, got n={n}, t={t}")));
    }
    if !(d > 1.0 && d.is_finite()) {
        return Err(BoundsError::InvalidParams(format!("need d > 1, got {d}")));
    }
    let mut rounds = 1;
    while k_bound_simple(&BoundParams { n, t, rounds, d })? > 1.0 {
        rounds += 1;
    }
    Ok(rounds)
}
