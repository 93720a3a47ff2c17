//! Scoring rules: the log score, the cross-entropy score against a reference
//! belief, and the cross-entropy market scoring rule (the improvement form).
//!
//! All scores are in natural-log units (nats). Scores are extended reals:
//! under [`FloorPolicy::None`] a scored probability of exactly 0 produces an
//! infinite score (the switching equilibrium relies on this), while any
//! clamping floor keeps every score finite. Terms with a zero reference
//! weight are dropped (`0 * ln 0 = 0`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::Belief;

/// A payoff in nats; finite, `+inf`, or `-inf`.
pub type Score = f64;

/// How scored probabilities are kept away from the simplex boundary.
///
/// The simulator needs finite payouts, so it clamps; the equilibrium
/// analysis needs the unclamped extended reals. Both regimes are real, so
/// the policy is explicit everywhere a report gets scored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FloorPolicy {
    None,
    Clamp { p_min: f64 },
}

impl FloorPolicy {
    /// Simulator default: clamp at `1e-6`.
    pub const DEFAULT_P_MIN: f64 = 1e-6;

    pub fn simulator_default() -> Self {
        FloorPolicy::Clamp {
            p_min: Self::DEFAULT_P_MIN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            FloorPolicy::None => Ok(()),
            FloorPolicy::Clamp { p_min } => {
                if *p_min > 0.0 && *p_min < 0.5 {
                    Ok(())
                } else {
                    Err(Error::Domain(format!("p_min {p_min} not in (0, 0.5)")))
                }
            }
        }
    }

    /// Clamps `p1` into `[p_min, 1 - p_min]`; the complement follows.
    pub fn apply(&self, q: Belief) -> Belief {
        match self {
            FloorPolicy::None => q,
            FloorPolicy::Clamp { p_min } => {
                Belief::new(q.p1().clamp(*p_min, 1.0 - *p_min)).expect("clamped into [0, 1]")
            }
        }
    }
}

impl Default for FloorPolicy {
    fn default() -> Self {
        FloorPolicy::simulator_default()
    }
}

/// `ln` with the extended-real convention `ln 0 = -inf`.
fn xln(p: f64) -> f64 {
    p.ln()
}

/// Log scoring rule: `ln q_outcome`.
pub fn log_score(outcome: usize, q: Belief) -> Score {
    xln(q.prob(outcome))
}

/// Cross-entropy score `sum_i r_i ln q_i` of report `q` against reference
/// `r`, after applying the floor policy to `q`. Equals the expectation of
/// the log score under `r`, and is maximized over `q` at `q = r`.
pub fn cross_entropy_score(r: Belief, q: Belief, policy: FloorPolicy) -> Score {
    let q = policy.apply(q);
    let mut total = 0.0;
    for i in 0..2 {
        let ri = r.prob(i);
        if ri != 0.0 {
            total += ri * xln(q.prob(i));
        }
    }
    total
}

/// Cross-entropy market scoring rule: `sum_i r_i ln(q_t_i / q_prev_i)`,
/// the improvement of `q_t` over `q_prev` as judged by reference `r`.
/// Telescopes additively over a report chain.
pub fn ce_msr(r: Belief, q_t: Belief, q_prev: Belief, policy: FloorPolicy) -> Score {
    let q_t = policy.apply(q_t);
    let q_prev = policy.apply(q_prev);
    let mut total = 0.0;
    for i in 0..2 {
        let ri = r.prob(i);
        if ri != 0.0 {
            total += ri * (xln(q_t.prob(i)) - xln(q_prev.prob(i)));
        }
    }
    total
}

/// Shannon entropy of a binary belief, in nats.
pub fn entropy(p: Belief) -> Score {
    let mut h = 0.0;
    for i in 0..2 {
        let pi = p.prob(i);
        if pi != 0.0 {
            h -= pi * xln(pi);
        }
    }
    h
}

/// `KL(p || q) = sum_i p_i ln(p_i / q_i)`.
pub fn kl_divergence(p: Belief, q: Belief) -> Score {
    ce_msr(p, p, q, FloorPolicy::None)
}

/// Converts a score in nats to bits.
pub fn nats_to_bits(s: Score) -> Score {
    s / std::f64::consts::LN_2
}
