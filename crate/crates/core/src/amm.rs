//! Cost-function automated market maker equivalent to the cross-entropy
//! market scoring rule.
//!
//! The maker quotes prices as the softmax of outstanding contract
//! quantities over the liquidity parameter `b`, raises cash according to
//! the log-sum-exp cost, and at termination pays each contract at the
//! probability set by the reference report instead of an observed outcome.
//! The defining identity is `b * S_CE(r, price(c)) = c . r - C(c)`, which
//! makes a trader's profit from moving the price equal `b` times their
//! market-scoring-rule payout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{MarketTranscript, ReferenceAssignment};
use crate::prob::Belief;
use crate::scoring::{ce_msr, cross_entropy_score, FloorPolicy};

/// Outstanding contracts per outcome plus the liquidity parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmmState {
    /// Contracts sold for outcomes 0 and 1 (contract units).
    pub quantities: [f64; 2],
    /// Liquidity parameter, score units per contract; larger means deeper.
    pub liquidity: f64,
}

impl AmmState {
    /// Fresh market: empty book.
    pub fn new(liquidity: f64) -> Result<Self> {
        if !liquidity.is_finite() || liquidity <= 0.0 {
            return Err(Error::Domain(format!(
                "liquidity {liquidity} must be positive and finite"
            )));
        }
        Ok(AmmState {
            quantities: [0.0, 0.0],
            liquidity,
        })
    }

    /// Book whose opening price equals `opening`, with zero-sum quantities.
    pub fn with_price(opening: Belief, liquidity: f64) -> Result<Self> {
        let empty = AmmState::new(liquidity)?;
        Ok(trade_to_belief(&empty, opening)?.0)
    }
}

/// Cash raised so far: `b * ln(sum_i e^(c_i / b))`, computed with the
/// max-shift so huge quantity imbalances cannot overflow.
pub fn cost(state: &AmmState) -> f64 {
    let b = state.liquidity;
    let m = state.quantities[0].max(state.quantities[1]);
    let sum: f64 = state.quantities.iter().map(|&c| ((c - m) / b).exp()).sum();
    m + b * sum.ln()
}

/// Instantaneous prices: the softmax of `c / b`. Summing to 1 is structural
/// because the belief stores one coordinate and derives the other.
pub fn price(state: &AmmState) -> Belief {
    let b = state.liquidity;
    let m = state.quantities[0].max(state.quantities[1]);
    let e0 = ((state.quantities[0] - m) / b).exp();
    let e1 = ((state.quantities[1] - m) / b).exp();
    Belief::new(e1 / (e0 + e1)).expect("softmax output in [0, 1]")
}

/// Buys/sells whatever moves the price to `target`; returns the new state
/// and the trader's cash outlay `C(new) - C(old)` (negative means the
/// trader collects).
///
/// The softmax inverse is defined up to a common additive shift; the
/// zero-sum shift is chosen (the quantity sum is preserved), so every trade
/// is a pure spread trade and the coordinates stay bounded. The new state
/// comes straight from the target log-odds, which keeps the landing price
/// exact even when the starting book is lopsided.
pub fn trade_to_belief(state: &AmmState, target: Belief) -> Result<(AmmState, f64)> {
    if !target.is_interior() {
        return Err(Error::BoundaryBelief);
    }
    let b = state.liquidity;
    // price(new) = sigmoid((c1 - c0) / b) = target requires the quantity
    // spread to match the target log-odds.
    let spread = b * (target.p1().ln() - target.p0().ln());
    let total = state.quantities[0] + state.quantities[1];
    let new = AmmState {
        quantities: [0.5 * (total - spread), 0.5 * (total + spread)],
        liquidity: b,
    };
    let cash = cost(&new) - cost(state);
    Ok((new, cash))
}

/// Terminal accounting against the reference report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Settlement {
    /// Total paid to contract holders: `c . r`.
    pub holder_payout: f64,
    /// Maker's net loss: payouts minus cash raised.
    pub maker_loss: f64,
}

/// Contracts expire at the reference probabilities: quantity `c_i` pays
/// `c_i * r_i`, and the maker keeps `C(c)` of collected cash against it.
pub fn settle_amm(state: &AmmState, reference: Belief) -> Settlement {
    let holder_payout = state.quantities[0] * reference.p0() + state.quantities[1] * reference.p1();
    Settlement {
        holder_payout,
        maker_loss: holder_payout - cost(state),
    }
}

/// Max residual of the scoring-rule equivalence along a state path:
/// per state `b * S_CE(r, price(c)) - (c . r - C(c))`, and per consecutive
/// pair `b * S_CEM(r, q_t, q_{t-1}) - ((c_t - c_{t-1}) . r - (C_t - C_{t-1}))`.
pub fn equivalence_residual(path: &[AmmState], reference: Belief) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, state) in path.iter().enumerate() {
        let b = state.liquidity;
        let q = price(state);
        let lhs = b * cross_entropy_score(reference, q, FloorPolicy::None);
        let rhs = state.quantities[0] * reference.p0() + state.quantities[1] * reference.p1()
            - cost(state);
        worst = worst.max((lhs - rhs).abs());
        if i > 0 {
            let prev = &path[i - 1];
            let lhs = b * ce_msr(reference, q, price(prev), FloorPolicy::None);
            let dq = [
                state.quantities[0] - prev.quantities[0],
                state.quantities[1] - prev.quantities[1],
            ];
            let rhs = dq[0] * reference.p0() + dq[1] * reference.p1() - (cost(state) - cost(prev));
            worst = worst.max((lhs - rhs).abs());
        }
    }
    worst
}

/// One scored agent's market-scoring-rule payout replayed as a trade.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub agent: usize,
    /// Cash the agent paid to move the price (at trade time).
    pub cash_paid: f64,
    /// Settlement value of the contracts the agent acquired.
    pub contracts_value: f64,
    /// `contracts_value - cash_paid`.
    pub trading_profit: f64,
    /// The simulator payout scaled by the liquidity parameter.
    pub scaled_score: f64,
    pub residual: f64,
}

/// Replays a settled transcript through a maker with liquidity `b`: each
/// report becomes the trade that moves the price there, and each scored
/// agent's trading profit at their reference must equal `b` times their
/// scoring-rule payout.
pub fn replay_transcript(
    transcript: &MarketTranscript,
    initial_report: Belief,
    b: f64,
) -> Result<Vec<ReplayRecord>> {
    let mut state = AmmState::with_price(initial_report, b)?;
    let mut states = vec![state];
    for report in &transcript.reports {
        let (next, _) = trade_to_belief(&state, report.belief)?;
        states.push(next);
        state = next;
    }
    let reference_belief = |assignment: &ReferenceAssignment| -> Option<Belief> {
        match assignment {
            ReferenceAssignment::Scored { reference } => {
                Some(transcript.reports[reference - 1].belief)
            }
            _ => None,
        }
    };
    let mut out = Vec::new();
    for (idx, assignment) in transcript.reference_assignment.iter().enumerate() {
        let Some(r) = reference_belief(assignment) else {
            continue;
        };
        let (pre, post) = (&states[idx], &states[idx + 1]);
        let dq = [
            post.quantities[0] - pre.quantities[0],
            post.quantities[1] - pre.quantities[1],
        ];
        let cash_paid = cost(post) - cost(pre);
        let contracts_value = dq[0] * r.p0() + dq[1] * r.p1();
        let trading_profit = contracts_value - cash_paid;
        let scaled_score = b * transcript.payouts[idx];
        out.push(ReplayRecord {
            agent: idx + 1,
            cash_paid,
            contracts_value,
            trading_profit,
            scaled_score,
            residual: (trading_profit - scaled_score).abs(),
        });
    }
    Ok(out)
}
