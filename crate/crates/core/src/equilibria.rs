//! Equilibrium analysis: exact expected-payoff evaluation of deviations,
//! auditing the truthful profile against the epsilon bound, and the payoff
//! structure of the uninformative, switching, and permutation profiles.
//!
//! The audit fixes a realized history for agents `1..=t`, places the
//! reference `k` steps downstream, and computes the exact expected gain of
//! each deviation by enumerating `(Y, downstream signals)` — truthful
//! downstream agents update on the deviation per the belief rules (invert
//! if consistent, ignore otherwise). Spaces too large to enumerate fall
//! back to seeded Monte Carlo with a reported standard error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::d_hat_eta;
use crate::error::{Error, Result};
use crate::expectation::{expected_reference_posterior, DeviationContext};
use crate::market::{run_market, settle, MarketConfig, MarketTranscript, Strategy};
use crate::prob::{aggregate_posterior, invert_report, posterior, Belief, Scenario, SignalModel};
use crate::product::{for_each_lex, product_size};
use crate::scoring::{ce_msr, kl_divergence, FloorPolicy, Score};

/// A unilateral deviation by the audited agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Deviation {
    /// Report the posterior the given signal would induce.
    Signal(usize),
    /// Report an arbitrary belief; downstream agents invert it if it is
    /// consistent with the reporter's structure and ignore it otherwise.
    OffStructure(Belief),
}

/// Audit parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    /// Reference distance: the reference agent sits `k` arrivals after the
    /// audited agent and so holds `k` private informational substitutes.
    pub k: usize,
    /// The incentive target the profile is audited against.
    pub epsilon: f64,
    pub floor: FloorPolicy,
    /// Opening market report `q^(0)`.
    pub initial_report: Belief,
    /// Number of off-structure probe reports, spread uniformly inside (0, 1).
    pub off_structure_grid: usize,
    /// Exact enumeration is used while `2 * |downstream product space|`
    /// stays at or below this; beyond it the gain is estimated.
    pub enumeration_cap: usize,
    pub mc_samples: usize,
    pub mc_seed: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            k: 1,
            epsilon: 0.01,
            floor: FloorPolicy::None,
            initial_report: Belief::HALF,
            off_structure_grid: 99,
            enumeration_cap: 1_000_000,
            mc_samples: 100_000,
            mc_seed: 0,
        }
    }
}

/// An exact or estimated expected deviation gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainEstimate {
    pub gain: f64,
    /// True when the downstream space exceeded the enumeration cap and the
    /// gain is a Monte Carlo estimate.
    pub estimated: bool,
    pub std_error: Option<f64>,
}

/// One audited deviation with its adjustment term and closed-form gain bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationRecord {
    pub deviation: Deviation,
    #[serde(with = "crate::emit::score_serde")]
    pub gain: f64,
    pub estimated: bool,
    pub std_error: Option<f64>,
    /// Adjustment of the agent's expectation of the reference's posterior.
    pub delta: f64,
    /// The market-scoring-rule gain bound evaluated at this adjustment.
    #[serde(with = "crate::emit::score_serde")]
    pub bound: f64,
}

/// Per-agent audit result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationAudit {
    pub agent: usize,
    pub epsilon: f64,
    #[serde(with = "crate::emit::score_serde")]
    pub max_gain: f64,
    pub pass: bool,
    pub records: Vec<DeviationRecord>,
}

/// The audited agent's position in the realized market.
struct AuditFrame<'a> {
    /// Market prior before the agent's report, `y^(t-1)`.
    y_prev: Belief,
    /// The agent's true signal and model.
    x_t: usize,
    t_model: &'a SignalModel,
    /// Truthful report `p^(t)`.
    p_t: Belief,
    /// Models of agents `t+1 ..= t+k` (the reference's substitutes).
    downstream: &'a [SignalModel],
}

fn frame<'a>(scenario: &'a Scenario, k: usize, t: usize) -> Result<AuditFrame<'a>> {
    if t == 0 {
        return Err(Error::Config("agents are 1-based".into()));
    }
    if t + k > scenario.models.len() {
        return Err(Error::Config(format!(
            "agent {t} with reference distance {k} needs {} models, have {}",
            t + k,
            scenario.models.len()
        )));
    }
    let signals = scenario
        .realized_signals
        .as_ref()
        .ok_or_else(|| Error::Config("audit needs realized signals".into()))?;
    if signals.len() < t {
        return Err(Error::Config(format!(
            "audit of agent {t} needs {t} realized signals, have {}",
            signals.len()
        )));
    }
    let y_prev = aggregate_posterior(scenario.prior, &scenario.models[..t - 1], &signals[..t - 1])?;
    let x_t = signals[t - 1];
    let t_model = &scenario.models[t - 1];
    let p_t = posterior(y_prev, t_model, x_t)?;
    Ok(AuditFrame {
        y_prev,
        x_t,
        t_model,
        p_t,
        downstream: &scenario.models[t..t + k],
    })
}

/// The claimed signal the deviation induces in observers, and the belief
/// actually scored.
fn interpret(frame: &AuditFrame, deviation: &Deviation) -> Result<(Option<usize>, Belief)> {
    match deviation {
        Deviation::Signal(s) => {
            let q = posterior(frame.y_prev, frame.t_model, *s)?;
            Ok((Some(*s), q))
        }
        Deviation::OffStructure(q) => Ok((invert_report(frame.t_model, frame.y_prev, *q), *q)),
    }
}

/// Exact (or estimated) expected gain of deviating versus reporting
/// truthfully, conditioned on the audited agent's information.
///
/// The reference forms their posterior from the shared history, the claimed
/// signal (if the deviation is invertible), and the `k` downstream signals;
/// the expectation runs over `(Y, downstream signals)` given the agent's
/// true information.
pub fn exact_deviation_gain(
    scenario: &Scenario,
    cfg: &AuditConfig,
    t: usize,
    deviation: &Deviation,
) -> Result<GainEstimate> {
    let fr = frame(scenario, cfg.k, t)?;
    let (claim, q_dev) = interpret(&fr, deviation)?;

    // Reference-side context from the agent's report under each hypothesis.
    let y_claim = match claim {
        Some(s) => posterior(fr.y_prev, fr.t_model, s)?,
        None => fr.y_prev,
    };
    let y_truth = fr.p_t;

    let dims: Vec<usize> = fr.downstream.iter().map(SignalModel::n_signals).collect();
    let space = product_size(&dims);

    let payoff_pair = |assignment: &[usize], omega: usize| -> (f64, f64) {
        let ref_dev =
            aggregate_posterior(y_claim, fr.downstream, assignment).expect("assignment in range");
        let ref_truth =
            aggregate_posterior(y_truth, fr.downstream, assignment).expect("assignment in range");
        let like: f64 = fr
            .downstream
            .iter()
            .zip(assignment)
            .map(|(m, &s)| m.likelihood(s, omega))
            .product();
        let dev = ce_msr(ref_dev, q_dev, fr.y_prev, cfg.floor);
        let truth = ce_msr(ref_truth, fr.p_t, fr.y_prev, cfg.floor);
        (like * dev, like * truth)
    };

    match space {
        Some(size) if 2 * size <= cfg.enumeration_cap => {
            let mut gain = 0.0;
            for omega in [0usize, 1usize] {
                let w = fr.p_t.prob(omega);
                let mut dev_sum = 0.0;
                let mut truth_sum = 0.0;
                for_each_lex(&dims, |assignment| {
                    let (d, tr) = payoff_pair(assignment, omega);
                    dev_sum += d;
                    truth_sum += tr;
                });
                gain += w * (dev_sum - truth_sum);
            }
            Ok(GainEstimate {
                gain,
                estimated: false,
                std_error: None,
            })
        }
        _ => {
            // Paired Monte Carlo: the sampling law of (Y, downstream
            // signals) does not depend on the report.
            let mut rng = ChaCha12Rng::seed_from_u64(cfg.mc_seed);
            let n = cfg.mc_samples.max(2);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            let mut assignment = vec![0usize; dims.len()];
            for _ in 0..n {
                let omega = if rng.random::<f64>() < fr.p_t.p1() {
                    1
                } else {
                    0
                };
                for (j, m) in fr.downstream.iter().enumerate() {
                    let u = rng.random::<f64>();
                    let mut cum = 0.0;
                    assignment[j] = m.n_signals() - 1;
                    for s in 0..m.n_signals() {
                        cum += m.likelihood(s, omega);
                        if u < cum {
                            assignment[j] = s;
                            break;
                        }
                    }
                }
                let ref_dev = aggregate_posterior(y_claim, fr.downstream, &assignment)?;
                let ref_truth = aggregate_posterior(y_truth, fr.downstream, &assignment)?;
                let diff = ce_msr(ref_dev, q_dev, fr.y_prev, cfg.floor)
                    - ce_msr(ref_truth, fr.p_t, fr.y_prev, cfg.floor);
                sum += diff;
                sum_sq += diff * diff;
            }
            let mean = sum / n as f64;
            let var = (sum_sq / n as f64 - mean * mean).max(0.0);
            Ok(GainEstimate {
                gain: mean,
                estimated: true,
                std_error: Some((var / n as f64).sqrt()),
            })
        }
    }
}

/// The adjustment term of a deviation, computed through the expectation
/// module from the audited agent's frame.
pub fn deviation_delta(
    scenario: &Scenario,
    cfg: &AuditConfig,
    t: usize,
    deviation: &Deviation,
) -> Result<f64> {
    let fr = frame(scenario, cfg.k, t)?;
    let (claim, _) = interpret(&fr, deviation)?;
    let signals = scenario.realized_signals.as_ref().expect("frame checked");
    let ctx = DeviationContext {
        prior: scenario.prior,
        shared: scenario.models[..t - 1]
            .iter()
            .cloned()
            .zip(signals[..t - 1].iter().copied())
            .collect(),
        t_model: fr.t_model.clone(),
        t_true_signal: fr.x_t,
        t_reported_signal: claim,
        ref_models: fr.downstream.to_vec(),
    };
    Ok(expected_reference_posterior(&ctx)?.delta)
}

/// Audits every agent that has a reference `k` steps downstream: all
/// signal-consistent misreports plus a grid of off-structure probes.
pub fn audit_epsilon_pbe(scenario: &Scenario, cfg: &AuditConfig) -> Result<Vec<DeviationAudit>> {
    scenario.validate()?;
    if cfg.k == 0 {
        return Err(Error::Config("reference distance k must be >= 1".into()));
    }
    let m = scenario.models.len();
    if m <= cfg.k {
        return Err(Error::Config(format!(
            "no audited agents: roster {m} with reference distance {}",
            cfg.k
        )));
    }
    let eta = scenario.pool_eta();
    let mut audits = Vec::new();
    for t in 1..=(m - cfg.k) {
        let fr = frame(scenario, cfg.k, t)?;
        let mut deviations: Vec<Deviation> = (0..fr.t_model.n_signals())
            .filter(|&s| s != fr.x_t)
            .map(Deviation::Signal)
            .collect();
        let g = cfg.off_structure_grid;
        for i in 1..=g {
            let q = Belief::new(i as f64 / (g + 1) as f64)?;
            deviations.push(Deviation::OffStructure(q));
        }
        let y_prev = fr.y_prev;
        let mut records = Vec::with_capacity(deviations.len());
        let mut max_gain = f64::NEG_INFINITY;
        for deviation in deviations {
            let est = exact_deviation_gain(scenario, cfg, t, &deviation)?;
            let delta = deviation_delta(scenario, cfg, t, &deviation)?;
            // The closed form bounds nonnegative adjustments; a negative
            // adjustment is the positive adjustment of the relabeled
            // outcome, whose market prior is the complement.
            let bound = if delta >= 0.0 {
                d_hat_eta(delta, y_prev, eta)
            } else {
                d_hat_eta(-delta, y_prev.permuted(), eta)
            }
            .unwrap_or(f64::INFINITY);
            max_gain = max_gain.max(est.gain);
            records.push(DeviationRecord {
                deviation,
                gain: est.gain,
                estimated: est.estimated,
                std_error: est.std_error,
                delta,
                bound,
            });
        }
        audits.push(DeviationAudit {
            agent: t,
            epsilon: cfg.epsilon,
            max_gain,
            pass: max_gain <= cfg.epsilon + 1e-12,
            records,
        });
    }
    Ok(audits)
}

/// Payouts of the uninformative profile (everyone posts `q_bar`): the first
/// scored agent collects the full move from `q0`, everyone after improves
/// nothing and earns exactly zero.
pub fn uninformative_payoffs(q_bar: Belief, n_scored: usize, q0: Belief) -> Vec<Score> {
    let mut payouts = vec![0.0; n_scored];
    if n_scored > 0 {
        payouts[0] = kl_divergence(q_bar, q0);
    }
    payouts
}

/// Payouts of the alternating-extremes profile under a rolling window.
///
/// Reports alternate between the two vertices of the simplex starting from
/// `p1 = 0`; each of the `n - window` scored agents is judged by the report
/// `window` steps ahead. An even window aligns the reference with the
/// agent's own report: every scored agent from the second on collects an
/// infinite payoff without a floor, and the clamped analogue with one. An
/// odd window anti-aligns them and the payoffs are maximally negative.
pub fn switching_payoffs(
    n: usize,
    window: usize,
    q0: Belief,
    floor: FloorPolicy,
) -> Result<Vec<Score>> {
    if window == 0 {
        return Err(Error::Config("window must be >= 1".into()));
    }
    if n <= window {
        return Err(Error::Config(format!(
            "chain of {n} has no scored agents under window {window}"
        )));
    }
    let report = |step: usize| -> Belief {
        // step 0 is the opening report; odd steps post p1 = 0. Reports pass
        // through the market's floor at recording time, references included.
        floor.apply(if step == 0 {
            q0
        } else if step % 2 == 1 {
            Belief::new(0.0).expect("vertex")
        } else {
            Belief::new(1.0).expect("vertex")
        })
    };
    Ok((1..=n - window)
        .map(|t| {
            ce_msr(
                report(t + window),
                report(t),
                report(t - 1),
                FloorPolicy::None,
            )
        })
        .collect())
}

/// The scenario with the outcome labels swapped everywhere.
pub fn permute_scenario(scenario: &Scenario) -> Scenario {
    Scenario {
        prior: scenario.prior.permuted(),
        models: scenario.models.iter().map(SignalModel::permuted).collect(),
        realized_outcome: scenario.realized_outcome.map(|y| 1 - y),
        realized_signals: scenario.realized_signals.clone(),
    }
}

/// The transcript with every belief flipped and payouts resettled under the
/// flipped opening report. Score symmetry makes the payouts identical.
pub fn permute_transcript(
    transcript: &MarketTranscript,
    config: &MarketConfig,
) -> Result<MarketTranscript> {
    let mut flipped = transcript.clone();
    flipped.realized_outcome = 1 - transcript.realized_outcome;
    for r in &mut flipped.reports {
        r.belief = r.belief.permuted();
    }
    let flipped_config = MarketConfig {
        initial_report: config.initial_report.permuted(),
        ..*config
    };
    let (assignments, payouts, cost) = settle(&flipped.reports, &flipped_config)?;
    flipped.reference_assignment = assignments;
    flipped.payouts = payouts;
    flipped.mechanism_cost = cost;
    Ok(flipped)
}

/// Outcome of the relabeling-symmetry check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationCheck {
    /// Largest payout discrepancy between a run and its relabeling.
    pub max_payout_diff: f64,
    /// Whether permuting twice reproduced the original transcript, up to
    /// one unit of precision in the complement (`1 - (1 - p)` is not exact
    /// in floating point for every `p`).
    pub involution: bool,
    pub pass: bool,
}

fn ext_diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs()
    }
}

/// Transcript equality modulo complement rounding: integers exact, report
/// beliefs within one ulp of 1, payouts within the payout tolerance.
fn transcripts_agree(a: &MarketTranscript, b: &MarketTranscript) -> bool {
    a.realized_outcome == b.realized_outcome
        && a.terminal_step == b.terminal_step
        && a.reference_assignment == b.reference_assignment
        && a.reports.len() == b.reports.len()
        && a.reports.iter().zip(&b.reports).all(|(x, y)| {
            x.agent == y.agent
                && x.signal == y.signal
                && (x.belief.p1() - y.belief.p1()).abs() <= f64::EPSILON
        })
        && a.payouts
            .iter()
            .zip(&b.payouts)
            .all(|(&x, &y)| ext_diff(x, y) <= 1e-12)
        && ext_diff(a.mechanism_cost, b.mechanism_cost) <= 1e-12
}

/// Runs a market, relabels the outcome everywhere, and verifies that every
/// payout is unchanged and that relabeling twice is the identity.
pub fn permutation_invariance(
    config: &MarketConfig,
    scenario: &Scenario,
    strategies: &[Strategy],
) -> Result<PermutationCheck> {
    let transcript = run_market(config, scenario, strategies)?;
    let flipped = permute_transcript(&transcript, config)?;
    let max_payout_diff = transcript
        .payouts
        .iter()
        .zip(&flipped.payouts)
        .map(|(&a, &b)| ext_diff(a, b))
        .chain(std::iter::once(ext_diff(
            transcript.mechanism_cost,
            flipped.mechanism_cost,
        )))
        .fold(0.0, f64::max);
    let flipped_config = MarketConfig {
        initial_report: config.initial_report.permuted(),
        ..*config
    };
    let back = permute_transcript(&flipped, &flipped_config)?;
    let involution = transcripts_agree(&back, &transcript);
    Ok(PermutationCheck {
        max_payout_diff,
        involution,
        pass: max_payout_diff <= 1e-12 && involution,
    })
}
