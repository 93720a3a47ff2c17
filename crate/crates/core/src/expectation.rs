//! Exact computation of an agent's expectation of their reference agent's
//! posterior, decomposed into the harmonic-mean mass `mu`, the report shift
//! `rho`, and the adjustment `delta = mu * rho`; plus the closed-form bound
//! on `|delta|` and its inversion to a substitute count.
//!
//! The setting: agent `t` holds private signal `x`, reports as if holding
//! `x_tilde` (or hides the report entirely), shares realized signals `x_s`
//! with the reference, and the reference privately observes one signal from
//! each of `k` conditionally independent models. The agent's expectation of
//! the reference's posterior is their own posterior plus `delta`; truthful
//! reporting makes `delta` vanish (the martingale property), and `|delta|`
//! decays geometrically in `k`.

use crate::error::{Error, Result};
use crate::prob::{aggregate_posterior, posterior, Belief, SignalModel};
use crate::product::for_each_lex;

/// Everything needed to evaluate a (mis)report's effect on the reference.
#[derive(Debug, Clone)]
pub struct DeviationContext {
    /// Common prior over the outcome before any conditioning.
    pub prior: Belief,
    /// Realized shared signals: the information both sides condition on.
    pub shared: Vec<(SignalModel, usize)>,
    /// Agent `t`'s information structure.
    pub t_model: SignalModel,
    /// The signal agent `t` actually holds.
    pub t_true_signal: usize,
    /// The signal agent `t` claims via their report; `None` when the
    /// reference never sees the report.
    pub t_reported_signal: Option<usize>,
    /// The reference's private informational substitutes.
    pub ref_models: Vec<SignalModel>,
}

impl DeviationContext {
    /// Posterior from the prior and shared signals alone.
    pub fn shared_posterior(&self) -> Result<Belief> {
        let mut p = self.prior;
        for (model, signal) in &self.shared {
            p = posterior(p, model, *signal)?;
        }
        Ok(p)
    }

    /// Agent `t`'s true posterior `P(Y=1 | x, x_s)`.
    pub fn truthful_posterior(&self) -> Result<Belief> {
        posterior(self.shared_posterior()?, &self.t_model, self.t_true_signal)
    }

    /// What the reference conditions on from agent `t`'s side:
    /// `P(Y=1 | x_tilde, x_s)`, or the shared posterior when hidden.
    pub fn claimed_posterior(&self) -> Result<Belief> {
        let shared = self.shared_posterior()?;
        match self.t_reported_signal {
            Some(s) => posterior(shared, &self.t_model, s),
            None => Ok(shared),
        }
    }

    fn ref_dims(&self) -> Vec<usize> {
        self.ref_models.iter().map(SignalModel::n_signals).collect()
    }

    /// `prod_j P(x_r_j | Y = outcome)` for a joint reference assignment.
    fn ref_likelihood(&self, assignment: &[usize], outcome: usize) -> f64 {
        self.ref_models
            .iter()
            .zip(assignment)
            .map(|(m, &s)| m.likelihood(s, outcome))
            .product()
    }
}

/// Sum over the reference's joint signal space of the half-harmonic means
/// of the joint probabilities `P(x_r, Y=omega | x_tilde, x_s)`.
///
/// Enumerates the product space lexicographically; exponential in the number
/// of reference models, which is fine because bound computations never
/// enumerate and verification runs at small `k`.
pub fn mu(ctx: &DeviationContext) -> Result<f64> {
    let claimed = ctx.claimed_posterior()?;
    let dims = ctx.ref_dims();
    let mut total = 0.0;
    for_each_lex(&dims, |assignment| {
        let a1 = ctx.ref_likelihood(assignment, 1) * claimed.p1();
        let a0 = ctx.ref_likelihood(assignment, 0) * claimed.p0();
        // 1 / (1/a1 + 1/a0), written to stay finite when one side is 0.
        total += (a1 * a0) / (a1 + a0);
    });
    Ok(total)
}

/// The report-shift factor
/// `[P(Y=1|x_tilde,x_s) - P(Y=1|x,x_s)] / [P(Y=0|x_tilde,x_s) * P(Y=1|x_tilde,x_s)]`.
///
/// With a hidden report the no-update convention applies: the claimed
/// conditional collapses to the shared posterior.
pub fn rho(ctx: &DeviationContext) -> Result<f64> {
    let claimed = ctx.claimed_posterior()?;
    let truthful = ctx.truthful_posterior()?;
    let denom = claimed.p0() * claimed.p1();
    if denom == 0.0 {
        return Err(Error::DegenerateBelief);
    }
    Ok((claimed.p1() - truthful.p1()) / denom)
}

/// The agent's expectation of the reference's posterior and its adjustment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceExpectation {
    /// `E[reference posterior of Y=1 | x, x_s]`.
    pub expectation: f64,
    /// `expectation - own posterior`; zero under truthful reporting.
    pub delta: f64,
}

/// Agent `t`'s expectation of the reference's posterior.
///
/// With a visible report this is the closed form `own posterior + mu * rho`.
/// With a hidden report the reference conditions only on `(x_r, x_s)` and
/// the expectation is computed by direct enumeration over `(Y, x_r)`.
pub fn expected_reference_posterior(ctx: &DeviationContext) -> Result<ReferenceExpectation> {
    let truthful = ctx.truthful_posterior()?;
    match ctx.t_reported_signal {
        Some(_) => {
            let delta = mu(ctx)? * rho(ctx)?;
            Ok(ReferenceExpectation {
                expectation: truthful.p1() + delta,
                delta,
            })
        }
        None => {
            let shared = ctx.shared_posterior()?;
            let dims = ctx.ref_dims();
            let mut expectation = 0.0;
            for omega in [0usize, 1usize] {
                let w = truthful.prob(omega);
                let mut inner = 0.0;
                for_each_lex(&dims, |assignment| {
                    let like = ctx.ref_likelihood(assignment, omega);
                    let ref_posterior = aggregate_posterior(shared, &ctx.ref_models, assignment)
                        .expect("assignment indices in range");
                    inner += like * ref_posterior.p1();
                });
                expectation += w * inner;
            }
            Ok(ReferenceExpectation {
                expectation,
                delta: expectation - truthful.p1(),
            })
        }
    }
}

/// Closed-form bound on the adjustment magnitude:
/// `1/4 * ((1-eta)/eta - eta/(1-eta)) * (1-delta)^k`.
pub fn delta_bound(delta_gap: f64, eta: f64, k: usize) -> Result<f64> {
    check_gap_eta(delta_gap, eta)?;
    let spread = (1.0 - eta) / eta - eta / (1.0 - eta);
    Ok(0.25 * spread * (1.0 - delta_gap).powi(k as i32))
}

/// Smallest substitute count `k` that forces the adjustment bound down to
/// `eps_prime`:
/// `k >= ln(((1-eta)/eta - eta/(1-eta)) / (4 eps')) / (-ln(1-delta))`,
/// or 0 when the bound already holds with no substitutes.
pub fn k_from_epsilon_prime(delta_gap: f64, eta: f64, eps_prime: f64) -> Result<usize> {
    check_gap_eta(delta_gap, eta)?;
    if !eps_prime.is_finite() || eps_prime <= 0.0 {
        return Err(Error::Domain(format!("eps_prime {eps_prime} must be > 0")));
    }
    let spread = (1.0 - eta) / eta - eta / (1.0 - eta);
    if 0.25 * spread <= eps_prime {
        return Ok(0);
    }
    let k = (0.25 * spread / eps_prime).ln() / -(1.0 - delta_gap).ln();
    Ok(k.ceil() as usize)
}

fn check_gap_eta(delta_gap: f64, eta: f64) -> Result<()> {
    if !(delta_gap > 0.0 && delta_gap < 1.0) {
        return Err(Error::Domain(format!(
            "delta gap {delta_gap} not in (0, 1)"
        )));
    }
    if !(eta > 0.0 && eta < 0.5) {
        return Err(Error::Domain(format!("eta {eta} not in (0, 0.5)")));
    }
    Ok(())
}
