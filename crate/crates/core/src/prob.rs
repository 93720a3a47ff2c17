//! Binary-outcome probability primitives: beliefs on the two-point simplex,
//! conditional signal models, joint scenarios, Bayesian updating, and
//! inversion of reports back to signals.
//!
//! Conventions: the outcome is binary with labels `0` and `1`; a [`Belief`]
//! stores only the probability of outcome 1 and derives the complement, so
//! the two entries always sum to exactly 1. A [`SignalModel`] stores the
//! conditional table `P(X = x_i | Y = omega)` with one row per signal and one
//! column per outcome; the prior lives in [`Scenario`], never in the model,
//! so one model can be reused across priors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default absolute tolerance on `p1` when matching a reported belief to the
/// posterior a signal would induce. Far above accumulated float error, far
/// below any distinct-posterior gap in practical information structures.
pub const TOL_INVERT: f64 = 1e-9;

/// Column sums of a conditional table must match 1 within this tolerance.
pub const COLUMN_SUM_TOL: f64 = 1e-12;

/// A point on the binary probability simplex.
///
/// Stores `p1 = P(Y = 1)`; `p0` is derived as `1 - p1`, so the invariant
/// `p0 + p1 = 1` holds by construction. Boundary values 0 and 1 are legal
/// (extreme reports exist in the switching equilibrium); operations that
/// require an interior point check explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Belief {
    p1: f64,
}

impl Belief {
    /// The uniform belief.
    pub const HALF: Belief = Belief { p1: 0.5 };

    pub fn new(p1: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p1) || !p1.is_finite() {
            return Err(Error::InvalidProbability { value: p1 });
        }
        Ok(Belief { p1 })
    }

    /// Belief with the given odds `p1 / p0`.
    pub fn from_odds(odds: f64) -> Result<Self> {
        if !odds.is_finite() || odds < 0.0 {
            return Err(Error::InvalidProbability { value: odds });
        }
        Belief::new(odds / (1.0 + odds))
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }

    pub fn p0(&self) -> f64 {
        1.0 - self.p1
    }

    /// Probability of the given outcome (0 or 1).
    pub fn prob(&self, outcome: usize) -> f64 {
        debug_assert!(outcome < 2);
        if outcome == 1 {
            self.p1()
        } else {
            self.p0()
        }
    }

    /// Odds `p1 / p0`; `+inf` at the upper boundary.
    pub fn odds(&self) -> f64 {
        self.p1 / (1.0 - self.p1)
    }

    /// Strictly inside the simplex (neither probability is 0).
    pub fn is_interior(&self) -> bool {
        self.p1 > 0.0 && self.p1 < 1.0
    }

    pub fn is_degenerate(&self) -> bool {
        !self.is_interior()
    }

    /// The belief with the outcome labels swapped.
    pub fn permuted(&self) -> Belief {
        Belief { p1: self.p0() }
    }
}

impl TryFrom<f64> for Belief {
    type Error = Error;
    fn try_from(p1: f64) -> Result<Self> {
        Belief::new(p1)
    }
}

impl From<Belief> for f64 {
    fn from(b: Belief) -> f64 {
        b.p1
    }
}

/// An agent's information structure: the conditional probability table
/// `P(X = x_i | Y = omega)` over a finite signal space.
///
/// Rows index signals, columns index the outcome. Each column is a
/// probability distribution (sums to 1 within [`COLUMN_SUM_TOL`]) and every
/// entry is strictly positive. Stochastic relevance (pairwise-distinct
/// likelihood ratios) is *not* enforced at construction so that uninformative
/// models can be represented; [`Scenario::validate`] enforces it where the
/// incentive theory needs it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SignalModel {
    rows: Vec<[f64; 2]>,
}

impl SignalModel {
    pub fn new(rows: Vec<[f64; 2]>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidModel("no signals".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            for &p in row {
                if !p.is_finite() || p <= 0.0 || p > 1.0 {
                    return Err(Error::InvalidModel(format!(
                        "entry {p} in row {i} must lie in (0, 1]"
                    )));
                }
            }
        }
        for omega in 0..2 {
            let sum: f64 = rows.iter().map(|r| r[omega]).sum();
            if (sum - 1.0).abs() > COLUMN_SUM_TOL {
                return Err(Error::InvalidModel(format!(
                    "column {omega} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(SignalModel { rows })
    }

    /// Two-signal model with `P(X = Y) = p` for both outcomes.
    pub fn binary_symmetric(p: f64) -> Result<Self> {
        SignalModel::new(vec![[p, 1.0 - p], [1.0 - p, p]])
    }

    /// Uninformative model: every signal equally likely under either outcome.
    pub fn uniform(n: usize) -> Result<Self> {
        let p = 1.0 / n as f64;
        SignalModel::new(vec![[p, p]; n])
    }

    /// The unique two-signal model that moves `prior` to `posteriors[s]` on
    /// signal `s`. Exists iff the posteriors straddle the prior.
    pub fn binary_from_posteriors(prior: Belief, posteriors: [f64; 2]) -> Result<Self> {
        if !prior.is_interior() {
            return Err(Error::BoundaryBelief);
        }
        let prior_odds = prior.odds();
        let ratio = |p: f64| -> Result<f64> {
            let b = Belief::new(p)?;
            if !b.is_interior() {
                return Err(Error::BoundaryBelief);
            }
            Ok(b.odds() / prior_odds)
        };
        let l0 = ratio(posteriors[0])?;
        let l1 = ratio(posteriors[1])?;
        // P(x0|Y=0) = beta0 solves l0*beta0 + l1*(1-beta0) = 1.
        let beta0 = (1.0 - l1) / (l0 - l1);
        if !(0.0 < beta0 && beta0 < 1.0) {
            return Err(Error::InvalidModel(format!(
                "posteriors {posteriors:?} do not straddle the prior"
            )));
        }
        SignalModel::new(vec![[beta0, l0 * beta0], [1.0 - beta0, l1 * (1.0 - beta0)]])
    }

    pub fn n_signals(&self) -> usize {
        self.rows.len()
    }

    /// `P(X = signal | Y = outcome)`.
    pub fn likelihood(&self, signal: usize, outcome: usize) -> f64 {
        debug_assert!(outcome < 2);
        self.rows[signal][outcome]
    }

    pub fn rows(&self) -> &[[f64; 2]] {
        &self.rows
    }

    /// Minimum entry of the table (the per-model eta).
    pub fn eta(&self) -> f64 {
        self.rows
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Bhattacharyya coefficient of the two conditional columns,
    /// `sum_i sqrt(P(x_i|Y=0) * P(x_i|Y=1))`, in `(0, 1]`.
    pub fn bhattacharyya(&self) -> f64 {
        self.rows.iter().map(|r| (r[0] * r[1]).sqrt()).sum()
    }

    /// Bhattacharyya distance `-ln(coefficient)`.
    pub fn bhattacharyya_distance(&self) -> f64 {
        -self.bhattacharyya().ln()
    }

    /// The informativeness gap: 1 minus the Bhattacharyya coefficient.
    pub fn delta_gap(&self) -> f64 {
        1.0 - self.bhattacharyya()
    }

    /// Whether all likelihood ratios are pairwise distinct, so distinct
    /// signals induce distinct posteriors and reports are invertible.
    pub fn is_stochastically_relevant(&self) -> bool {
        let mut ratios: Vec<f64> = self.rows.iter().map(|r| r[1] / r[0]).collect();
        ratios.sort_by(|a, b| a.total_cmp(b));
        ratios.windows(2).all(|w| w[0] != w[1])
    }

    /// The model for the relabeled outcome (columns swapped).
    pub fn permuted(&self) -> SignalModel {
        SignalModel {
            rows: self.rows.iter().map(|r| [r[1], r[0]]).collect(),
        }
    }
}

impl TryFrom<Vec<f64>> for SignalModel {
    type Error = Error;
    /// Row-major flat table: `[P(x0|Y=0), P(x0|Y=1), P(x1|Y=0), ...]`.
    fn try_from(flat: Vec<f64>) -> Result<Self> {
        if flat.is_empty() || !flat.len().is_multiple_of(2) {
            return Err(Error::InvalidModel(format!(
                "flat cpt must have even positive length, got {}",
                flat.len()
            )));
        }
        SignalModel::new(flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect())
    }
}

impl From<SignalModel> for Vec<f64> {
    fn from(m: SignalModel) -> Vec<f64> {
        m.rows.into_iter().flatten().collect()
    }
}

/// A common prior over the outcome, a roster of conditionally independent
/// signal models (one per agent), and optionally the realized world.
///
/// The joint distribution is `prior x product of per-agent columns`; this
/// conditional-independence structure is what makes signals informational
/// substitutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub prior: Belief,
    pub models: Vec<SignalModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub realized_outcome: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub realized_signals: Option<Vec<usize>>,
}

impl Scenario {
    pub fn new(prior: Belief, models: Vec<SignalModel>) -> Self {
        Scenario {
            prior,
            models,
            realized_outcome: None,
            realized_signals: None,
        }
    }

    /// Checks realized indices and stochastic relevance of every model.
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Config("scenario has no models".into()));
        }
        if let Some(y) = self.realized_outcome {
            if y > 1 {
                return Err(Error::Config(format!(
                    "realized outcome {y} not in {{0, 1}}"
                )));
            }
        }
        if let Some(signals) = &self.realized_signals {
            for (j, &s) in signals.iter().enumerate() {
                let model = &self.models[j % self.models.len()];
                if s >= model.n_signals() {
                    return Err(Error::SignalOutOfRange {
                        signal: s,
                        n: model.n_signals(),
                    });
                }
            }
        }
        for (j, m) in self.models.iter().enumerate() {
            if !m.is_stochastically_relevant() {
                return Err(Error::InvalidModel(format!(
                    "model {j} is not stochastically relevant"
                )));
            }
        }
        Ok(())
    }

    /// Global minimum conditional probability across the roster.
    pub fn pool_eta(&self) -> f64 {
        self.models
            .iter()
            .map(SignalModel::eta)
            .fold(f64::INFINITY, f64::min)
    }

    /// Global informativeness gap: `1 - max` per-model Bhattacharyya
    /// coefficient, i.e. the minimum per-model gap.
    pub fn pool_delta_gap(&self) -> f64 {
        1.0 - self
            .models
            .iter()
            .map(SignalModel::bhattacharyya)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Bayes update of `prior` on observing `signal` under `model`.
///
/// A degenerate prior is returned unchanged (no evidence can move it).
pub fn posterior(prior: Belief, model: &SignalModel, signal: usize) -> Result<Belief> {
    if signal >= model.n_signals() {
        return Err(Error::SignalOutOfRange {
            signal,
            n: model.n_signals(),
        });
    }
    if prior.is_degenerate() {
        return Ok(prior);
    }
    let w1 = prior.p1() * model.likelihood(signal, 1);
    let w0 = prior.p0() * model.likelihood(signal, 0);
    Belief::new(w1 / (w1 + w0))
}

/// Posterior after observing one signal per model, all conditionally
/// independent given the outcome. Empty lists return the prior.
pub fn aggregate_posterior(
    prior: Belief,
    models: &[SignalModel],
    signals: &[usize],
) -> Result<Belief> {
    if models.len() != signals.len() {
        return Err(Error::LengthMismatch {
            models: models.len(),
            signals: signals.len(),
        });
    }
    if prior.is_degenerate() {
        return Ok(prior);
    }
    let mut w1 = prior.p1();
    let mut w0 = prior.p0();
    for (model, &signal) in models.iter().zip(signals) {
        if signal >= model.n_signals() {
            return Err(Error::SignalOutOfRange {
                signal,
                n: model.n_signals(),
            });
        }
        w1 *= model.likelihood(signal, 1);
        w0 *= model.likelihood(signal, 0);
    }
    Belief::new(w1 / (w1 + w0))
}

/// Recovers the signal behind a reported posterior, if any.
///
/// Returns the signal whose posterior under `context_prior` lies within
/// `tol` of the report (the nearest one if several qualify, which cannot
/// happen for stochastically relevant models with sane tolerances), or
/// `None` for a report inconsistent with the model.
pub fn invert_report_with_tol(
    model: &SignalModel,
    context_prior: Belief,
    report: Belief,
    tol: f64,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for s in 0..model.n_signals() {
        let p = posterior(context_prior, model, s)
            .expect("signal index in range")
            .p1();
        let gap = (p - report.p1()).abs();
        if gap <= tol && best.is_none_or(|(_, g)| gap < g) {
            best = Some((s, gap));
        }
    }
    best.map(|(s, _)| s)
}

/// [`invert_report_with_tol`] at the default [`TOL_INVERT`].
pub fn invert_report(model: &SignalModel, context_prior: Belief, report: Belief) -> Option<usize> {
    invert_report_with_tol(model, context_prior, report, TOL_INVERT)
}
