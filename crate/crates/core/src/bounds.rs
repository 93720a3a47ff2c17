//! The transcendental deviation-gain bounds and their numerical inversion.
//!
//! `d_eta` bounds the gain from misreporting under the plain cross-entropy
//! score; `d_hat_eta` is the market-scoring-rule variant. Both have the form
//! `Delta * ln(num(Delta) / den(Delta))` with affine numerator and
//! denominator, are zero at `Delta = 0`, and diverge to `+inf` as `Delta`
//! approaches either end of the range where the adjusted posterior stays a
//! valid distribution. Setting the bound equal to a target `epsilon` is a
//! transcendental equation, so `eps'` (the largest tolerable adjustment
//! magnitude) is found by bisection and then converted to a minimum
//! substitute count via the geometric decay bound.
//!
//! Branch structure: the log factor is negative near zero on one side
//! whenever the prior sits on the wrong side of `eta` (the curve dips below
//! zero before diverging), so each sign branch is solved on the sub-interval
//! beyond its log-unity point, where monotonicity holds; monotonicity is
//! verified by sampling before every solve rather than assumed. Both
//! branches are solved and the minimum-magnitude root wins.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expectation::k_from_epsilon_prime;
use crate::prob::Belief;

/// Which payoff rule the bound describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoringRule {
    #[serde(rename = "ce")]
    Ce,
    #[serde(rename = "cemsr")]
    CeMsr,
}

impl std::fmt::Display for ScoringRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScoringRule::Ce => write!(f, "ce"),
            ScoringRule::CeMsr => write!(f, "cemsr"),
        }
    }
}

/// Inputs for one `eps' / k_min` computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsQuery {
    /// Target maximum deviation gain, in nats.
    pub epsilon: f64,
    /// Pool informativeness gap (1 minus the largest Bhattacharyya coefficient).
    pub delta_gap: f64,
    /// Pool minimum conditional signal probability.
    pub eta: f64,
    /// Prior (or market prior) on outcome 1.
    pub prior: Belief,
    pub rule: ScoringRule,
}

impl BoundsQuery {
    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(Error::Domain(format!(
                "epsilon {} must be > 0",
                self.epsilon
            )));
        }
        if !(self.delta_gap > 0.0 && self.delta_gap < 1.0) {
            return Err(Error::Domain(format!(
                "delta gap {} not in (0, 1)",
                self.delta_gap
            )));
        }
        if !(self.eta > 0.0 && self.eta < 0.5) {
            return Err(Error::Domain(format!("eta {} not in (0, 0.5)", self.eta)));
        }
        if !self.prior.is_interior() {
            return Err(Error::BoundaryBelief);
        }
        Ok(())
    }
}

/// Which sign of adjustment produced the minimum-magnitude root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Positive,
    Negative,
    Both,
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Branch::Positive => write!(f, "positive"),
            Branch::Negative => write!(f, "negative"),
            Branch::Both => write!(f, "both"),
        }
    }
}

/// Solver output: the tolerable adjustment and the substitute count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsResult {
    pub eps_prime: f64,
    pub k_min: usize,
    pub branch: Branch,
    /// The open `Delta` interval searched.
    pub bracket: (f64, f64),
}

/// Affine coefficients of the log argument: `num = n0 + Delta * na`,
/// `den = d0 - Delta * da`.
#[derive(Debug, Clone, Copy)]
struct Curve {
    n0: f64,
    na: f64,
    d0: f64,
    da: f64,
}

impl Curve {
    fn new(rule: ScoringRule, prior: Belief, eta: f64) -> Curve {
        let (y1, y0) = (prior.p1(), prior.p0());
        match rule {
            ScoringRule::Ce => {
                let mass = eta * y0 + (1.0 - eta) * y1;
                Curve {
                    n0: (1.0 - eta) * y1,
                    na: mass,
                    d0: eta * y0,
                    da: mass,
                }
            }
            ScoringRule::CeMsr => Curve {
                n0: 1.0 - eta,
                na: eta * y0 / y1 + (1.0 - eta),
                d0: eta,
                da: eta + (1.0 - eta) * y1 / y0,
            },
        }
    }

    fn range(&self) -> (f64, f64) {
        (-self.n0 / self.na, self.d0 / self.da)
    }

    fn eval(&self, delta: f64) -> Result<f64> {
        let num = self.n0 + delta * self.na;
        let den = self.d0 - delta * self.da;
        if num <= 0.0 || den <= 0.0 {
            let (lo, hi) = self.range();
            return Err(Error::OutOfRange { delta, lo, hi });
        }
        Ok(delta * (num / den).ln())
    }

    /// Where the log argument equals 1 (the curve re-crosses zero).
    fn log_unity_point(&self) -> f64 {
        (self.d0 - self.n0) / (self.na + self.da)
    }
}

/// Per-prediction deviation-gain bound
/// `Delta * ln(((1-eta) y1 + Delta m) / (eta y0 - Delta m))`
/// with `m = eta y0 + (1-eta) y1`.
pub fn d_eta(delta: f64, prior: Belief, eta: f64) -> Result<f64> {
    Curve::new(ScoringRule::Ce, prior, eta).eval(delta)
}

/// Market-scoring-rule deviation-gain bound
/// `Delta * ln(((1-eta) + Delta (eta y0/y1 + 1-eta)) / (eta - Delta (eta + (1-eta) y1/y0)))`.
pub fn d_hat_eta(delta: f64, market_prior: Belief, eta: f64) -> Result<f64> {
    Curve::new(ScoringRule::CeMsr, market_prior, eta).eval(delta)
}

/// Dispatch over [`ScoringRule`].
pub fn deviation_gain_bound(rule: ScoringRule, delta: f64, prior: Belief, eta: f64) -> Result<f64> {
    Curve::new(rule, prior, eta).eval(delta)
}

/// The open interval of adjustments for which the adjusted posterior stays a
/// valid distribution (both log arguments positive).
pub fn valid_delta_range(prior: Belief, eta: f64, rule: ScoringRule) -> (f64, f64) {
    Curve::new(rule, prior, eta).range()
}

/// Samples used for the pre-solve monotonicity assertion.
const MONOTONE_SAMPLES: usize = 256;

/// Root of `D(Delta) = epsilon` with the smallest magnitude on one sign
/// branch, or `None` when no representable `Delta` inside the bracket
/// reaches `epsilon`.
fn solve_branch(curve: &Curve, epsilon: f64, positive: bool) -> Result<Option<f64>> {
    let (lo, hi) = curve.range();
    let endpoint = if positive { hi } else { lo };
    let unity = curve.log_unity_point();
    // D is exactly 0 at Delta = 0 and at the log-unity point; beyond the
    // farther of the two it rises monotonically to +inf at the endpoint.
    let start = if positive {
        unity.max(0.0)
    } else {
        unity.min(0.0)
    };

    // Find an upper end with D > epsilon, backing toward the endpoint.
    let mut b = None;
    let mut shrink = 1e-9;
    loop {
        let candidate = endpoint + (start - endpoint) * shrink;
        if candidate == endpoint || candidate == start {
            break;
        }
        if curve.eval(candidate)? > epsilon {
            b = Some(candidate);
            break;
        }
        shrink /= 1e3;
        if shrink < f64::MIN_POSITIVE {
            break;
        }
    }
    let b = match b {
        Some(v) => v,
        None => return Ok(None),
    };

    // Assert (not assume) monotonicity on the solve interval.
    let mut prev = f64::NEG_INFINITY;
    for i in 1..=MONOTONE_SAMPLES {
        let x = start + (b - start) * (i as f64 / MONOTONE_SAMPLES as f64);
        let v = curve.eval(x)?;
        if v < prev - 1e-12 * prev.abs().max(1.0) {
            return Err(Error::NoSolution(format!(
                "bound not monotone on branch near delta {x}"
            )));
        }
        prev = v;
    }

    // Bisection to floating-point exhaustion. f(a) <= 0 < f(b).
    let mut a = start;
    let mut b = b;
    loop {
        let mid = 0.5 * (a + b);
        if mid == a || mid == b {
            break;
        }
        if curve.eval(mid)? > epsilon {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok(Some(b))
}

/// Solved `eps'` value together with the branch it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonPrime {
    pub value: f64,
    pub branch: Branch,
    pub bracket: (f64, f64),
}

/// Magnitude tie tolerance when both branches attain `epsilon` equally.
const BRANCH_TIE_TOL: f64 = 1e-12;

/// Permitted solver residual `|D(Delta*) - epsilon|`, relative to
/// `max(1, epsilon)`.
pub const SOLVER_RESIDUAL_TOL: f64 = 1e-9;

/// `eps' = min { |Delta| : D(Delta) = epsilon }`, solving both sign branches
/// and keeping the smaller magnitude.
pub fn epsilon_prime(query: &BoundsQuery) -> Result<EpsilonPrime> {
    query.validate()?;
    let curve = Curve::new(query.rule, query.prior, query.eta);
    let pos = solve_branch(&curve, query.epsilon, true)?;
    let neg = solve_branch(&curve, query.epsilon, false)?;

    let (value, branch) = match (pos, neg) {
        (Some(p), Some(n)) => {
            let (ap, an) = (p.abs(), n.abs());
            if (ap - an).abs() <= BRANCH_TIE_TOL * ap.max(an) {
                (ap.min(an), Branch::Both)
            } else if ap < an {
                (ap, Branch::Positive)
            } else {
                (an, Branch::Negative)
            }
        }
        (Some(p), None) => (p.abs(), Branch::Positive),
        (None, Some(n)) => (n.abs(), Branch::Negative),
        (None, None) => {
            return Err(Error::NoSolution(
                "epsilon not attained on either branch within float range".into(),
            ))
        }
    };

    // Residual check on the winning root (numerical-failure guard).
    let signed = match branch {
        Branch::Negative => -value,
        _ => value,
    };
    let residual = (curve.eval(signed)? - query.epsilon).abs();
    if residual > SOLVER_RESIDUAL_TOL * query.epsilon.max(1.0) {
        return Err(Error::NoSolution(format!(
            "solver residual {residual} exceeds tolerance"
        )));
    }

    Ok(EpsilonPrime {
        value,
        branch,
        bracket: curve.range(),
    })
}

/// Full pipeline: invert the gain bound to `eps'`, then convert to the
/// minimum substitute count via the geometric adjustment bound.
pub fn k_min(query: &BoundsQuery) -> Result<BoundsResult> {
    let solved = epsilon_prime(query)?;
    let k = k_from_epsilon_prime(query.delta_gap, query.eta, solved.value)?;
    Ok(BoundsResult {
        eps_prime: solved.value,
        k_min: k,
        branch: solved.branch,
        bracket: solved.bracket,
    })
}

/// Default prior grid for market-level `k` selection, mirroring "a very
/// small amount away from 0 and 1".
pub const DEFAULT_Y_RANGE: (f64, f64) = (0.01, 0.99);
pub const DEFAULT_GRID_POINTS: usize = 99;

/// Uniform grid over `[lo, hi]` with `points` entries.
pub fn prior_grid(y_range: (f64, f64), points: usize) -> Result<Vec<f64>> {
    let (lo, hi) = y_range;
    if !(lo > 0.0 && lo <= hi && hi < 1.0) {
        return Err(Error::Domain(format!("prior range ({lo}, {hi}) invalid")));
    }
    if points == 0 {
        return Err(Error::Domain("grid needs at least one point".into()));
    }
    if points == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect())
}

/// Market-level substitute count: the maximum `k_min` over a prior grid,
/// since the market prior drifts over the run.
pub fn k_market(
    rule: ScoringRule,
    epsilon: f64,
    delta_gap: f64,
    eta: f64,
    y_range: (f64, f64),
    grid_points: usize,
) -> Result<usize> {
    let mut worst = 0;
    for y in prior_grid(y_range, grid_points)? {
        let query = BoundsQuery {
            epsilon,
            delta_gap,
            eta,
            prior: Belief::new(y)?,
            rule,
        };
        worst = worst.max(k_min(&query)?.k_min);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(p: f64) -> Belief {
        Belief::new(p).unwrap()
    }

    #[test]
    fn d_eta_zero_at_zero() {
        assert_eq!(d_eta(0.0, b(0.5), 0.1).unwrap(), 0.0);
        assert_eq!(d_hat_eta(0.0, b(0.3), 0.2).unwrap(), 0.0);
    }

    #[test]
    fn d_eta_diverges_at_bracket() {
        let prior = b(0.5);
        let eta = 0.1;
        let (lo, hi) = valid_delta_range(prior, eta, ScoringRule::Ce);
        assert!(d_eta(hi * (1.0 - 1e-14), prior, eta).unwrap() > 1.0);
        assert!(d_eta(lo * (1.0 - 1e-14), prior, eta).unwrap() > 1.0);
        assert!(d_eta(hi, prior, eta).is_err());
        assert!(d_eta(hi * 1.01, prior, eta).is_err());
    }

    // Independent reimplementations of the closed forms, written directly
    // from the displayed formulas rather than the affine-coefficient path.
    fn d_eta_direct(delta: f64, y1: f64, eta: f64) -> f64 {
        let y0 = 1.0 - y1;
        let m = eta * y0 + (1.0 - eta) * y1;
        delta * (((1.0 - eta) * y1 + delta * m) / (eta * y0 - delta * m)).ln()
    }

    fn d_hat_direct(delta: f64, y1: f64, eta: f64) -> f64 {
        let y0 = 1.0 - y1;
        let num = (1.0 - eta) + delta * (eta * y0 / y1 + (1.0 - eta));
        let den = eta - delta * (eta + (1.0 - eta) * y1 / y0);
        delta * (num / den).ln()
    }

    #[test]
    fn d_eta_matches_direct_form() {
        let v = d_eta(0.05, b(0.5), 0.1).unwrap();
        assert!((v - d_eta_direct(0.05, 0.5, 0.1)).abs() < 1e-15);
        for &(delta, y1, eta) in &[
            (0.03, 0.4, 0.15),
            (-0.1, 0.7, 0.2),
            (0.002, 0.05, 0.3),
            (-0.04, 0.9, 0.05),
        ] {
            let (lo, hi) = valid_delta_range(b(y1), eta, ScoringRule::Ce);
            assert!(lo < delta && delta < hi);
            let a = d_eta(delta, b(y1), eta).unwrap();
            assert!((a - d_eta_direct(delta, y1, eta)).abs() < 1e-12);
        }
    }

    #[test]
    fn d_hat_matches_direct_form() {
        for &(delta, y1, eta) in &[
            (0.01, 0.5, 0.1),
            (-0.05, 0.25, 0.2),
            (0.003, 0.8, 0.05),
            (-0.002, 0.1, 0.3),
        ] {
            let (lo, hi) = valid_delta_range(b(y1), eta, ScoringRule::CeMsr);
            assert!(lo < delta && delta < hi, "delta outside range");
            let a = d_hat_eta(delta, b(y1), eta).unwrap();
            assert!((a - d_hat_direct(delta, y1, eta)).abs() < 1e-12);
        }
    }

    #[test]
    fn d_hat_symmetric_prior_reduction() {
        // At y1 = y0 the formula collapses to Delta * ln((1-eta+Delta)/(eta-Delta)).
        let eta = 0.17;
        for &delta in &[0.01, 0.05, -0.1, 0.12] {
            let got = d_hat_eta(delta, Belief::HALF, eta).unwrap();
            let reduced = delta * ((1.0 - eta + delta) / (eta - delta)).ln();
            assert!((got - reduced).abs() < 1e-13);
        }
    }

    #[test]
    fn valid_range_endpoints_zero_the_log_arguments() {
        let prior = b(0.35);
        let eta = 0.12;
        let mass = eta * prior.p0() + (1.0 - eta) * prior.p1();
        let (lo, hi) = valid_delta_range(prior, eta, ScoringRule::Ce);
        // Denominator at hi and numerator at lo vanish by construction.
        assert!((eta * prior.p0() - hi * mass).abs() < 1e-15);
        assert!(((1.0 - eta) * prior.p1() + lo * mass).abs() < 1e-15);
    }

    #[test]
    fn valid_range_uninformative_limit() {
        // eta -> 0.5 at a uniform prior gives (-1/2, 1/2) for the CE rule.
        let (lo, hi) = valid_delta_range(Belief::HALF, 0.5, ScoringRule::Ce);
        assert!((lo + 0.5).abs() < 1e-15);
        assert!((hi - 0.5).abs() < 1e-15);
    }

    fn query(rule: ScoringRule, eps: f64, y1: f64) -> BoundsQuery {
        BoundsQuery {
            epsilon: eps,
            delta_gap: 0.1,
            eta: 0.1,
            prior: b(y1),
            rule,
        }
    }

    #[test]
    fn solver_residual_is_tiny() {
        for &rule in &[ScoringRule::Ce, ScoringRule::CeMsr] {
            for &eps in &[1e-4, 1e-3, 1e-2, 0.1, 0.5] {
                for &y1 in &[0.05, 0.3, 0.5, 0.75, 0.95] {
                    let q = query(rule, eps, y1);
                    let solved = epsilon_prime(&q).unwrap();
                    let signed = match solved.branch {
                        Branch::Negative => -solved.value,
                        _ => solved.value,
                    };
                    let d = deviation_gain_bound(rule, signed, q.prior, q.eta).unwrap();
                    assert!(
                        (d - eps).abs() <= 1e-9 * eps.max(1.0),
                        "rule {rule} eps {eps} y1 {y1}: residual {}",
                        (d - eps).abs()
                    );
                }
            }
        }
    }

    #[test]
    fn ce_branch_rule_follows_prior_vs_eta() {
        // Positive-valued solution when y1 > eta, negative when y1 < eta.
        let eta = 0.2;
        for &y1 in &[0.3, 0.5, 0.9] {
            let q = BoundsQuery {
                epsilon: 0.01,
                delta_gap: 0.1,
                eta,
                prior: b(y1),
                rule: ScoringRule::Ce,
            };
            assert_eq!(epsilon_prime(&q).unwrap().branch, Branch::Positive);
        }
        for &y1 in &[0.05, 0.1, 0.15] {
            let q = BoundsQuery {
                epsilon: 0.01,
                delta_gap: 0.1,
                eta,
                prior: b(y1),
                rule: ScoringRule::Ce,
            };
            assert_eq!(epsilon_prime(&q).unwrap().branch, Branch::Negative);
        }
    }

    #[test]
    fn huge_epsilon_approaches_bracket() {
        let q = query(ScoringRule::Ce, 2.0, 0.5);
        let solved = epsilon_prime(&q).unwrap();
        let (lo, hi) = solved.bracket;
        let endpoint = match solved.branch {
            Branch::Negative => lo.abs(),
            _ => hi.abs(),
        };
        assert!(solved.value <= endpoint);
        assert!((endpoint - solved.value) / endpoint < 1e-6);
    }

    #[test]
    fn k_min_monotone_in_epsilon() {
        let mut last = usize::MAX;
        for &eps in &[1e-4, 1e-3, 1e-2, 0.1] {
            let q = query(ScoringRule::CeMsr, eps, 0.5);
            let k = k_min(&q).unwrap().k_min;
            assert!(k <= last, "k_min must not increase with epsilon");
            last = k;
        }
    }

    #[test]
    fn k_min_regression_anchor() {
        // Pipeline output for (delta=0.1, eta=0.1, eps=0.01, y1=0.5, CEMSR),
        // cross-checked on first verified run against a dense grid scan of
        // min{|Delta| : D_hat >= eps} (tests/oracle_equivalence.rs) and an
        // independent bisection, then frozen.
        let q = query(ScoringRule::CeMsr, 0.01, 0.5);
        let r = k_min(&q).unwrap();
        assert!((r.eps_prime - 4.449058689257187e-3).abs() < 1e-12);
        assert_eq!(r.branch, Branch::Positive);
        assert_eq!(r.k_min, 59);
    }

    #[test]
    fn delta_gap_dominates_sensitivity() {
        let base = query(ScoringRule::CeMsr, 0.01, 0.5);
        let k0 = k_min(&base).unwrap().k_min as f64;

        let mut dq = base;
        dq.delta_gap *= 2.0;
        let k_delta = k_min(&dq).unwrap().k_min as f64;

        let mut eq = base;
        eq.eta *= 2.0;
        let k_eta = k_min(&eq).unwrap().k_min as f64;

        let mut xq = base;
        xq.epsilon *= 2.0;
        let k_eps = k_min(&xq).unwrap().k_min as f64;

        let change = |k: f64| (k - k0).abs();
        assert!(change(k_delta) > change(k_eta));
        assert!(change(k_delta) > change(k_eps));
    }

    #[test]
    fn k_market_single_point_matches_k_min() {
        let q = query(ScoringRule::CeMsr, 0.01, 0.37);
        let expected = k_min(&q).unwrap().k_min;
        let got = k_market(ScoringRule::CeMsr, 0.01, 0.1, 0.1, (0.37, 0.37), 1).unwrap();
        assert_eq!(got, expected);
    }

    #[test]
    fn k_market_nondecreasing_in_range() {
        let narrow = k_market(ScoringRule::CeMsr, 0.01, 0.1, 0.1, (0.4, 0.6), 9).unwrap();
        let wide = k_market(ScoringRule::CeMsr, 0.01, 0.1, 0.1, (0.05, 0.95), 19).unwrap();
        assert!(wide >= narrow);
    }

    #[test]
    fn query_validation() {
        let mut q = query(ScoringRule::Ce, 0.01, 0.5);
        assert!(q.validate().is_ok());
        q.epsilon = 0.0;
        assert!(q.validate().is_err());
        q.epsilon = 0.01;
        q.eta = 0.6;
        assert!(q.validate().is_err());
        q.eta = 0.1;
        q.prior = b(1.0);
        assert!(q.validate().is_err());
    }
}
