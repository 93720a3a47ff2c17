//! Shared test support: an independent brute-force oracle for the
//! reference-posterior expectation, plus seeded random generators for
//! models, contexts, and scenarios.
//!
//! The oracle touches only raw table entries and the prior; it renormalizes
//! joint products from scratch instead of chaining Bayes updates, so it
//! shares no code path with the implementation it checks.

#![allow(dead_code)] // shared across test binaries; not all use every helper

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use selfres_core::expectation::DeviationContext;
use selfres_core::prob::{Belief, Scenario, SignalModel};

/// Visits every joint assignment of the given signal-space sizes.
fn assignments(dims: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &d in dims {
        let mut next = Vec::with_capacity(out.len() * d);
        for a in &out {
            for s in 0..d {
                let mut b = a.clone();
                b.push(s);
                next.push(b);
            }
        }
        out = next;
    }
    out
}

/// Brute-force `E[reference posterior of Y=1 | x_t, shared]`, enumerating
/// `(Y, reference signals)` with raw joint products.
pub fn oracle_reference_expectation(
    prior: Belief,
    shared: &[(SignalModel, usize)],
    t_model: &SignalModel,
    x_t: usize,
    claim: Option<usize>,
    ref_models: &[SignalModel],
) -> f64 {
    let prior_of = |omega: usize| if omega == 1 { prior.p1() } else { prior.p0() };
    let shared_like = |omega: usize| -> f64 {
        shared
            .iter()
            .map(|(m, s)| m.likelihood(*s, omega))
            .product()
    };
    let claim_like = |omega: usize| -> f64 { claim.map_or(1.0, |c| t_model.likelihood(c, omega)) };

    // Agent t's conditional over Y given their true information.
    let w: Vec<f64> = (0..2)
        .map(|omega| prior_of(omega) * shared_like(omega) * t_model.likelihood(x_t, omega))
        .collect();
    let w_total: f64 = w.iter().sum();

    let dims: Vec<usize> = ref_models.iter().map(SignalModel::n_signals).collect();
    let mut expectation = 0.0;
    for (omega, &w_omega) in w.iter().enumerate() {
        for a in assignments(&dims) {
            let ref_like = |o: usize| -> f64 {
                ref_models
                    .iter()
                    .zip(&a)
                    .map(|(m, &s)| m.likelihood(s, o))
                    .product()
            };
            // Reference posterior from the full unnormalized joint.
            let j1 = prior_of(1) * shared_like(1) * claim_like(1) * ref_like(1);
            let j0 = prior_of(0) * shared_like(0) * claim_like(0) * ref_like(0);
            let ref_posterior = j1 / (j0 + j1);
            expectation += (w_omega / w_total) * ref_like(omega) * ref_posterior;
        }
    }
    expectation
}

pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Random stochastically relevant model with `2..=max_signals` signals and
/// entries bounded comfortably away from zero.
pub fn random_model(rng: &mut ChaCha12Rng, max_signals: usize) -> SignalModel {
    loop {
        let n = rng.random_range(2..=max_signals);
        let mut cols = [vec![0.0; n], vec![0.0; n]];
        for col in &mut cols {
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            for (c, r) in col.iter_mut().zip(raw) {
                *c = r / total;
            }
        }
        let rows: Vec<[f64; 2]> = (0..n).map(|i| [cols[0][i], cols[1][i]]).collect();
        let model = SignalModel::new(rows).expect("normalized columns");
        if model.is_stochastically_relevant() && model.bhattacharyya() < 1.0 - 1e-6 {
            return model;
        }
    }
}

/// Random deviation context: up to 2 shared signals, up to `max_refs`
/// reference models, a random true signal, and a random claim (truthful,
/// misreport, or hidden per `claim_mode`).
pub enum ClaimMode {
    Truthful,
    AnySignal,
    Hidden,
}

pub fn random_context(
    rng: &mut ChaCha12Rng,
    max_refs: usize,
    claim_mode: ClaimMode,
) -> DeviationContext {
    let prior = Belief::new(rng.random_range(0.05..0.95)).unwrap();
    let n_shared = rng.random_range(0..=2);
    let shared: Vec<(SignalModel, usize)> = (0..n_shared)
        .map(|_| {
            let m = random_model(rng, 4);
            let s = rng.random_range(0..m.n_signals());
            (m, s)
        })
        .collect();
    let t_model = random_model(rng, 4);
    let t_true_signal = rng.random_range(0..t_model.n_signals());
    let t_reported_signal = match claim_mode {
        ClaimMode::Truthful => Some(t_true_signal),
        ClaimMode::AnySignal => Some(rng.random_range(0..t_model.n_signals())),
        ClaimMode::Hidden => None,
    };
    let ref_models = (0..rng.random_range(0..=max_refs))
        .map(|_| random_model(rng, 4))
        .collect();
    DeviationContext {
        prior,
        shared,
        t_model,
        t_true_signal,
        t_reported_signal,
        ref_models,
    }
}

/// Random scenario with realized outcome and signals, suitable for audits.
pub fn random_scenario(rng: &mut ChaCha12Rng, n_agents: usize, max_signals: usize) -> Scenario {
    let prior = Belief::new(rng.random_range(0.1..0.9)).unwrap();
    let models: Vec<SignalModel> = (0..n_agents)
        .map(|_| random_model(rng, max_signals))
        .collect();
    let outcome = usize::from(rng.random::<f64>() < prior.p1());
    let signals = models
        .iter()
        .map(|m| {
            let u = rng.random::<f64>();
            let mut cum = 0.0;
            for s in 0..m.n_signals() {
                cum += m.likelihood(s, outcome);
                if u < cum {
                    return s;
                }
            }
            m.n_signals() - 1
        })
        .collect();
    Scenario {
        prior,
        models,
        realized_outcome: Some(outcome),
        realized_signals: Some(signals),
    }
}

/// The two-agent worked example: a half-informed opener whose signals move
/// a uniform prior to 0.49 or 0.99, followed by a weak agent multiplying
/// the market odds by 0.99 or 1.01.
pub fn worked_example_scenario() -> Scenario {
    let strong = SignalModel::binary_from_posteriors(Belief::HALF, [0.49, 0.99]).unwrap();
    let weak = SignalModel::new(vec![[0.5, 0.495], [0.5, 0.505]]).unwrap();
    Scenario {
        prior: Belief::HALF,
        models: vec![strong, weak],
        realized_outcome: Some(0),
        realized_signals: Some(vec![0, 0]),
    }
}
