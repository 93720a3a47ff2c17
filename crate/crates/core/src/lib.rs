//! Self-resolving prediction markets: scoring a market against a designated
//! participant's final prediction instead of a verified outcome.
//!
//! The pieces, bottom to top:
//!
//! - [`prob`]: beliefs on the binary simplex, conditional signal models,
//!   scenarios, Bayesian updating, and inversion of reports to signals.
//! - [`scoring`]: log score, cross-entropy score against a reference belief,
//!   and the cross-entropy market scoring rule, with explicit floor policy.
//! - [`expectation`]: what an agent expects the reference to believe — the
//!   `mu * rho` adjustment decomposition, its geometric bound in the number
//!   of reference substitutes, and the bound's inversion to a count.
//! - [`bounds`]: the transcendental deviation-gain bounds, their valid
//!   adjustment ranges, and the bisection solver producing `eps'` and
//!   `k_min`.
//! - [`market`]: the sequential simulator with random termination, flat-fee
//!   tail, reference assignment strategies, and settlement.
//! - [`equilibria`]: exact deviation-gain audits against the epsilon bound
//!   and the uninformative / switching / permutation payoff structures.
//! - [`amm`]: the equivalent cost-function market maker (log-sum-exp cost,
//!   softmax prices, settlement at reference prices).
//! - [`curves`]: deterministic CSV emission of the bound curves and sweeps.
//!
//! # Example
//!
//! Size the reference distance for an incentive target, then run a market
//! with that distance and settle it:
//!
//! ```
//! use selfres_core::bounds::{k_min, BoundsQuery, ScoringRule};
//! use selfres_core::market::{run_market, MarketConfig, RefStrategy, Strategy};
//! use selfres_core::{Belief, FloorPolicy, Scenario, SignalModel};
//!
//! let model = SignalModel::binary_symmetric(0.95)?;
//! let scenario = Scenario::new(Belief::HALF, vec![model.clone()]);
//!
//! // Substitutes needed so no deviation gains more than 0.05 nats.
//! let solved = k_min(&BoundsQuery {
//!     epsilon: 0.05,
//!     delta_gap: model.delta_gap(),
//!     eta: model.eta(),
//!     prior: Belief::HALF,
//!     rule: ScoringRule::CeMsr,
//! })?;
//!
//! let config = MarketConfig {
//!     alpha: 0.1,
//!     flat_fee: 0.25,
//!     k: solved.k_min,
//!     ref_strategy: RefStrategy::Terminal,
//!     floor: FloorPolicy::simulator_default(),
//!     initial_report: Belief::HALF,
//!     rng_seed: 7,
//! };
//! let transcript = run_market(&config, &scenario, &[Strategy::Truthful])?;
//! assert_eq!(transcript.payouts.len(), transcript.terminal_step);
//! assert!(transcript.mechanism_cost.is_finite());
//! # Ok::<(), selfres_core::Error>(())
//! ```

#![forbid(unsafe_code)]

pub mod amm;
pub mod bounds;
pub mod curves;
pub mod emit;
pub mod equilibria;
pub mod error;
pub mod expectation;
pub mod market;
pub mod prob;
pub mod scoring;

mod product;

pub use error::{Error, Result};
pub use prob::{Belief, Scenario, SignalModel};
pub use scoring::{FloorPolicy, Score};
