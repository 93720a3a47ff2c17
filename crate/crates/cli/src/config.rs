//! Versioned JSON config schemas for the subcommands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use selfres_core::bounds::ScoringRule;
use selfres_core::market::{MarketConfig, RefStrategy, Strategy};
use selfres_core::prob::{Belief, Scenario};
use selfres_core::scoring::FloorPolicy;

pub const CONFIG_VERSION: u32 = 1;

fn check_version(version: u32) -> Result<()> {
    if version != CONFIG_VERSION {
        bail!("config version {version} unsupported (expected {CONFIG_VERSION})");
    }
    Ok(())
}

pub fn load<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

/// Uniform grid description.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn range(&self) -> (f64, f64) {
        (self.min, self.max)
    }
}

fn default_rules() -> Vec<ScoringRule> {
    vec![ScoringRule::Ce, ScoringRule::CeMsr]
}

fn default_y1_grid() -> GridSpec {
    GridSpec {
        min: 0.01,
        max: 0.99,
        points: 99,
    }
}

/// `bounds` command: the k_min sweep.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub version: u32,
    #[serde(default = "default_rules")]
    pub rules: Vec<ScoringRule>,
    pub delta_gaps: Vec<f64>,
    pub etas: Vec<f64>,
    pub epsilons: Vec<f64>,
    #[serde(default = "default_y1_grid")]
    pub y1: GridSpec,
}

impl BoundsConfig {
    pub fn validate(&self) -> Result<()> {
        check_version(self.version)?;
        if self.delta_gaps.is_empty() || self.etas.is_empty() || self.epsilons.is_empty() {
            bail!("bounds config needs nonempty delta_gaps, etas, epsilons");
        }
        Ok(())
    }
}

fn default_points_per_side() -> usize {
    200
}

/// `curves` command: gain-bound curves and eps' families.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvesConfig {
    pub version: u32,
    #[serde(default = "default_rules")]
    pub rules: Vec<ScoringRule>,
    /// Priors for the bound-vs-adjustment curves.
    pub priors: Vec<f64>,
    pub etas: Vec<f64>,
    #[serde(default = "default_points_per_side")]
    pub points_per_side: usize,
    /// Informativeness gap used for the eps'-family sweep.
    pub delta_gap: f64,
    pub epsilons: Vec<f64>,
    #[serde(default = "default_y1_grid")]
    pub y1: GridSpec,
}

impl CurvesConfig {
    pub fn validate(&self) -> Result<()> {
        check_version(self.version)?;
        if self.priors.is_empty() || self.etas.is_empty() || self.epsilons.is_empty() {
            bail!("curves config needs nonempty priors, etas, epsilons");
        }
        Ok(())
    }
}

/// Inline scenario or a path to one; exactly one must be present.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSource {
    #[serde(default)]
    pub scenario: Option<Scenario>,
    #[serde(default)]
    pub scenario_path: Option<PathBuf>,
}

impl ScenarioSource {
    pub fn resolve(&self, config_dir: &Path) -> Result<Scenario> {
        let scenario = match (&self.scenario, &self.scenario_path) {
            (Some(s), None) => s.clone(),
            (None, Some(p)) => {
                let path = if p.is_relative() {
                    config_dir.join(p)
                } else {
                    p.clone()
                };
                load(&path)?
            }
            _ => bail!("provide exactly one of scenario, scenario_path"),
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

/// Market parameters without a seed; seeds come from the command line.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSpec {
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Alternative to `alpha`: desired expected scored-trader count.
    #[serde(default)]
    pub expected_traders: Option<usize>,
    pub flat_fee: f64,
    pub k: usize,
    pub ref_strategy: RefStrategy,
    #[serde(default = "FloorPolicy::simulator_default")]
    pub floor: FloorPolicy,
    pub initial_report: Belief,
}

impl MarketSpec {
    pub fn build(&self, seed: u64) -> Result<MarketConfig> {
        let alpha = match (self.alpha, self.expected_traders) {
            (Some(a), None) => a,
            (None, Some(t)) => selfres_core::market::alpha_from_expected_traders(t, self.k),
            _ => bail!("provide exactly one of alpha, expected_traders"),
        };
        let config = MarketConfig {
            alpha,
            flat_fee: self.flat_fee,
            k: self.k,
            ref_strategy: self.ref_strategy,
            floor: self.floor,
            initial_report: self.initial_report,
            rng_seed: seed,
        };
        config.validate()?;
        Ok(config)
    }
}

/// `simulate` command.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub version: u32,
    #[serde(flatten)]
    pub scenario: ScenarioSource,
    pub market: MarketSpec,
    pub strategies: Vec<Strategy>,
}

impl SimulateConfig {
    pub fn validate(&self) -> Result<()> {
        check_version(self.version)?;
        if self.strategies.is_empty() {
            bail!("simulate config needs at least one strategy");
        }
        Ok(())
    }
}

/// Reference distance: fixed, or solved from the scenario pool.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum KChoice {
    Fixed(usize),
    Auto { auto: AutoK },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoK {
    pub rule: ScoringRule,
    #[serde(default = "default_y1_grid")]
    pub y1: GridSpec,
}

/// `audit` command.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditFileConfig {
    pub version: u32,
    #[serde(flatten)]
    pub scenario: ScenarioSource,
    pub epsilon: f64,
    pub k: KChoice,
    #[serde(default = "floor_none")]
    pub floor: FloorPolicy,
    #[serde(default = "belief_half")]
    pub initial_report: Belief,
    #[serde(default = "default_off_grid")]
    pub off_structure_grid: usize,
    #[serde(default = "default_enum_cap")]
    pub enumeration_cap: usize,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
}

fn floor_none() -> FloorPolicy {
    FloorPolicy::None
}

fn belief_half() -> Belief {
    Belief::HALF
}

fn default_off_grid() -> usize {
    99
}

fn default_enum_cap() -> usize {
    1_000_000
}

fn default_mc_samples() -> usize {
    100_000
}

impl AuditFileConfig {
    pub fn validate(&self) -> Result<()> {
        check_version(self.version)?;
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            bail!("epsilon must be positive");
        }
        Ok(())
    }
}

/// `equilibria` command; each section is optional.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriaConfig {
    pub version: u32,
    #[serde(default)]
    pub uninformative: Option<UninformativeSpec>,
    #[serde(default)]
    pub switching: Option<SwitchingSpec>,
    #[serde(default)]
    pub permutation: Option<PermutationSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UninformativeSpec {
    pub q_bar: Belief,
    pub n_scored: usize,
    pub q0: Belief,
    /// When present, a simulator run with this scenario cross-checks the
    /// closed-form payoff vector.
    #[serde(default)]
    pub simulate: Option<UninformativeSim>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UninformativeSim {
    #[serde(flatten)]
    pub scenario: ScenarioSource,
    pub market: MarketSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchingSpec {
    pub n: usize,
    pub window: usize,
    pub q0: Belief,
    #[serde(default = "floor_none")]
    pub floor: FloorPolicy,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PermutationSpec {
    #[serde(flatten)]
    pub scenario: ScenarioSource,
    pub market: MarketSpec,
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_permutation_runs")]
    pub runs: usize,
}

fn default_permutation_runs() -> usize {
    25
}

impl EquilibriaConfig {
    pub fn validate(&self) -> Result<()> {
        check_version(self.version)?;
        if self.uninformative.is_none() && self.switching.is_none() && self.permutation.is_none() {
            bail!("equilibria config needs at least one section");
        }
        Ok(())
    }
}

/// `amm-check` command.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmmCheckConfig {
    pub version: u32,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_liquidity")]
    pub liquidity: Vec<f64>,
    /// Quantities are drawn from [-range, range].
    #[serde(default = "default_quantity_range")]
    pub quantity_range: f64,
    #[serde(default)]
    pub replay: Option<ReplaySpec>,
}

fn default_trials() -> usize {
    10_000
}

fn default_liquidity() -> Vec<f64> {
    vec![0.5, 1.0, 10.0]
}

fn default_quantity_range() -> f64 {
    3.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplaySpec {
    #[serde(flatten)]
    pub scenario: ScenarioSource,
    pub market: MarketSpec,
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_replay_runs")]
    pub runs: usize,
}

fn default_replay_runs() -> usize {
    50
}

impl AmmCheckConfig {
    pub fn validate(&self) -> Result<()> {
        check_version(self.version)?;
        if self.trials == 0 || self.liquidity.is_empty() {
            bail!("amm-check needs trials > 0 and at least one liquidity value");
        }
        Ok(())
    }
}
