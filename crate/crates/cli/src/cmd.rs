//! Subcommand implementations. Every command returns whether all
//! assertion-class checks passed; artifacts are written regardless.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;

use selfres_core::amm::{equivalence_residual, replay_transcript, trade_to_belief, AmmState};
use selfres_core::bounds::k_market;
use selfres_core::curves::{d_curve_csv, eps_prime_curve_csv, k_min_table_csv};
use selfres_core::emit::{fmt_sig17, to_json_sig17};
use selfres_core::equilibria::{
    audit_epsilon_pbe, permutation_invariance, switching_payoffs, uninformative_payoffs,
    AuditConfig, DeviationAudit, PermutationCheck,
};
use selfres_core::market::{parallel_markets, run_market, RefStrategy, Strategy};
use selfres_core::prob::Belief;
use selfres_core::scoring::Score;

use crate::config::{
    AmmCheckConfig, AuditFileConfig, BoundsConfig, CurvesConfig, EquilibriaConfig, KChoice,
    SimulateConfig,
};
use crate::output::{display_score, write_atomic, Formats};
use crate::svg::{line_chart, Series};

/// Per-invocation context shared by the commands.
pub struct Ctx<'a> {
    pub config_dir: &'a Path,
    pub out: &'a Path,
    pub seeds: Vec<u64>,
    pub formats: Formats,
    pub bits: bool,
}

impl Ctx<'_> {
    fn base_seed(&self) -> u64 {
        self.seeds.first().copied().unwrap_or(0)
    }
}

/// Parses one of the core CSV tables into column-indexed rows.
fn csv_rows(csv: &str) -> (Vec<&str>, Vec<Vec<&str>>) {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let rows = lines.map(|l| l.split(',').collect()).collect();
    (header, rows)
}

#[derive(Serialize)]
struct Table<'a> {
    header: Vec<&'a str>,
    rows: Vec<Vec<&'a str>>,
}

fn write_table(ctx: &Ctx, stem: &str, csv: &str) -> Result<()> {
    if ctx.formats.csv {
        write_atomic(&ctx.out.join(format!("{stem}.csv")), csv)?;
    }
    if ctx.formats.json {
        let (header, rows) = csv_rows(csv);
        let json = to_json_sig17(&Table { header, rows })?;
        write_atomic(&ctx.out.join(format!("{stem}.json")), &json)?;
    }
    Ok(())
}

/// Groups CSV rows into labeled series keyed by a set of columns.
fn series_from(
    csv: &str,
    key_cols: &[usize],
    x_col: usize,
    y_col: usize,
    ok_col: Option<usize>,
) -> Vec<Series> {
    let (header, rows) = csv_rows(csv);
    let mut grouped: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for row in rows {
        if let Some(ok) = ok_col {
            if row.get(ok) != Some(&"ok") {
                continue;
            }
        }
        let label = key_cols
            .iter()
            .map(|&c| format!("{}={}", header[c], shorten(row[c])))
            .collect::<Vec<_>>()
            .join(" ");
        let (Ok(x), Ok(y)) = (row[x_col].parse::<f64>(), row[y_col].parse::<f64>()) else {
            continue;
        };
        grouped.entry(label).or_default().push((x, y));
    }
    grouped
        .into_iter()
        .map(|(label, points)| Series { label, points })
        .collect()
}

fn shorten(field: &str) -> String {
    match field.parse::<f64>() {
        Ok(v) => {
            let s = format!("{v:.4}");
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        }
        Err(_) => field.to_string(),
    }
}

pub fn bounds(ctx: &Ctx, cfg: &BoundsConfig) -> Result<bool> {
    cfg.validate()?;
    let csv = k_min_table_csv(
        &cfg.rules,
        &cfg.delta_gaps,
        &cfg.etas,
        &cfg.epsilons,
        cfg.y1.range(),
        cfg.y1.points,
    )?;
    write_table(ctx, "bounds", &csv)?;
    if ctx.formats.svg {
        let series = series_from(&csv, &[0, 1, 2, 3], 4, 7, Some(8));
        let chart = line_chart(
            "minimum substitutes vs market prior",
            "y1",
            "k_min",
            &series,
        );
        write_atomic(&ctx.out.join("bounds.svg"), &chart)?;
    }
    let (_, rows) = csv_rows(&csv);
    let failures = rows.iter().filter(|r| r.last() != Some(&"ok")).count();
    println!(
        "bounds: {} rows ({} solver failures) -> {}",
        rows.len(),
        failures,
        ctx.out.display()
    );
    Ok(true)
}

pub fn curves(ctx: &Ctx, cfg: &CurvesConfig) -> Result<bool> {
    cfg.validate()?;
    for &rule in &cfg.rules {
        let d_csv = d_curve_csv(rule, &cfg.priors, &cfg.etas, cfg.points_per_side)?;
        write_table(ctx, &format!("d_curve_{rule}"), &d_csv)?;
        if ctx.formats.svg {
            let series = series_from(&d_csv, &[1, 2], 5, 6, None);
            let chart = line_chart(
                &format!("gain bound vs adjustment ({rule})"),
                "delta",
                "bound",
                &series,
            );
            write_atomic(&ctx.out.join(format!("d_curve_{rule}.svg")), &chart)?;
        }

        let eps_csv = eps_prime_curve_csv(
            rule,
            cfg.delta_gap,
            &cfg.etas,
            &cfg.epsilons,
            cfg.y1.range(),
            cfg.y1.points,
        )?;
        write_table(ctx, &format!("eps_prime_{rule}"), &eps_csv)?;
        if ctx.formats.svg {
            let series = series_from(&eps_csv, &[2, 3], 4, 5, Some(7));
            let chart = line_chart(
                &format!("tolerable adjustment vs market prior ({rule})"),
                "y1",
                "eps'",
                &series,
            );
            write_atomic(&ctx.out.join(format!("eps_prime_{rule}.svg")), &chart)?;
        }
    }
    println!("curves: emitted to {}", ctx.out.display());
    Ok(true)
}

pub fn simulate(ctx: &Ctx, cfg: &SimulateConfig) -> Result<bool> {
    cfg.validate()?;
    let scenario = cfg.scenario.resolve(ctx.config_dir)?;
    // Parallel over seeds; artifacts assembled in seed order afterwards.
    type SeedRun = (u64, Vec<(String, String)>, String);
    let runs: Vec<SeedRun> = ctx
        .seeds
        .par_iter()
        .map(|&seed| -> Result<SeedRun> {
            let config = cfg.market.build(seed)?;
            let transcripts = if matches!(config.ref_strategy, RefStrategy::Parallel { .. }) {
                parallel_markets(&config, &scenario, &cfg.strategies)?
            } else {
                vec![run_market(&config, &scenario, &cfg.strategies)?]
            };
            let mut files = Vec::new();
            let mut rows = String::new();
            for (i, t) in transcripts.iter().enumerate() {
                let name = if transcripts.len() == 1 {
                    format!("transcript_{seed:05}.json")
                } else {
                    format!("transcript_{seed:05}_m{i}.json")
                };
                files.push((name, t.to_json()));
                let fee_count = t
                    .reference_assignment
                    .iter()
                    .filter(|a| matches!(a, selfres_core::market::ReferenceAssignment::FlatFee))
                    .count();
                rows.push_str(&format!(
                    "{seed},{i},{},{},{},{},{}\n",
                    t.terminal_step,
                    t.realized_outcome,
                    fmt_sig17(t.reports.last().map(|r| r.belief.p1()).unwrap_or(f64::NAN)),
                    fmt_sig17(t.mechanism_cost),
                    t.terminal_step - fee_count,
                ));
            }
            Ok((seed, files, rows))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut summary =
        String::from("seed,market,terminal_step,outcome,final_report,mechanism_cost,scored\n");
    let mut total_cost = 0.0;
    let mut total_steps = 0usize;
    for (_, files, rows) in &runs {
        for (name, json) in files {
            write_atomic(&ctx.out.join(name), json)?;
        }
        summary.push_str(rows);
    }
    let mut n_markets = 0usize;
    for (_, files, _) in &runs {
        for (_, json) in files {
            let t: selfres_core::market::MarketTranscript = serde_json::from_str(json)?;
            total_cost += t.mechanism_cost;
            total_steps += t.terminal_step;
            n_markets += 1;
        }
    }
    write_atomic(&ctx.out.join("summary.csv"), &summary)?;
    println!(
        "simulate: {} markets over {} seeds; mean length {:.2}, mean cost {}",
        n_markets,
        ctx.seeds.len(),
        total_steps as f64 / n_markets as f64,
        display_score(total_cost / n_markets as f64, ctx.bits),
    );
    Ok(true)
}

#[derive(Serialize)]
struct AuditArtifact {
    k: usize,
    epsilon: f64,
    all_pass: bool,
    audits: Vec<DeviationAudit>,
}

pub fn audit(ctx: &Ctx, cfg: &AuditFileConfig) -> Result<bool> {
    cfg.validate()?;
    let scenario = cfg.scenario.resolve(ctx.config_dir)?;
    let k = match &cfg.k {
        KChoice::Fixed(k) => *k,
        KChoice::Auto { auto } => k_market(
            auto.rule,
            cfg.epsilon,
            scenario.pool_delta_gap(),
            scenario.pool_eta(),
            auto.y1.range(),
            auto.y1.points,
        )?,
    };
    let audit_cfg = AuditConfig {
        k,
        epsilon: cfg.epsilon,
        floor: cfg.floor,
        initial_report: cfg.initial_report,
        off_structure_grid: cfg.off_structure_grid,
        enumeration_cap: cfg.enumeration_cap,
        mc_samples: cfg.mc_samples,
        mc_seed: ctx.base_seed(),
    };
    let audits = audit_epsilon_pbe(&scenario, &audit_cfg)?;
    let all_pass = audits.iter().all(|a| a.pass);

    let artifact = AuditArtifact {
        k,
        epsilon: cfg.epsilon,
        all_pass,
        audits: audits.clone(),
    };
    write_atomic(&ctx.out.join("audit.json"), &to_json_sig17(&artifact)?)?;

    let mut csv = String::from("agent,deviations,max_gain,epsilon,pass\n");
    for a in &audits {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            a.agent,
            a.records.len(),
            fmt_sig17(a.max_gain),
            fmt_sig17(a.epsilon),
            a.pass
        ));
    }
    write_atomic(&ctx.out.join("audit_summary.csv"), &csv)?;

    for a in &audits {
        println!(
            "audit: agent {} max gain {} vs epsilon {} -> {}",
            a.agent,
            display_score(a.max_gain, ctx.bits),
            display_score(a.epsilon, ctx.bits),
            if a.pass { "pass" } else { "FAIL" }
        );
    }
    println!(
        "audit: k = {k}, overall {}",
        if all_pass { "pass" } else { "FAIL" }
    );
    Ok(all_pass)
}

#[derive(Serialize)]
struct EquilibriaArtifact {
    #[serde(skip_serializing_if = "Option::is_none")]
    uninformative: Option<UninformativeResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    switching: Option<SwitchingResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    permutation: Option<PermutationResult>,
}

#[derive(Serialize)]
struct UninformativeResult {
    #[serde(with = "selfres_core::emit::score_vec_serde")]
    payouts: Vec<Score>,
    #[serde(skip_serializing_if = "Option::is_none")]
    simulation_matches: Option<bool>,
}

#[derive(Serialize)]
struct SwitchingResult {
    #[serde(with = "selfres_core::emit::score_vec_serde")]
    payouts: Vec<Score>,
}

#[derive(Serialize)]
struct PermutationResult {
    runs: usize,
    all_pass: bool,
    checks: Vec<PermutationCheck>,
}

pub fn equilibria(ctx: &Ctx, cfg: &EquilibriaConfig) -> Result<bool> {
    cfg.validate()?;
    let mut all_pass = true;
    let mut payoff_csv = String::from("profile,agent,payout\n");

    let uninformative = match &cfg.uninformative {
        Some(spec) => {
            let payouts = uninformative_payoffs(spec.q_bar, spec.n_scored, spec.q0);
            for (i, p) in payouts.iter().enumerate() {
                payoff_csv.push_str(&format!("uninformative,{},{}\n", i + 1, fmt_sig17(*p)));
            }
            let simulation_matches = match &spec.simulate {
                Some(sim) => {
                    let scenario = sim.scenario.resolve(ctx.config_dir)?;
                    let config = sim.market.build(ctx.base_seed())?;
                    let t = run_market(&config, &scenario, &[Strategy::Uninformative(spec.q_bar)])?;
                    let n_scored = t.terminal_step.saturating_sub(config.k);
                    let expected =
                        uninformative_payoffs(spec.q_bar, n_scored, config.initial_report);
                    let matches = expected
                        .iter()
                        .zip(&t.payouts)
                        .all(|(e, p)| (e - p).abs() <= 1e-12);
                    all_pass &= matches;
                    Some(matches)
                }
                None => None,
            };
            println!(
                "equilibria: uninformative opener payout {}",
                display_score(payouts.first().copied().unwrap_or(0.0), ctx.bits)
            );
            Some(UninformativeResult {
                payouts,
                simulation_matches,
            })
        }
        None => None,
    };

    let switching = match &cfg.switching {
        Some(spec) => {
            let payouts = switching_payoffs(spec.n, spec.window, spec.q0, spec.floor)?;
            for (i, p) in payouts.iter().enumerate() {
                payoff_csv.push_str(&format!("switching,{},{}\n", i + 1, fmt_sig17(*p)));
            }
            println!(
                "equilibria: switching window {} pays {} scored agents, last {}",
                spec.window,
                payouts.len(),
                payouts
                    .last()
                    .map(|&p| display_score(p, ctx.bits))
                    .unwrap_or_default()
            );
            Some(SwitchingResult { payouts })
        }
        None => None,
    };

    let permutation = match &cfg.permutation {
        Some(spec) => {
            let scenario = spec.scenario.resolve(ctx.config_dir)?;
            let checks: Vec<PermutationCheck> = (0..spec.runs)
                .map(|i| -> Result<PermutationCheck> {
                    let config = spec.market.build(ctx.base_seed().wrapping_add(i as u64))?;
                    Ok(permutation_invariance(
                        &config,
                        &scenario,
                        &spec.strategies,
                    )?)
                })
                .collect::<Result<Vec<_>>>()?;
            let section_pass = checks.iter().all(|c| c.pass);
            all_pass &= section_pass;
            println!(
                "equilibria: permutation invariance over {} runs -> {}",
                spec.runs,
                if section_pass { "pass" } else { "FAIL" }
            );
            Some(PermutationResult {
                runs: spec.runs,
                all_pass: section_pass,
                checks,
            })
        }
        None => None,
    };

    let artifact = EquilibriaArtifact {
        uninformative,
        switching,
        permutation,
    };
    write_atomic(&ctx.out.join("equilibria.json"), &to_json_sig17(&artifact)?)?;
    write_atomic(&ctx.out.join("payoffs.csv"), &payoff_csv)?;
    Ok(all_pass)
}

#[derive(Serialize)]
struct AmmArtifact {
    identity: IdentityResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    replay: Option<ReplayResult>,
}

#[derive(Serialize)]
struct IdentityResult {
    trials: usize,
    worst_residual: f64,
    pass: bool,
}

#[derive(Serialize)]
struct ReplayResult {
    runs: usize,
    worst_scaled_residual: f64,
    pass: bool,
}

#[derive(Serialize)]
struct TradeLogRecord {
    step: usize,
    pre: AmmState,
    target: f64,
    cash_flow: f64,
}

/// JSON-lines trade log: one record per report replayed as a trade.
fn write_trade_log(
    ctx: &Ctx,
    transcript: &selfres_core::market::MarketTranscript,
    initial_report: Belief,
    liquidity: f64,
) -> Result<()> {
    let mut state = AmmState::with_price(initial_report, liquidity)?;
    let mut log = String::new();
    for (step, report) in transcript.reports.iter().enumerate() {
        let (next, cash_flow) = trade_to_belief(&state, report.belief)?;
        log.push_str(&to_json_sig17(&TradeLogRecord {
            step: step + 1,
            pre: state,
            target: report.belief.p1(),
            cash_flow,
        })?);
        log.push('\n');
        state = next;
    }
    write_atomic(&ctx.out.join("trade_log.jsonl"), &log)
}

pub fn amm_check(ctx: &Ctx, cfg: &AmmCheckConfig) -> Result<bool> {
    cfg.validate()?;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(ctx.base_seed());
    let mut worst: f64 = 0.0;
    for _ in 0..cfg.trials {
        let b = cfg.liquidity[rng.random_range(0..cfg.liquidity.len())];
        let state = AmmState {
            quantities: [
                rng.random_range(-cfg.quantity_range..cfg.quantity_range),
                rng.random_range(-cfg.quantity_range..cfg.quantity_range),
            ],
            liquidity: b,
        };
        let target = Belief::new(rng.random_range(0.02..0.98))?;
        let (next, _) = trade_to_belief(&state, target)?;
        let reference = Belief::new(rng.random_range(0.02..0.98))?;
        worst = worst.max(equivalence_residual(&[state, next], reference));
    }
    let identity = IdentityResult {
        trials: cfg.trials,
        worst_residual: worst,
        pass: worst < 1e-9,
    };
    println!(
        "amm-check: identity residual {:.3e} over {} trials -> {}",
        identity.worst_residual,
        identity.trials,
        if identity.pass { "pass" } else { "FAIL" }
    );

    let replay = match &cfg.replay {
        Some(spec) => {
            let scenario = spec.scenario.resolve(ctx.config_dir)?;
            let mut worst_scaled: f64 = 0.0;
            for i in 0..spec.runs {
                let config = spec.market.build(ctx.base_seed().wrapping_add(i as u64))?;
                let transcript = run_market(&config, &scenario, &spec.strategies)?;
                if i == 0 {
                    write_trade_log(ctx, &transcript, config.initial_report, cfg.liquidity[0])?;
                }
                for &b in &cfg.liquidity {
                    for rec in replay_transcript(&transcript, config.initial_report, b)? {
                        worst_scaled = worst_scaled.max(rec.residual / b);
                    }
                }
            }
            let pass = worst_scaled < 1e-9;
            println!(
                "amm-check: replay residual {:.3e} (per unit liquidity) over {} runs -> {}",
                worst_scaled,
                spec.runs,
                if pass { "pass" } else { "FAIL" }
            );
            Some(ReplayResult {
                runs: spec.runs,
                worst_scaled_residual: worst_scaled,
                pass,
            })
        }
        None => None,
    };

    let all_pass = identity.pass && replay.as_ref().is_none_or(|r| r.pass);
    let artifact = AmmArtifact { identity, replay };
    write_atomic(&ctx.out.join("amm_check.json"), &to_json_sig17(&artifact)?)?;
    Ok(all_pass)
}

/// Seed list from `--seed` / `--seeds a..b` (inclusive).
pub fn parse_seeds(seed: u64, seeds: Option<&str>) -> Result<Vec<u64>> {
    match seeds {
        None => Ok(vec![seed]),
        Some(range) => {
            let (a, b) = range
                .split_once("..")
                .context("seed range must look like a..b")?;
            let a: u64 = a.trim().parse().context("seed range start")?;
            let b: u64 = b.trim().parse().context("seed range end")?;
            if b < a {
                anyhow::bail!("seed range end before start");
            }
            Ok((a..=b).collect())
        }
    }
}
