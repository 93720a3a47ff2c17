//! End-to-end tests of the binary: exit codes, artifact determinism, and
//! the documented flag surface.

use std::path::Path;
use std::process::{Command, Output};

fn selfres() -> Command {
    Command::new(env!("CARGO_BIN_EXE_selfres"))
}

fn write(path: &Path, contents: &str) {
    std::fs::write(path, contents).unwrap();
}

fn scenario_json() -> &'static str {
    r#"{
        "prior": 0.5,
        "models": [
            [0.9996, 0.9604, 0.0004, 0.0396],
            [0.5, 0.495, 0.5, 0.505]
        ],
        "realized_outcome": 0,
        "realized_signals": [0, 0]
    }"#
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

#[test]
fn bounds_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bounds.json");
    write(
        &config,
        r#"{
            "version": 1,
            "rules": ["cemsr"],
            "delta_gaps": [0.1],
            "etas": [0.1],
            "epsilons": [0.01],
            "y1": {"min": 0.2, "max": 0.8, "points": 7}
        }"#,
    );
    let mut outputs = Vec::new();
    for run_dir in ["a", "b"] {
        let out = dir.path().join(run_dir);
        let result = run(selfres()
            .args(["bounds", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .args(["--format", "csv", "--format", "svg", "--format", "json"]));
        assert!(result.status.success(), "{result:?}");
        outputs.push((
            std::fs::read(out.join("bounds.csv")).unwrap(),
            std::fs::read(out.join("bounds.svg")).unwrap(),
            std::fs::read(out.join("bounds.json")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn simulate_transcripts_reproduce_and_parse() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("scenario.json"), scenario_json());
    let config = dir.path().join("simulate.json");
    write(
        &config,
        r#"{
            "version": 1,
            "scenario_path": "scenario.json",
            "market": {
                "alpha": 0.25,
                "flat_fee": 0.1,
                "k": 1,
                "ref_strategy": {"kind": "terminal"},
                "floor": {"mode": "clamp", "p_min": 1e-6},
                "initial_report": 0.5
            },
            "strategies": [{"kind": "truthful"}]
        }"#,
    );
    let mut transcripts = Vec::new();
    for run_dir in ["a", "b"] {
        let out = dir.path().join(run_dir);
        let result = run(selfres()
            .args(["simulate", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .args(["--seeds", "0..4"]));
        assert!(result.status.success(), "{result:?}");
        let mut bytes = Vec::new();
        for seed in 0..=4 {
            bytes.push(std::fs::read(out.join(format!("transcript_{seed:05}.json"))).unwrap());
        }
        bytes.push(std::fs::read(out.join("summary.csv")).unwrap());
        transcripts.push(bytes);
    }
    assert_eq!(transcripts[0], transcripts[1]);

    // Transcripts parse back into the library type.
    let text = String::from_utf8(transcripts[0][0].clone()).unwrap();
    let parsed: selfres_core::market::MarketTranscript = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed.terminal_step, parsed.reports.len());
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("scenario.json"), scenario_json());

    // Configuration error: 1.
    let result = run(selfres()
        .args(["audit", "--config"])
        .arg(dir.path().join("missing.json"))
        .arg("--out")
        .arg(dir.path().join("out1")));
    assert_eq!(result.status.code(), Some(1));

    // Failing check: 2. The worked-example scenario with a next-door
    // reference has a profitable misreport.
    let failing = dir.path().join("audit_fail.json");
    write(
        &failing,
        r#"{
            "version": 1,
            "scenario_path": "scenario.json",
            "epsilon": 0.01,
            "k": 1,
            "off_structure_grid": 5
        }"#,
    );
    let result = run(selfres()
        .args(["audit", "--config"])
        .arg(&failing)
        .arg("--out")
        .arg(dir.path().join("out2")));
    assert_eq!(result.status.code(), Some(2));

    // Passing check: 0. Sharp substitutes at the solver's own k.
    let passing = dir.path().join("audit_pass.json");
    write(
        &passing,
        r#"{
            "version": 1,
            "scenario": {
                "prior": 0.5,
                "models": [
                    [0.02, 0.98, 0.98, 0.02],
                    [0.02, 0.98, 0.98, 0.02],
                    [0.02, 0.98, 0.98, 0.02],
                    [0.02, 0.98, 0.98, 0.02],
                    [0.02, 0.98, 0.98, 0.02],
                    [0.02, 0.98, 0.98, 0.02],
                    [0.02, 0.98, 0.98, 0.02]
                ],
                "realized_signals": [0]
            },
            "epsilon": 0.05,
            "k": {"auto": {"rule": "cemsr", "y1": {"min": 0.3, "max": 0.7, "points": 9}}},
            "off_structure_grid": 5
        }"#,
    );
    let out3 = dir.path().join("out3");
    let result = run(selfres()
        .args(["audit", "--config"])
        .arg(&passing)
        .arg("--out")
        .arg(&out3));
    assert_eq!(result.status.code(), Some(0), "{result:?}");
    let summary = std::fs::read_to_string(out3.join("audit_summary.csv")).unwrap();
    assert!(summary.lines().skip(1).all(|l| l.ends_with("true")));
}

#[test]
fn thread_cap_does_not_change_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("scenario.json"), scenario_json());
    let config = dir.path().join("simulate.json");
    write(
        &config,
        r#"{
            "version": 1,
            "scenario_path": "scenario.json",
            "market": {
                "expected_traders": 4,
                "flat_fee": 0.0,
                "k": 1,
                "ref_strategy": {"kind": "rolling"},
                "floor": {"mode": "clamp", "p_min": 1e-6},
                "initial_report": 0.5
            },
            "strategies": [{"kind": "truthful"}]
        }"#,
    );
    let mut summaries = Vec::new();
    for (run_dir, threads) in [("a", "1"), ("b", "4")] {
        let out = dir.path().join(run_dir);
        let result = run(selfres()
            .env("SELFRES_THREADS", threads)
            .args(["simulate", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .args(["--seeds", "0..9"]));
        assert!(result.status.success(), "{result:?}");
        summaries.push(std::fs::read(out.join("summary.csv")).unwrap());
    }
    assert_eq!(summaries[0], summaries[1]);
}

#[test]
fn equilibria_emits_extended_real_payouts() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("eq.json");
    write(
        &config,
        r#"{
            "version": 1,
            "switching": {"n": 6, "window": 2, "q0": 0.5, "floor": {"mode": "none"}}
        }"#,
    );
    let out = dir.path().join("out");
    let result = run(selfres()
        .args(["equilibria", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out));
    assert_eq!(result.status.code(), Some(0));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("equilibria.json")).unwrap())
            .unwrap();
    assert_eq!(json["switching"]["payouts"][1], "inf");
}

#[test]
fn bad_seed_range_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bounds.json");
    write(
        &config,
        r#"{"version": 1, "delta_gaps": [0.1], "etas": [0.1], "epsilons": [0.01]}"#,
    );
    let result = run(selfres()
        .args(["bounds", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("out"))
        .args(["--seeds", "5..2"]));
    assert_eq!(result.status.code(), Some(1));
}
