use std::fs;
use std::path::Path;

use matchbandits::cli::run_cli;

const SMALL: &str = r#"{
    "schema_version": 1,
    "name": "small",
    "market": {"kind": "generate", "n_players": 3, "n_arms": 3, "dim": 2, "seed": 5},
    "environment": {"kind": "stochastic", "model": {"kind": "normalized_gaussian", "mean": 10.0, "var": 1.0}},
    "policies": [
        {"algorithm": {"kind": "barb"}},
        {"algorithm": {"kind": "etc", "explore_rounds": 20}},
        {"algorithm": {"kind": "batched_etc", "initial_explore": 5}}
    ],
    "horizon": 200,
    "replicas": 3,
    "seed": 11,
    "curve_points": 20
}"#;

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> i32 {
    let mut full = vec!["matchbandits"];
    full.extend_from_slice(args);
    run_cli(full)
}

#[test]
fn usage_and_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["nope"]), 2);
    assert_eq!(run(&[]), 2);
    assert_eq!(run(&["run", "/definitely/missing.json"]), 1);
    let bad = write_config(
        dir.path(),
        "bad.json",
        &SMALL.replace("\"horizon\": 200", "\"horizon\": 200, \"extra\": 1"),
    );
    assert_eq!(run(&["run", &bad]), 1);
    let v2 = write_config(
        dir.path(),
        "v2.json",
        &SMALL.replace("\"schema_version\": 1", "\"schema_version\": 2"),
    );
    assert_eq!(run(&["run", &v2]), 1);
    assert_eq!(run(&["reproduce", "fig9"]), 1);
}

#[test]
fn single_round_writes_one_row_per_player() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "one.json", SMALL);
    let out = dir.path().join("out");
    let out_s = out.to_string_lossy().into_owned();
    assert_eq!(
        run(&[
            "run",
            &cfg,
            "--horizon",
            "1",
            "--replicas",
            "1",
            "--out",
            &out_s
        ]),
        0
    );
    let mut reader = csv::Reader::from_path(out.join("ledgers.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    // three policies, three players, one round
    assert_eq!(rows.len(), 9);
    for policy in ["barb", "etc", "batched-etc"] {
        let mine: Vec<_> = rows.iter().filter(|r| &r[0] == policy).collect();
        assert_eq!(mine.len(), 3);
        assert!(mine.iter().all(|r| &r[1] == "1"));
        let players: Vec<&str> = mine.iter().map(|r| &r[2]).collect();
        assert_eq!(players, ["1", "2", "3"]);
    }
    for f in ["curves.csv", "diagnostics.json", "config.json", "plot.svg"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let a = dir.path().join("a").to_string_lossy().into_owned();
    let b = dir.path().join("b").to_string_lossy().into_owned();
    assert_eq!(run(&["run", &cfg, "--out", &a]), 0);
    assert_eq!(run(&["run", &cfg, "--out", &b]), 0);
    for f in ["curves.csv", "ledgers.csv", "diagnostics.json", "plot.svg"] {
        let x = fs::read(Path::new(&a).join(f)).unwrap();
        let y = fs::read(Path::new(&b).join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
    let c = dir.path().join("c").to_string_lossy().into_owned();
    assert_eq!(run(&["run", &cfg, "--out", &c, "--seed", "12"]), 0);
    assert_ne!(
        fs::read(Path::new(&a).join("ledgers.csv")).unwrap(),
        fs::read(Path::new(&c).join("ledgers.csv")).unwrap()
    );
}

#[test]
fn sweep_writes_one_row_per_value_and_policy() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace(
        r#"{"algorithm": {"kind": "etc", "explore_rounds": 20}},
        {"algorithm": {"kind": "batched_etc", "initial_explore": 5}}"#,
        "",
    );
    let text = text.replace(
        r#"{"algorithm": {"kind": "barb"}},"#,
        r#"{"algorithm": {"kind": "barb"}}"#,
    );
    let cfg = write_config(dir.path(), "s.json", &text);
    let out = dir.path().join("sweep").to_string_lossy().into_owned();
    let code = run(&[
        "sweep",
        &cfg,
        "--param",
        "policies.0.algorithm.initial_gap",
        "--values",
        "0.4,0.6,0.8,1.0",
        "--out",
        &out,
    ]);
    assert_eq!(code, 0);
    let body = fs::read_to_string(Path::new(&out).join("sweep.csv")).unwrap();
    assert_eq!(body.lines().count(), 5);
    assert!(body.lines().nth(1).unwrap().starts_with("0.4,barb,"));
    assert_eq!(
        run(&[
            "sweep",
            &cfg,
            "--param",
            "policies.7.x",
            "--values",
            "1",
            "--out",
            &out
        ]),
        1
    );
}

#[test]
fn diagnose_gap_reports_each_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let env = write_config(
        dir.path(),
        "env.json",
        r#"{
            "schema_version": 1,
            "theta": [[1.0]],
            "n_arms": 3,
            "environment": {"kind": "stochastic", "arms": [
                {"kind": "uniform_box", "lo": 0.0, "hi": 0.5},
                {"kind": "uniform_box", "lo": 0.25, "hi": 0.75},
                {"kind": "uniform_box", "lo": 0.5, "hi": 1.0}
            ]},
            "horizons": [1000, 100000],
            "n_samples": 20000
        }"#,
    );
    let out = dir.path().join("gap.json");
    assert_eq!(
        run(&["diagnose-gap", &env, "--out", &out.to_string_lossy()]),
        0
    );
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
    let rows = v["per_horizon"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    let g0 = rows[0]["min_gap"].as_f64().unwrap();
    let g1 = rows[1]["min_gap"].as_f64().unwrap();
    assert!(g0 > g1 && g1 > 0.0);
}

#[test]
fn oracle_check_and_plot_commands() {
    assert_eq!(
        run(&["oracle-check", "--instances", "12", "--seed", "3"]),
        0
    );
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let out = dir.path().join("o");
    assert_eq!(run(&["run", &cfg, "--out", &out.to_string_lossy()]), 0);
    let svg = dir.path().join("p.svg");
    assert_eq!(
        run(&[
            "plot",
            &out.join("curves.csv").to_string_lossy(),
            "--out",
            &svg.to_string_lossy()
        ]),
        0
    );
    assert!(fs::read_to_string(svg).unwrap().contains("<polyline"));
}
