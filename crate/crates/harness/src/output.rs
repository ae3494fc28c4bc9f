//! Aggregated curves and the files written for each experiment.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use matchbandits_core::market::MarketFile;

use crate::error::{HarnessError, Result};
use crate::plot;
use crate::runner::{phase_names, Experiment, PolicyRun};

/// Mean and standard error over replicas at each checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub policy: String,
    pub metric: &'static str,
    /// 1-based player, or `None` for the max over players.
    pub player: Option<usize>,
    pub rounds: Vec<u64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Mean and standard error of `values`, folded in the given order.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn curve_from(
    policy: &str,
    metric: &'static str,
    player: Option<usize>,
    rounds: &[u64],
    series: &[Vec<f64>],
) -> Curve {
    let mut mean = Vec::with_capacity(rounds.len());
    let mut stderr = Vec::with_capacity(rounds.len());
    let mut column = Vec::with_capacity(series.len());
    for c in 0..rounds.len() {
        column.clear();
        column.extend(series.iter().map(|s| s[c]));
        let (m, s) = mean_stderr(&column);
        mean.push(m);
        stderr.push(s);
    }
    Curve {
        policy: policy.to_string(),
        metric,
        player,
        rounds: rounds.to_vec(),
        mean,
        stderr,
    }
}

/// Per-player series of one metric, plus the max over players.
fn player_series(runs: &[&PolicyRun], n: usize, points: usize, reward: bool) -> Vec<Vec<Vec<f64>>> {
    let mut out = vec![Vec::with_capacity(runs.len()); n + 1];
    for run in runs {
        let data = if reward { &run.reward } else { &run.regret };
        let mut max = vec![f64::NEG_INFINITY; points];
        for (i, series) in out.iter_mut().take(n).enumerate() {
            let s: Vec<f64> = (0..points).map(|c| data[c * n + i]).collect();
            for (m, v) in max.iter_mut().zip(&s) {
                *m = m.max(*v);
            }
            series.push(s);
        }
        out[n].push(max);
    }
    out
}

/// Regret and reward curves of every policy.
pub fn aggregate(exp: &Experiment) -> Vec<Curve> {
    let n = exp.prepared.market.n_players;
    let rounds = &exp.prepared.checkpoints;
    let mut curves = Vec::new();
    for (p, label) in exp.labels().iter().enumerate() {
        let runs: Vec<&PolicyRun> = exp.runs(p).collect();
        if runs.is_empty() {
            continue;
        }
        for (metric, reward) in [("regret", false), ("reward", true)] {
            let series = player_series(&runs, n, rounds.len(), reward);
            for (i, s) in series.iter().enumerate() {
                let player = (i < n).then_some(i + 1);
                curves.push(curve_from(label, metric, player, rounds, s));
            }
        }
    }
    curves
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub fn write_curves(path: &Path, curves: &[Curve]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["policy", "metric", "round", "player", "mean", "stderr"])?;
    for c in curves {
        let player = c.player.map_or("max".to_string(), |p| p.to_string());
        for k in 0..c.rounds.len() {
            w.write_record([
                c.policy.as_str(),
                c.metric,
                &c.rounds[k].to_string(),
                &player,
                &c.mean[k].to_string(),
                &c.stderr[k].to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn write_ledgers(path: &Path, exp: &Experiment) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "policy",
        "round",
        "player",
        "benchmark",
        "expected_reward",
        "regret",
        "regime",
        "phase",
    ])?;
    if let Some(first) = exp.replicas.first() {
        for run in &first.runs {
            for row in run.rows.iter().flatten() {
                w.write_record([
                    run.label.as_str(),
                    &row.round.to_string(),
                    &row.player.to_string(),
                    &row.benchmark.to_string(),
                    &row.expected_reward.to_string(),
                    &row.regret.to_string(),
                    &row.regime_flag.to_string(),
                    row.phase_tag,
                ])?;
            }
        }
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

#[derive(Serialize)]
struct ReplicaSummary<'a> {
    replica: usize,
    seed: u64,
    final_regret: &'a [f64],
    final_max_regret: f64,
    phase_counts: serde_json::Value,
    radius: Option<f64>,
    batches: &'a [matchbandits_core::policies::BatchRecord],
    budget_violations: &'a [u32],
    comparison_rounds: u64,
    small_gap_rounds: u64,
    failure: Option<&'a str>,
}

pub fn diagnostics(exp: &Experiment) -> serde_json::Value {
    let prep = &exp.prepared;
    let cfg = &prep.config;
    let names = phase_names();
    let policies: Vec<serde_json::Value> = exp
        .labels()
        .iter()
        .enumerate()
        .map(|(p, label)| {
            let replicas: Vec<ReplicaSummary> = exp
                .replicas
                .iter()
                .map(|r| {
                    let run = &r.runs[p];
                    ReplicaSummary {
                        replica: r.replica,
                        seed: r.seed,
                        final_regret: &run.final_regret,
                        final_max_regret: run.final_max_regret(),
                        phase_counts: names
                            .iter()
                            .zip(run.phase_counts)
                            .map(|(k, v)| (k.to_string(), json!(v)))
                            .collect::<serde_json::Map<_, _>>()
                            .into(),
                        radius: run.radius,
                        batches: &run.batches,
                        budget_violations: &run.budget_violations,
                        comparison_rounds: run.comparison_rounds,
                        small_gap_rounds: run.small_gap_rounds,
                        failure: run.failure.as_deref(),
                    }
                })
                .collect();
            let finals: Vec<f64> = exp.runs(p).map(PolicyRun::final_max_regret).collect();
            let (mean, stderr) = match finals.is_empty() {
                true => (None, None),
                false => {
                    let (m, s) = mean_stderr(&finals);
                    (Some(m), Some(s))
                }
            };
            json!({
                "label": label,
                "algorithm": cfg.policies[p].algorithm,
                "final_max_regret_mean": mean,
                "final_max_regret_stderr": stderr,
                "replicas": replicas,
            })
        })
        .collect();
    json!({
        "schema_version": cfg.schema_version,
        "name": cfg.name,
        "horizon": cfg.horizon,
        "replicas": cfg.replicas,
        "seed": cfg.seed,
        "ridge": cfg.ridge,
        "benchmark": prep.benchmark,
        "assumed_defaults": cfg.assumed_defaults(),
        "market": MarketFile::from(&prep.market),
        "environment": prep.environment,
        "policies": policies,
    })
}

/// Writes ledgers.csv, curves.csv, diagnostics.json, config.json and
/// plot.svg into `dir`.
pub fn write_bundle(dir: &Path, exp: &Experiment) -> Result<Vec<Curve>> {
    create_dir(dir)?;
    let curves = aggregate(exp);
    let curves_path = dir.join("curves.csv");
    write_curves(&curves_path, &curves)?;
    if exp.prepared.config.write_ledger {
        write_ledgers(&dir.join("ledgers.csv"), exp)?;
    }
    let diag = serde_json::to_string_pretty(&diagnostics(exp))?;
    write_text(&dir.join("diagnostics.json"), &diag)?;
    write_text(&dir.join("config.json"), &exp.prepared.config.to_json())?;
    let title = exp
        .prepared
        .config
        .name
        .clone()
        .unwrap_or_else(|| "max regret over players".to_string());
    let svg = plot::svg_from_csv(&curves_path, "regret", &title)?;
    write_text(&dir.join("plot.svg"), &svg)?;
    Ok(curves)
}
