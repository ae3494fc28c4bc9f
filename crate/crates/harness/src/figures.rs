//! Configurations and post-processing behind `reproduce`.

use std::path::{Path, PathBuf};

use matchbandits_core::environments::{
    appendix_h_cdf, appendix_h_contexts, estimate_min_gap, min_gap_from_cdf, stream_rng,
    AdversarialMode, ContextModel, Stream,
};
use matchbandits_core::market::MarketFile;
use matchbandits_core::regret::{oracle_reward_comparison, RewardSeries};
use nalgebra::DVector;

use crate::config::{
    Algorithm, BenchmarkSpec, EnvironmentSpec, ExperimentConfig, MarketSpec, PolicyEntry,
    DEFAULT_BOUNDS, SCHEMA_VERSION,
};
use crate::error::{HarnessError, Result};
use crate::output::{mean_stderr, write_bundle, write_text};
use crate::plot::{render, Series};
use crate::runner::{prepare, run_experiment, Experiment};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Figure {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    FigH,
}

impl Figure {
    pub const ALL: [Figure; 7] = [
        Figure::Fig1,
        Figure::Fig2,
        Figure::Fig3,
        Figure::Fig4,
        Figure::Fig5,
        Figure::Fig6,
        Figure::FigH,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Figure::Fig1 => "fig1",
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig5 => "fig5",
            Figure::Fig6 => "fig6",
            Figure::FigH => "figH",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
    }
}

/// Overrides shared by every figure.
#[derive(Clone, Debug, PartialEq)]
pub struct FigureOptions {
    pub horizon: u64,
    pub replicas: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for FigureOptions {
    fn default() -> Self {
        Self {
            horizon: 100_000,
            replicas: 10,
            seed: 0,
            out: PathBuf::from("figures"),
        }
    }
}

/// Mixing level of the rank-deficient context model.
pub const DEGENERATE_MIXING: f64 = 0.05;

fn base(
    name: &str,
    n: usize,
    dim: usize,
    environment: EnvironmentSpec,
    policies: Vec<PolicyEntry>,
    opts: &FigureOptions,
) -> ExperimentConfig {
    ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        name: Some(name.to_string()),
        market: MarketSpec::Generate {
            n_players: n,
            n_arms: n,
            dim,
            bounds: None,
            seed: None,
        },
        environment,
        policies,
        horizon: opts.horizon,
        replicas: opts.replicas,
        seed: opts.seed,
        ridge: 1.0,
        noise: Default::default(),
        benchmark: BenchmarkSpec::Stable,
        curve_points: 1000,
        write_ledger: true,
        output_dir: None,
    }
}

pub fn well_conditioned() -> EnvironmentSpec {
    EnvironmentSpec::Stochastic {
        model: Some(ContextModel::NormalizedGaussian {
            mean: 10.0,
            var: 1.0,
        }),
        arms: None,
    }
}

pub fn degenerate() -> EnvironmentSpec {
    EnvironmentSpec::Stochastic {
        model: Some(ContextModel::OrthonormalMixing {
            mixing: DEGENERATE_MIXING,
        }),
        arms: None,
    }
}

/// Fixed contexts: each arm jitters by `RANK_DEFICIENT_JITTER` around its
/// own direction, so a single arm's covariance is numerically rank zero.
pub const RANK_DEFICIENT_JITTER: f64 = 0.002;

const RANK_DEFICIENT_ANCHORS: [[f64; 3]; 4] = [
    [0.254, 0.459, -0.792],
    [0.107, 0.713, -0.619],
    [-0.399, 0.857, -0.092],
    [0.075, 0.877, 0.357],
];

/// 4x4 market on the rank-deficient contexts. All players share one
/// parameter with utilities about 0.04, 0.18, 0.32, 0.47 (adjacent gaps
/// above 0.13), and the arm rankings make the player-optimal stable
/// matching the reverse of the identity. Pulling only arm `i` reveals
/// `theta` along one direction, which ranks arm `i` first for player `i`.
pub fn rank_deficient_market() -> MarketSpec {
    MarketSpec::Instance(MarketFile {
        n_players: 4,
        n_arms: 4,
        dim: 3,
        arm_prefs: vec![
            vec![4, 3, 2, 1],
            vec![3, 4, 1, 2],
            vec![2, 1, 4, 3],
            vec![1, 2, 3, 4],
        ],
        theta: vec![vec![0.076, 0.436, 0.222]; 4],
        bounds: DEFAULT_BOUNDS,
    })
}

pub fn rank_deficient_contexts() -> EnvironmentSpec {
    EnvironmentSpec::Stochastic {
        model: None,
        arms: Some(
            RANK_DEFICIENT_ANCHORS
                .iter()
                .map(|a| ContextModel::Anchored {
                    anchor: a.to_vec(),
                    jitter: RANK_DEFICIENT_JITTER,
                })
                .collect(),
        ),
    }
}

fn rank_deficient_config(
    name: &str,
    policies: Vec<PolicyEntry>,
    opts: &FigureOptions,
) -> ExperimentConfig {
    let mut c = base(name, 4, 3, rank_deficient_contexts(), policies, opts);
    c.market = rank_deficient_market();
    c
}

fn comparison_policies(h: u64) -> Vec<PolicyEntry> {
    vec![
        PolicyEntry::new(Algorithm::barb(0.5)),
        PolicyEntry::new(Algorithm::batched_etc(100)),
        PolicyEntry::new(Algorithm::etc(h)),
    ]
}

/// BARB, Batched-ETC and ETC on the well-conditioned 4x4 market.
pub fn fig1_config(opts: &FigureOptions) -> ExperimentConfig {
    base(
        "stochastic contexts, 4x4",
        4,
        3,
        well_conditioned(),
        comparison_policies(5000),
        opts,
    )
}

/// The same comparison with rank-deficient contexts.
pub fn fig2_config(opts: &FigureOptions) -> ExperimentConfig {
    rank_deficient_config(
        "rank-deficient contexts, 4x4",
        comparison_policies(5000),
        opts,
    )
}

/// The rank-deficient comparison in a 25x25 market.
pub fn large_market_config(opts: &FigureOptions) -> ExperimentConfig {
    let mut c = base(
        "rank-deficient contexts, 25x25",
        25,
        3,
        degenerate(),
        comparison_policies(10_000),
        opts,
    );
    c.write_ledger = false;
    c
}

/// BARB for `N = K` in `{3, 6, 9, 12}`.
pub fn fig3_configs(opts: &FigureOptions) -> Vec<(usize, ExperimentConfig)> {
    [3usize, 6, 9, 12]
        .into_iter()
        .map(|n| {
            let mut c = base(
                &format!("BARB, {n}x{n}"),
                n,
                3,
                degenerate(),
                vec![PolicyEntry::new(Algorithm::barb(0.5))],
                opts,
            );
            c.write_ledger = false;
            (n, c)
        })
        .collect()
}

/// BARB with initial gap in `{0.4, 0.6, 0.8, 1.0}`.
pub fn fig4_config(opts: &FigureOptions) -> ExperimentConfig {
    let policies = [0.4, 0.6, 0.8, 1.0]
        .into_iter()
        .map(|g| PolicyEntry::labeled(Algorithm::barb(g), &format!("barb-{g:.1}")))
        .collect();
    rank_deficient_config("BARB initial gap", policies, opts)
}

fn adversarial_config(
    name: &str,
    n: usize,
    mode: AdversarialMode,
    opts: &FigureOptions,
) -> ExperimentConfig {
    let mut c = base(
        name,
        n,
        3,
        EnvironmentSpec::Adversarial {
            mode,
            large_gap: None,
            small_gap: None,
        },
        vec![
            PolicyEntry::new(Algorithm::adeco()),
            PolicyEntry::new(Algorithm::known_utility()),
        ],
        opts,
    );
    c.benchmark = BenchmarkSpec::approximate();
    c
}

/// AdECO against the known-utility learner with alternating contexts.
pub fn fig5_config(opts: &FigureOptions) -> ExperimentConfig {
    adversarial_config(
        "adversarial contexts, alternating",
        4,
        AdversarialMode::Alternating,
        opts,
    )
}

/// Small-gap probability `p` in `{0.1, 0.5, 0.9}`.
pub fn fig6_configs(opts: &FigureOptions) -> Vec<(f64, ExperimentConfig)> {
    [0.1, 0.5, 0.9]
        .into_iter()
        .map(|p| {
            let mut c = adversarial_config(
                &format!("adversarial contexts, p = {p}"),
                4,
                AdversarialMode::BernoulliRegime { p },
                opts,
            );
            c.write_ledger = false;
            (p, c)
        })
        .collect()
}

/// 3x3 adversarial market used to check the growth of the gap-switched
/// regret of AdECO.
pub fn adeco_growth_config(opts: &FigureOptions) -> ExperimentConfig {
    let mut c = adversarial_config("AdECO, 3x3", 3, AdversarialMode::Alternating, opts);
    c.policies.truncate(1);
    c.write_ledger = false;
    c
}

pub fn run_config(config: ExperimentConfig) -> Result<Experiment> {
    run_experiment(prepare(config, Path::new("."))?)
}

/// Per-replica cumulative reward of `a` minus `b`, maximized over players,
/// at every checkpoint.
pub fn max_reward_gap(exp: &Experiment, a: &str, b: &str) -> Result<Vec<Vec<f64>>> {
    let ia = exp
        .index_of(a)
        .ok_or_else(|| HarnessError::config("policies", format!("no policy {a}")))?;
    let ib = exp
        .index_of(b)
        .ok_or_else(|| HarnessError::config("policies", format!("no policy {b}")))?;
    let n = exp.prepared.market.n_players;
    let mut out = Vec::new();
    for r in &exp.replicas {
        let (ra, rb) = (&r.runs[ia], &r.runs[ib]);
        if !(ra.ok() && rb.ok()) {
            continue;
        }
        let series = |cum: &[f64]| RewardSeries {
            stream_seed: r.seed,
            n_players: n,
            cumulative: cum.to_vec(),
        };
        let diff = oracle_reward_comparison(&series(&ra.reward), &series(&rb.reward))?;
        out.push(
            (0..diff.rounds())
                .map(|c| {
                    (0..n)
                        .map(|i| diff.at(c, i))
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect(),
        );
    }
    Ok(out)
}

/// Label plus `(round, mean, stderr)` rows.
type Group = (String, Vec<(u64, f64, f64)>);

fn summarize(rounds: &[u64], per_replica: &[Vec<f64>]) -> Vec<(u64, f64, f64)> {
    rounds
        .iter()
        .enumerate()
        .map(|(c, &t)| {
            let col: Vec<f64> = per_replica.iter().map(|r| r[c]).collect();
            let (m, s) = mean_stderr(&col);
            (t, m, s)
        })
        .collect()
}

fn max_regret_series(exp: &Experiment, label: &str) -> Vec<Vec<f64>> {
    let i = exp.index_of(label).expect("label exists");
    let n = exp.prepared.market.n_players;
    exp.runs(i)
        .map(|run| {
            run.regret
                .chunks(n)
                .map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
                .collect()
        })
        .collect()
}

fn write_grouped(path: &Path, key: &str, groups: &[Group]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([key, "round", "mean", "stderr"])?;
    for (k, rows) in groups {
        for (t, m, s) in rows {
            w.write_record([k.as_str(), &t.to_string(), &m.to_string(), &s.to_string()])?;
        }
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn grouped_svg(groups: &[Group], title: &str, y: &str) -> String {
    let series: Vec<Series> = groups
        .iter()
        .map(|(k, rows)| Series {
            name: k.clone(),
            x: rows.iter().map(|r| r.0 as f64).collect(),
            y: rows.iter().map(|r| r.1).collect(),
            err: Some(rows.iter().map(|r| r.2).collect()),
        })
        .collect();
    render(&series, title, "round", y)
}

/// Writes the CDF comparison for the one-player, three-arm example.
pub fn fig_h(opts: &FigureOptions, n_samples: usize) -> Result<PathBuf> {
    let dir = opts.out.join("figH");
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    let theta = [DVector::from_element(1, 1.0)];
    let mut rng = stream_rng(opts.seed, Stream::Diagnostics);
    let diag = estimate_min_gap(&appendix_h_contexts(), &theta, 1000, n_samples, &mut rng)?;
    let horizons = [1_000u64, 10_000, 100_000];
    let path = dir.join("figH.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "x",
        "analytic_cdf",
        "empirical_cdf",
        "bound_T1000",
        "bound_T10000",
        "bound_T100000",
    ])?;
    let grid: Vec<f64> = (1..=500).map(|i| 0.5 * i as f64 / 500.0).collect();
    for &x in &grid {
        let mut rec = vec![
            x.to_string(),
            appendix_h_cdf(x).to_string(),
            diag.cdf.eval(x).to_string(),
        ];
        rec.extend(
            horizons
                .iter()
                .map(|&t| ((t as f64).ln() / (t as f64 * x * x)).to_string()),
        );
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))?;
    let summary: Vec<serde_json::Value> = horizons
        .iter()
        .map(|&t| {
            let (analytic, _) = min_gap_from_cdf(appendix_h_cdf, t);
            let empirical = matchbandits_core::environments::min_gap_from_samples(&diag.cdf, t).0;
            serde_json::json!({"horizon": t, "analytic": analytic, "empirical": empirical})
        })
        .collect();
    let summary = serde_json::json!({
        "n_samples": n_samples,
        "sup_error": diag.cdf.sup_distance(appendix_h_cdf),
        "min_gap": summary,
    });
    write_text(
        &dir.join("figH.json"),
        &serde_json::to_string_pretty(&summary)?,
    )?;
    let mut series = vec![
        Series {
            name: "analytic".into(),
            x: grid.clone(),
            y: grid.iter().map(|&x| appendix_h_cdf(x)).collect(),
            err: None,
        },
        Series {
            name: "empirical".into(),
            x: grid.clone(),
            y: grid.iter().map(|&x| diag.cdf.eval(x)).collect(),
            err: None,
        },
    ];
    for &t in &horizons {
        let xs: Vec<f64> = grid
            .iter()
            .copied()
            .filter(|&x| (t as f64).ln() / (t as f64 * x * x) <= 1.0)
            .collect();
        series.push(Series {
            name: format!("log T/(T x^2), T={t}"),
            y: xs
                .iter()
                .map(|&x| (t as f64).ln() / (t as f64 * x * x))
                .collect(),
            x: xs,
            err: None,
        });
    }
    write_text(
        &dir.join("plot.svg"),
        &render(&series, "CDF of the minimum difference", "x", "probability"),
    )?;
    Ok(dir)
}

/// Runs one figure and writes its files under `opts.out`.
pub fn reproduce(fig: Figure, opts: &FigureOptions) -> Result<PathBuf> {
    let dir = opts.out.join(fig.name());
    match fig {
        Figure::Fig1 | Figure::Fig2 | Figure::Fig4 => {
            let cfg = match fig {
                Figure::Fig1 => fig1_config(opts),
                Figure::Fig2 => fig2_config(opts),
                _ => fig4_config(opts),
            };
            let exp = run_config(cfg)?;
            write_bundle(&dir, &exp)?;
            if fig == Figure::Fig2 {
                write_bundle(&dir.join("large"), &run_config(large_market_config(opts))?)?;
            }
            if fig == Figure::Fig4 {
                let finals: Vec<f64> = exp
                    .labels()
                    .iter()
                    .filter_map(|l| exp.mean_final_max_regret(l))
                    .collect();
                let max = finals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let min = finals.iter().copied().fold(f64::INFINITY, f64::min);
                let spread = serde_json::json!({
                    "final_max_regret": exp.labels().iter().zip(&finals).map(|(l, v)| (l.clone(), *v)).collect::<Vec<_>>(),
                    "spread": max - min,
                    "relative_spread": (max - min) / max,
                });
                write_text(
                    &dir.join("spread.json"),
                    &serde_json::to_string_pretty(&spread)?,
                )?;
            }
        }
        Figure::Fig3 => {
            let mut groups = Vec::new();
            for (n, cfg) in fig3_configs(opts) {
                let exp = run_config(cfg)?;
                write_bundle(&dir.join(format!("n{n}")), &exp)?;
                groups.push((
                    n.to_string(),
                    summarize(&exp.prepared.checkpoints, &max_regret_series(&exp, "barb")),
                ));
            }
            write_grouped(&dir.join("fig3.csv"), "market_size", &groups)?;
            write_text(
                &dir.join("plot.svg"),
                &grouped_svg(&groups, "BARB by market size", "max regret over players"),
            )?;
        }
        Figure::Fig5 => {
            let exp = run_config(fig5_config(opts))?;
            write_bundle(&dir, &exp)?;
            let gap = max_reward_gap(&exp, "known-utility", "adeco")?;
            let groups = vec![(
                "alternating".to_string(),
                summarize(&exp.prepared.checkpoints, &gap),
            )];
            write_grouped(&dir.join("reward_gap.csv"), "mode", &groups)?;
        }
        Figure::Fig6 => {
            let mut groups = Vec::new();
            for (p, cfg) in fig6_configs(opts) {
                let exp = run_config(cfg)?;
                write_bundle(&dir.join(format!("p{p}")), &exp)?;
                let gap = max_reward_gap(&exp, "known-utility", "adeco")?;
                groups.push((p.to_string(), summarize(&exp.prepared.checkpoints, &gap)));
            }
            write_grouped(&dir.join("fig6.csv"), "p", &groups)?;
            write_text(
                &dir.join("plot.svg"),
                &grouped_svg(
                    &groups,
                    "reward gap to the known-utility learner",
                    "max reward difference",
                ),
            )?;
        }
        Figure::FigH => return fig_h(opts, 1_000_000),
    }
    Ok(dir)
}
