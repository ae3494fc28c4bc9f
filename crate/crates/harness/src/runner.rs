//! Seeded simulation of every configured policy over shared context and
//! noise streams.

use std::path::Path;

use matchbandits_core::environments::{sample_noise, stream_rng, Environment, Stream};
use matchbandits_core::market::{MarketInstance, Matching};
use matchbandits_core::policies::{
    exploration_budget, AdecoParams, AdecoPolicy, BarbParams, BarbPolicy, BatchRecord,
    BatchedEtcParams, BatchedEtcPolicy, EtcParams, EtcPolicy, LearnerConfig, Phase, Policy,
};
use matchbandits_core::regret::{known_utility_choice, BenchmarkMode, LedgerRow, RegretLedger};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{
    default_gap, Algorithm, ExperimentConfig, MarketSpec, PolicyEntry, DEFAULT_BOUNDS,
};
use crate::error::{HarnessError, Result};

/// A validated config with its market and environment materialized.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub market: MarketInstance,
    pub environment: Environment,
    pub benchmark: BenchmarkMode,
    /// 1-based rounds at which curves are sampled; always ends at `T`.
    pub checkpoints: Vec<u64>,
}

pub fn prepare(config: ExperimentConfig, base_dir: &Path) -> Result<Prepared> {
    config.validate()?;
    let market = match &config.market {
        MarketSpec::Generate {
            n_players,
            n_arms,
            dim,
            bounds,
            seed,
        } => MarketInstance::random_uniform_theta(
            *n_players,
            *n_arms,
            *dim,
            bounds.unwrap_or(DEFAULT_BOUNDS),
            &mut stream_rng(seed.unwrap_or(config.seed), Stream::Market),
        )
        .map_err(|e| HarnessError::config("market", e.to_string()))?,
        MarketSpec::Instance(file) => MarketInstance::try_from(file.clone())
            .map_err(|e| HarnessError::config("market", e.to_string()))?,
        MarketSpec::File { path } => {
            let full = base_dir.join(path);
            let text = std::fs::read_to_string(&full).map_err(|e| HarnessError::io(&full, e))?;
            MarketInstance::from_json(&text)
                .map_err(|e| HarnessError::config("market.path", e.to_string()))?
        }
    };
    let environment = config
        .environment
        .resolve(market.dim, market.n_arms, "environment")?;
    let benchmark = config.benchmark.resolve(config.horizon, market.n_players);
    let checkpoints = checkpoints(config.horizon, config.curve_points);
    Ok(Prepared {
        config,
        market,
        environment,
        benchmark,
        checkpoints,
    })
}

/// Evenly spaced rounds `ceil(i T / points)`, or every round.
pub fn checkpoints(horizon: u64, points: usize) -> Vec<u64> {
    if points == 0 || points as u64 >= horizon {
        return (1..=horizon).collect();
    }
    let p = points as u64;
    let mut out: Vec<u64> = (1..=p).map(|i| (i * horizon).div_ceil(p)).collect();
    out.dedup();
    out
}

/// Outcome of one policy in one replica.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyRun {
    pub label: String,
    /// Cumulative regret at each checkpoint, row-major `checkpoints x N`.
    pub regret: Vec<f64>,
    /// Cumulative expected reward at each checkpoint, same layout.
    pub reward: Vec<f64>,
    pub final_regret: Vec<f64>,
    pub phase_counts: [u64; 4],
    pub batches: Vec<BatchRecord>,
    pub radius: Option<f64>,
    /// Batches whose exploration exceeded the BARB budget.
    pub budget_violations: Vec<u32>,
    pub comparison_rounds: u64,
    pub small_gap_rounds: u64,
    /// Set when a numerical failure stopped the run early.
    pub failure: Option<String>,
    pub rows: Option<Vec<LedgerRow>>,
}

impl PolicyRun {
    pub fn ok(&self) -> bool {
        self.failure.is_none()
    }

    pub fn final_max_regret(&self) -> f64 {
        self.final_regret
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicaResult {
    pub replica: usize,
    pub seed: u64,
    pub runs: Vec<PolicyRun>,
}

#[derive(Clone, Debug)]
pub struct Experiment {
    pub prepared: Prepared,
    pub replicas: Vec<ReplicaResult>,
}

impl Experiment {
    pub fn labels(&self) -> Vec<String> {
        self.prepared
            .config
            .policies
            .iter()
            .map(PolicyEntry::label)
            .collect()
    }

    /// Runs of policy `index` that finished, in replica order.
    pub fn runs(&self, index: usize) -> impl Iterator<Item = &PolicyRun> {
        self.replicas
            .iter()
            .map(move |r| &r.runs[index])
            .filter(|r| r.ok())
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels().iter().position(|l| l == label)
    }

    /// Mean over replicas of the final max-over-players regret.
    pub fn mean_final_max_regret(&self, label: &str) -> Option<f64> {
        let i = self.index_of(label)?;
        let v: Vec<f64> = self.runs(i).map(PolicyRun::final_max_regret).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

enum Learner {
    Policy(Box<dyn Policy>),
    Known {
        gap: f64,
        tolerance: f64,
        rng: Box<ChaCha8Rng>,
    },
}

fn build(entry: &PolicyEntry, prep: &Prepared, seed: u64) -> Result<Learner> {
    let cfg = &prep.config;
    let mut lc = LearnerConfig::for_market(&prep.market, cfg.horizon, cfg.ridge);
    lc.eta = entry.eta;
    lc.delta = entry.delta;
    let prefs = prep.market.arm_prefs.clone();
    let policy: Box<dyn Policy> = match entry.algorithm {
        Algorithm::Etc {
            explore_rounds,
            schedule,
        } => Box::new(EtcPolicy::new(
            lc,
            EtcParams {
                explore_rounds,
                schedule,
            },
            prefs,
        )?),
        Algorithm::BatchedEtc {
            initial_explore,
            schedule,
            scope,
        } => Box::new(BatchedEtcPolicy::new(
            lc,
            BatchedEtcParams {
                initial_explore,
                schedule,
                scope,
            },
            prefs,
        )?),
        Algorithm::Barb { initial_gap, scope } => Box::new(BarbPolicy::new(
            lc,
            BarbParams { initial_gap, scope },
            prefs,
        )?),
        Algorithm::Adeco {
            gap,
            tolerance,
            scope,
        } => Box::new(AdecoPolicy::new(
            lc,
            AdecoParams {
                gap,
                tolerance,
                scope,
            },
            prefs,
            stream_rng(seed, Stream::Oracle),
        )?),
        Algorithm::KnownUtility { gap, tolerance } => {
            let gap = gap.unwrap_or_else(|| default_gap(cfg.horizon));
            return Ok(Learner::Known {
                gap,
                tolerance: tolerance.unwrap_or(gap / 2.0),
                rng: Box::new(stream_rng(seed, Stream::Policy)),
            });
        }
    };
    Ok(Learner::Policy(policy))
}

struct Slot {
    label: String,
    learner: Option<Learner>,
    ledger: RegretLedger,
    run: PolicyRun,
}

/// Simulates every policy for one replica seed.
pub fn run_replica(prep: &Prepared, replica: usize) -> Result<ReplicaResult> {
    let cfg = &prep.config;
    let seed = cfg.seed.wrapping_add(replica as u64);
    let market = &prep.market;
    let n = market.n_players;
    let keep_rows = replica == 0 && cfg.write_ledger;
    let mut slots = cfg
        .policies
        .iter()
        .map(|entry| {
            let label = entry.label();
            let (learner, failure) = match build(entry, prep, seed) {
                Ok(l) => (Some(l), None),
                Err(e) => (None, Some(e.to_string())),
            };
            Ok(Slot {
                run: PolicyRun {
                    label: label.clone(),
                    regret: Vec::with_capacity(prep.checkpoints.len() * n),
                    reward: Vec::with_capacity(prep.checkpoints.len() * n),
                    final_regret: vec![0.0; n],
                    phase_counts: [0; 4],
                    batches: Vec::new(),
                    radius: None,
                    budget_violations: Vec::new(),
                    comparison_rounds: 0,
                    small_gap_rounds: 0,
                    failure,
                    rows: None,
                },
                label,
                learner,
                ledger: RegretLedger::new(n, prep.benchmark, keep_rows),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut ctx_rng = stream_rng(seed, Stream::Contexts);
    let mut noise_rng = stream_rng(seed, Stream::Noise);
    let mut next_checkpoint = 0usize;
    let mut rewards = vec![None; n];
    let mut sampled = vec![0.0; n];
    for t in 0..cfg.horizon {
        let rc = prep.environment.sample_contexts(t, &mut ctx_rng);
        let u = market.utilities(&rc.contexts)?;
        let noise = sample_noise(
            n,
            market.n_arms,
            cfg.noise,
            market.bounds.noise_r,
            &mut noise_rng,
        );
        let at_checkpoint = prep.checkpoints.get(next_checkpoint) == Some(&(t + 1));
        for slot in &mut slots {
            let Some(learner) = slot.learner.as_mut() else {
                continue;
            };
            let outcome = (|| -> matchbandits_core::Result<()> {
                let (matching, phase, step) = match learner {
                    Learner::Policy(p) => {
                        let step = p.act(&rc.contexts)?;
                        (step.matching.clone(), step.phase, Some(step))
                    }
                    Learner::Known {
                        gap,
                        tolerance,
                        rng,
                    } => {
                        let (m, ph) =
                            known_utility_choice(&u, &market.arm_prefs, *gap, *tolerance, rng)?;
                        (m, ph, None)
                    }
                };
                fill_rewards(&matching, &u, &noise, &mut rewards, &mut sampled);
                slot.ledger
                    .record(&u, &market.arm_prefs, &matching, &sampled, phase)?;
                match (learner, step) {
                    (Learner::Policy(p), Some(step)) => p.observe(&rc.contexts, &step, &rewards)?,
                    _ => slot.run.phase_counts[phase as usize] += 1,
                }
                Ok(())
            })();
            if let Err(e) = outcome {
                slot.run.failure = Some(format!("round {}: {e}", t + 1));
                slot.learner = None;
                continue;
            }
            if at_checkpoint {
                slot.run.regret.extend(slot.ledger.regret());
                slot.run
                    .reward
                    .extend_from_slice(slot.ledger.cumulative_expected());
            }
        }
        if at_checkpoint {
            next_checkpoint += 1;
        }
    }

    let runs = slots
        .into_iter()
        .map(|mut slot| {
            slot.run.final_regret = slot.ledger.regret();
            slot.run.comparison_rounds = slot.ledger.comparison_rounds();
            slot.run.small_gap_rounds = slot.ledger.small_gap_rounds();
            if let Some(Learner::Policy(p)) = &slot.learner {
                slot.run.phase_counts = p.phase_counts();
                slot.run.batches = p.batches().to_vec();
                slot.run.radius = p.radius();
                if p.name() == "barb" {
                    slot.run.budget_violations = budget_violations(prep, &slot.run);
                }
            }
            slot.run.rows = slot.ledger.into_rows();
            debug_assert_eq!(slot.label, slot.run.label);
            slot.run
        })
        .collect();
    Ok(ReplicaResult {
        replica,
        seed,
        runs,
    })
}

fn fill_rewards(
    matching: &Matching,
    u: &matchbandits_core::market::UtilityMatrix,
    noise: &matchbandits_core::market::UtilityMatrix,
    rewards: &mut [Option<f64>],
    sampled: &mut [f64],
) {
    for i in 0..rewards.len() {
        rewards[i] = matching.arm_of(i).map(|a| u.get(i, a) + noise.get(i, a));
        sampled[i] = rewards[i].unwrap_or(0.0);
    }
}

/// Batches of a BARB run whose exploration count exceeds the budget.
fn budget_violations(prep: &Prepared, run: &PolicyRun) -> Vec<u32> {
    let Some(eta) = run.radius else {
        return Vec::new();
    };
    let lc = LearnerConfig::for_market(&prep.market, prep.config.horizon, prep.config.ridge);
    run.batches
        .iter()
        .filter(|b| b.explore_rounds as f64 > exploration_budget(eta, &lc, b.gap))
        .map(|b| b.batch)
        .collect()
}

/// Thread count from `MATCHBANDITS_THREADS`, if set to a positive number.
pub fn thread_cap() -> Option<usize> {
    std::env::var("MATCHBANDITS_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Runs all replicas in parallel; results are ordered by replica index, so
/// the thread count never changes the outputs.
pub fn run_experiment(prep: Prepared) -> Result<Experiment> {
    let replicas = prep.config.replicas;
    let work = || {
        (0..replicas)
            .into_par_iter()
            .map(|r| run_replica(&prep, r))
            .collect::<Result<Vec<_>>>()
    };
    let results = match thread_cap() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| HarnessError::config("MATCHBANDITS_THREADS", e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    Ok(Experiment {
        prepared: prep,
        replicas: results,
    })
}

pub fn phase_names() -> [&'static str; 4] {
    [
        Phase::Explore.as_str(),
        Phase::ExploitGs.as_str(),
        Phase::ExploitOracle.as_str(),
        Phase::Commit.as_str(),
    ]
}
