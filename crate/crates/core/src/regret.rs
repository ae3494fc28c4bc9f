//! Benchmarks and regret accounting.
//!
//! Two benchmarks are supported: the optimal stable share of every round,
//! and the gap-switched benchmark that uses the optimal stable share when the
//! round's minimum difference exceeds `gap` and `alpha` times the
//! `eps`-optimal stable share otherwise. Rounds whose benchmark cannot be
//! computed fall back to reward comparison and are flagged.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environments::delta_min;
use crate::market::{
    deferred_acceptance, optimal_stable_share, ArmPreferences, Matching, UtilityMatrix,
};
use crate::oracle::{approx_oracle, OracleConfig};
use crate::policies::Phase;
use crate::{Error, Result};

/// `U*_i - U[i][chosen(i)]`.
pub fn stable_regret_increment(
    u: &UtilityMatrix,
    prefs: &ArmPreferences,
    chosen: &Matching,
) -> Result<Vec<f64>> {
    let share = optimal_stable_share(u, prefs, 0.0)?;
    Ok(share
        .iter()
        .enumerate()
        .map(|(i, s)| s - u.value_of(i, chosen))
        .collect())
}

/// Per-player increment of the gap-switched regret together with the
/// benchmark used and whether the round was in the small-gap regime.
#[derive(Clone, Debug, PartialEq)]
pub struct ApproxIncrement {
    pub benchmark: Vec<f64>,
    pub increments: Vec<f64>,
    pub small_gap: bool,
}

pub fn approx_regret_increment(
    u: &UtilityMatrix,
    prefs: &ArmPreferences,
    chosen: &Matching,
    gap: f64,
    eps: f64,
    alpha: f64,
) -> Result<ApproxIncrement> {
    let small_gap = delta_min(u)? <= gap;
    let benchmark: Vec<f64> = if small_gap {
        optimal_stable_share(u, prefs, eps)
            .map_err(|e| match e {
                Error::EnumerationLimit { .. } => Error::InvalidParameter {
                    name: "benchmark",
                    reason: format!("{e}; use reward-comparison mode for this market"),
                },
                other => other,
            })?
            .into_iter()
            .map(|s| alpha * s)
            .collect()
    } else {
        optimal_stable_share(u, prefs, 0.0)?
    };
    let increments = benchmark
        .iter()
        .enumerate()
        .map(|(i, b)| b - u.value_of(i, chosen))
        .collect();
    Ok(ApproxIncrement {
        benchmark,
        increments,
        small_gap,
    })
}

/// Which benchmark a ledger charges against.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BenchmarkMode {
    /// Optimal stable share every round.
    Stable,
    /// Gap-switched benchmark with the given regime threshold, stability
    /// tolerance and approximation ratio.
    Approximate {
        gap: f64,
        tolerance: f64,
        alpha: f64,
    },
}

/// Regime marker written to ledgers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[repr(u8)]
pub enum Regime {
    LargeGap = 0,
    SmallGap = 1,
    /// Small-gap round whose benchmark is intractable; only rewards count.
    RewardComparison = 2,
}

/// One ledger line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LedgerRow {
    pub round: u64,
    pub player: usize,
    pub benchmark: f64,
    pub expected_reward: f64,
    pub regret: f64,
    pub regime_flag: u8,
    pub phase_tag: &'static str,
}

/// Running totals per player plus optional per-round rows.
#[derive(Clone, Debug, PartialEq)]
pub struct RegretLedger {
    mode: BenchmarkMode,
    n_players: usize,
    rounds: u64,
    benchmark: Vec<f64>,
    expected: Vec<f64>,
    sampled: Vec<f64>,
    comparison_rounds: u64,
    small_gap_rounds: u64,
    rows: Option<Vec<LedgerRow>>,
}

impl RegretLedger {
    pub fn new(n_players: usize, mode: BenchmarkMode, keep_rows: bool) -> Self {
        Self {
            mode,
            n_players,
            rounds: 0,
            benchmark: vec![0.0; n_players],
            expected: vec![0.0; n_players],
            sampled: vec![0.0; n_players],
            comparison_rounds: 0,
            small_gap_rounds: 0,
            rows: keep_rows.then(Vec::new),
        }
    }

    /// Charges one round. `sampled` holds the noisy rewards actually
    /// observed (unmatched players receive 0).
    pub fn record(
        &mut self,
        u: &UtilityMatrix,
        prefs: &ArmPreferences,
        chosen: &Matching,
        sampled: &[f64],
        phase: Phase,
    ) -> Result<()> {
        if u.n_players() != self.n_players || sampled.len() != self.n_players {
            return Err(Error::DimensionMismatch {
                what: "ledger round",
                expected: self.n_players,
                found: u.n_players(),
            });
        }
        let (bench, regime) = match self.mode {
            BenchmarkMode::Stable => (optimal_stable_share(u, prefs, 0.0)?, Regime::LargeGap),
            BenchmarkMode::Approximate {
                gap,
                tolerance,
                alpha,
            } => match approx_regret_increment(u, prefs, chosen, gap, tolerance, alpha) {
                Ok(inc) if inc.small_gap => (inc.benchmark, Regime::SmallGap),
                Ok(inc) => (inc.benchmark, Regime::LargeGap),
                Err(Error::InvalidParameter {
                    name: "benchmark", ..
                }) => {
                    let expected: Vec<f64> =
                        (0..self.n_players).map(|i| u.value_of(i, chosen)).collect();
                    (expected, Regime::RewardComparison)
                }
                Err(e) => return Err(e),
            },
        };
        match regime {
            Regime::SmallGap => self.small_gap_rounds += 1,
            Regime::RewardComparison => {
                self.small_gap_rounds += 1;
                self.comparison_rounds += 1;
            }
            Regime::LargeGap => {}
        }
        for i in 0..self.n_players {
            let r = u.value_of(i, chosen);
            self.benchmark[i] += bench[i];
            self.expected[i] += r;
            self.sampled[i] += sampled[i];
            if let Some(rows) = self.rows.as_mut() {
                rows.push(LedgerRow {
                    round: self.rounds + 1,
                    player: i + 1,
                    benchmark: bench[i],
                    expected_reward: r,
                    regret: bench[i] - r,
                    regime_flag: regime as u8,
                    phase_tag: phase.as_str(),
                });
            }
        }
        self.rounds += 1;
        Ok(())
    }

    pub fn mode(&self) -> BenchmarkMode {
        self.mode
    }

    pub fn n_players(&self) -> usize {
        self.n_players
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    /// Cumulative regret of each player so far.
    pub fn regret(&self) -> Vec<f64> {
        self.benchmark
            .iter()
            .zip(&self.expected)
            .map(|(b, e)| b - e)
            .collect()
    }

    pub fn cumulative_benchmark(&self) -> &[f64] {
        &self.benchmark
    }

    pub fn cumulative_expected(&self) -> &[f64] {
        &self.expected
    }

    pub fn cumulative_sampled(&self) -> &[f64] {
        &self.sampled
    }

    pub fn comparison_rounds(&self) -> u64 {
        self.comparison_rounds
    }

    pub fn small_gap_rounds(&self) -> u64 {
        self.small_gap_rounds
    }

    pub fn rows(&self) -> Option<&[LedgerRow]> {
        self.rows.as_deref()
    }

    pub fn into_rows(self) -> Option<Vec<LedgerRow>> {
        self.rows
    }
}

/// Cumulative expected reward per round and player of one run, tagged with
/// the seed of the environment stream that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardSeries {
    pub stream_seed: u64,
    pub n_players: usize,
    /// Row-major `rounds x n_players`.
    pub cumulative: Vec<f64>,
}

impl RewardSeries {
    pub fn rounds(&self) -> usize {
        self.cumulative
            .len()
            .checked_div(self.n_players)
            .unwrap_or(0)
    }

    pub fn at(&self, round: usize, player: usize) -> f64 {
        self.cumulative[round * self.n_players + player]
    }
}

/// Pointwise `a - b` of two cumulative reward series driven by the same
/// environment stream.
pub fn oracle_reward_comparison(a: &RewardSeries, b: &RewardSeries) -> Result<RewardSeries> {
    if a.stream_seed != b.stream_seed {
        return Err(Error::param(
            "reward comparison",
            format!(
                "stream seeds differ ({} vs {})",
                a.stream_seed, b.stream_seed
            ),
        ));
    }
    if a.n_players != b.n_players || a.cumulative.len() != b.cumulative.len() {
        return Err(Error::param("reward comparison", "series shapes differ"));
    }
    Ok(RewardSeries {
        stream_seed: a.stream_seed,
        n_players: a.n_players,
        cumulative: a
            .cumulative
            .iter()
            .zip(&b.cumulative)
            .map(|(x, y)| x - y)
            .collect(),
    })
}

/// Choice of a learner that sees the true utilities: deferred acceptance when
/// the round's minimum difference exceeds `gap`, otherwise one draw from the
/// approximation oracle at tolerance `eps`.
pub fn known_utility_choice<R: Rng + ?Sized>(
    u: &UtilityMatrix,
    prefs: &ArmPreferences,
    gap: f64,
    eps: f64,
    rng: &mut R,
) -> Result<(Matching, Phase)> {
    if delta_min(u)? > gap {
        Ok((deferred_acceptance(u, prefs)?, Phase::ExploitGs))
    } else {
        let d = approx_oracle(u, prefs, OracleConfig::for_players(u.n_players(), eps))?;
        Ok((d.sample(rng).clone(), Phase::ExploitOracle))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_player_increment() {
        let u = UtilityMatrix::from_rows(&[vec![0.3, 0.7]]).unwrap();
        let chosen = Matching::new(2, vec![Some(0)]).unwrap();
        let inc = stable_regret_increment(&u, &ArmPreferences::identity(1, 2), &chosen).unwrap();
        assert!((inc[0] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn unstable_choice_can_have_negative_increment() {
        // Both players like arm 0 best; arm 0 prefers player 1, so player 0's
        // stable share is arm 1. Giving player 0 arm 0 beats its share.
        let u = UtilityMatrix::from_rows(&[vec![0.9, 0.2], vec![0.8, 0.1]]).unwrap();
        let prefs = ArmPreferences::new(2, vec![vec![1, 0], vec![0, 1]]).unwrap();
        let chosen = Matching::new(2, vec![Some(0), Some(1)]).unwrap();
        let inc = stable_regret_increment(&u, &prefs, &chosen).unwrap();
        assert!(inc[0] < 0.0);
        assert!(inc[1] > 0.0);
    }

    #[test]
    fn approximate_increment_switches_on_gap() {
        let u = UtilityMatrix::from_rows(&[vec![0.3, 0.7]]).unwrap();
        let prefs = ArmPreferences::identity(1, 2);
        let best = Matching::new(2, vec![Some(1)]).unwrap();
        let large = approx_regret_increment(&u, &prefs, &best, 0.1, 0.0, 0.5).unwrap();
        assert!(!large.small_gap);
        assert_eq!(large.increments, vec![0.0]);
        let small = approx_regret_increment(&u, &prefs, &best, 0.5, 0.0, 1.0).unwrap();
        assert!(small.small_gap);
        assert_eq!(small.increments, vec![0.0]);
        let halved = approx_regret_increment(&u, &prefs, &best, 0.5, 0.0, 0.5).unwrap();
        assert!((halved.increments[0] + 0.35).abs() < 1e-12);
    }

    #[test]
    fn ledger_falls_back_to_reward_comparison() {
        let n = 9;
        let u = UtilityMatrix::zeros(n, n);
        let prefs = ArmPreferences::identity(n, n);
        let mode = BenchmarkMode::Approximate {
            gap: 0.1,
            tolerance: 0.0,
            alpha: 0.2,
        };
        let mut ledger = RegretLedger::new(n, mode, true);
        let chosen = Matching::empty(n, n);
        ledger
            .record(&u, &prefs, &chosen, &vec![0.0; n], Phase::Explore)
            .unwrap();
        assert_eq!(ledger.comparison_rounds(), 1);
        assert_eq!(ledger.rows().unwrap()[0].regime_flag, 2);
        assert!(ledger.regret().iter().all(|&r| r == 0.0));
    }

    #[test]
    fn comparison_requires_same_stream() {
        let a = RewardSeries {
            stream_seed: 1,
            n_players: 1,
            cumulative: vec![1.0, 2.0],
        };
        let zero = oracle_reward_comparison(&a, &a).unwrap();
        assert!(zero.cumulative.iter().all(|&v| v == 0.0));
        let b = RewardSeries {
            stream_seed: 2,
            ..a.clone()
        };
        assert!(oracle_reward_comparison(&a, &b).is_err());
    }
}
