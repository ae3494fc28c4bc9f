//! Online matching policies behind one interface.
//!
//! Each round the harness calls [`Policy::act`] with the round's contexts,
//! plays the returned matching, and feeds the observed rewards back through
//! [`Policy::observe`]. Policies never see true utilities.

mod adeco;
mod barb;
mod batched_etc;
mod etc;

pub use adeco::{AdecoParams, AdecoPolicy};
pub use barb::{BarbParams, BarbPolicy};
pub use batched_etc::{BatchedEtcParams, BatchedEtcPolicy};
pub use etc::{EtcParams, EtcPolicy};

use serde::{Deserialize, Serialize};

use crate::estimation::{confidence_radius, inv_norms, GramState, RadiusParams};
use crate::market::{
    max_cardinality_matching, ArmId, Bounds, ContextSet, MarketInstance, Matching, PlayerId,
    UtilityMatrix,
};
use crate::{Error, Result};

/// Branch taken in a round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Explore,
    ExploitGs,
    ExploitOracle,
    Commit,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Explore => "explore",
            Phase::ExploitGs => "exploit-gs",
            Phase::ExploitOracle => "exploit-oracle",
            Phase::Commit => "commit",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepDiagnostics {
    /// Largest `||x_j||_{V_i^-1}` over arms, per player, when computed.
    pub max_inv_norm: Vec<f64>,
    /// Current candidate gap or confidence width.
    pub gap: Option<f64>,
    pub overlap_counter: Option<u64>,
    pub batch: Option<u32>,
    pub support_size: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyStep {
    /// 0-based round index.
    pub round: u64,
    pub matching: Matching,
    pub phase: Phase,
    pub diagnostics: StepDiagnostics,
}

/// Per-batch counters of the batched policies.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatchRecord {
    pub batch: u32,
    pub gap: f64,
    pub start_round: u64,
    pub explore_rounds: u64,
    pub exploit_rounds: u64,
    pub overlaps: u64,
}

impl BatchRecord {
    fn new(batch: u32, gap: f64, start_round: u64) -> Self {
        Self {
            batch,
            gap,
            start_round,
            explore_rounds: 0,
            exploit_rounds: 0,
            overlaps: 0,
        }
    }
}

pub trait Policy: Send {
    fn name(&self) -> &'static str;

    fn act(&mut self, ctx: &ContextSet) -> Result<PolicyStep>;

    /// `rewards[i]` is the noisy reward of player `i`, `None` if unmatched.
    fn observe(
        &mut self,
        ctx: &ContextSet,
        step: &PolicyStep,
        rewards: &[Option<f64>],
    ) -> Result<()>;

    /// Confidence radius in use, if any.
    fn radius(&self) -> Option<f64> {
        None
    }

    fn batches(&self) -> &[BatchRecord] {
        &[]
    }

    /// Round counts per phase, in the order explore, exploit-gs,
    /// exploit-oracle, commit.
    fn phase_counts(&self) -> [u64; 4];
}

/// Settings shared by every learner.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearnerConfig {
    pub n_players: usize,
    pub n_arms: usize,
    pub dim: usize,
    pub horizon: u64,
    pub ridge: f64,
    pub bounds: Bounds,
    /// Overrides the policy's default confidence level.
    pub delta: Option<f64>,
    /// Overrides the computed confidence radius.
    pub eta: Option<f64>,
}

impl LearnerConfig {
    pub fn for_market(market: &MarketInstance, horizon: u64, ridge: f64) -> Self {
        Self {
            n_players: market.n_players,
            n_arms: market.n_arms,
            dim: market.dim,
            horizon,
            ridge,
            bounds: market.bounds,
            delta: None,
            eta: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::param("horizon", "must be at least 1"));
        }
        if self.n_players == 0 || self.n_players > self.n_arms {
            return Err(Error::param("n_players", "needs 1 <= N <= K"));
        }
        if self.ridge.is_nan() || self.ridge <= 0.0 {
            return Err(Error::param("ridge", "must be positive"));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::param("eta", "must be positive"));
            }
        }
        Ok(())
    }

    /// `eta`, using `default_delta` unless overridden. Defaults such as
    /// `1/T` reach 1 at `T = 1`; they are capped at 1/2.
    pub fn radius(&self, default_delta: f64) -> Result<f64> {
        if let Some(eta) = self.eta {
            return Ok(eta);
        }
        confidence_radius(&RadiusParams {
            horizon: self.horizon,
            dim: self.dim,
            b_x: self.bounds.b_x,
            b_theta: self.bounds.b_theta,
            noise_r: self.bounds.noise_r,
            ridge: self.ridge,
            delta: self.delta.unwrap_or(default_delta.min(0.5)),
        })
    }

    /// `ln T`, taken as `ln 2` when `T = 1` so thresholds stay finite.
    pub fn ln_horizon(&self) -> f64 {
        (self.horizon.max(2) as f64).ln()
    }

    fn fresh_grams(&self) -> Result<Vec<GramState>> {
        (0..self.n_players)
            .map(|_| GramState::new(self.dim, self.ridge))
            .collect()
    }
}

/// Which adjacent gaps of a sorted estimate row enter the overlap test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapScope {
    /// Gaps between ranks `j` and `j + 1` for `j <= N`.
    #[default]
    TopN,
    /// All `K - 1` adjacent gaps.
    AllArms,
}

/// Smallest gap between consecutive entries of `row` sorted in decreasing
/// order, restricted by `scope`; infinite for a single arm.
pub fn min_adjacent_gap(row: &[f64], n_players: usize, scope: OverlapScope) -> f64 {
    let mut sorted = row.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let pairs = match scope {
        OverlapScope::TopN => n_players.min(sorted.len().saturating_sub(1)),
        OverlapScope::AllArms => sorted.len().saturating_sub(1),
    };
    (0..pairs)
        .map(|j| sorted[j] - sorted[j + 1])
        .fold(f64::INFINITY, f64::min)
}

/// Smallest row gap across players.
fn min_row_gap(u: &UtilityMatrix, scope: OverlapScope) -> f64 {
    (0..u.n_players())
        .map(|i| min_adjacent_gap(u.row(i), u.n_players(), scope))
        .fold(f64::INFINITY, f64::min)
}

/// Exploration step shared by the adaptive policies: every pair whose
/// context norm exceeds `threshold` becomes an edge, and a maximum matching
/// of those edges is played. `None` when no pair exceeds the threshold.
fn uncertain_pairs_matching(
    grams: &[GramState],
    ctx: &ContextSet,
    threshold: f64,
) -> Result<(Option<Matching>, Vec<f64>)> {
    let norms = inv_norms(grams, ctx);
    let mut edges: Vec<(PlayerId, ArmId)> = Vec::new();
    let mut max_norm = vec![0.0f64; grams.len()];
    for (i, m) in max_norm.iter_mut().enumerate() {
        for j in 0..ctx.n_arms() {
            let v = norms.get(i, j);
            *m = m.max(v);
            if v > threshold {
                edges.push((i, j));
            }
        }
    }
    if edges.is_empty() {
        return Ok((None, max_norm));
    }
    let m = max_cardinality_matching(grams.len(), ctx.n_arms(), &edges)?;
    Ok((Some(m), max_norm))
}

fn update_matched(
    grams: &mut [GramState],
    ctx: &ContextSet,
    matching: &Matching,
    rewards: &[Option<f64>],
) -> Result<()> {
    for (i, g) in grams.iter_mut().enumerate() {
        if let (Some(a), Some(y)) = (matching.arm_of(i), rewards[i]) {
            g.update(ctx.get(a), y)?;
        }
    }
    Ok(())
}

/// Upper bound on the exploration rounds of one BARB batch with candidate
/// gap `gap`: `eta^2 N d ln((T + d lambda) / (d lambda)) / gap^2`.
pub fn exploration_budget(eta: f64, config: &LearnerConfig, gap: f64) -> f64 {
    let dl = config.dim as f64 * config.ridge;
    eta * eta
        * config.n_players as f64
        * config.dim as f64
        * ((config.horizon as f64 + dl) / dl).ln()
        / (gap * gap)
}

/// Overlap count beyond which a batch with candidate gap `gap` ends.
pub fn overlap_threshold(ln_horizon: f64, gap: f64) -> f64 {
    3.0 * ln_horizon / (16.0 * gap * gap)
}

/// Exploration matching of the explore-then-commit policies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplorationSchedule {
    /// Player `i` always pulls arm `i`.
    #[default]
    FixedArm,
    /// Player `i` pulls arm `(i + t) mod K` in exploration round `t`.
    RoundRobin,
}

impl ExplorationSchedule {
    fn matching(self, n_players: usize, n_arms: usize, t: u64) -> Matching {
        let shift = match self {
            ExplorationSchedule::FixedArm => 0,
            ExplorationSchedule::RoundRobin => (t % n_arms as u64) as usize,
        };
        let assignment = (0..n_players).map(|i| Some((i + shift) % n_arms)).collect();
        Matching::new(n_arms, assignment).expect("shifted identity is injective when N <= K")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjacent_gap_scopes() {
        let row = [0.9, 0.1, 0.5, 0.45];
        assert!((min_adjacent_gap(&row, 1, OverlapScope::TopN) - 0.4).abs() < 1e-12);
        assert!((min_adjacent_gap(&row, 2, OverlapScope::TopN) - 0.05).abs() < 1e-12);
        assert!((min_adjacent_gap(&row, 1, OverlapScope::AllArms) - 0.05).abs() < 1e-12);
        assert_eq!(
            min_adjacent_gap(&[0.3], 1, OverlapScope::AllArms),
            f64::INFINITY
        );
    }

    #[test]
    fn schedules() {
        let m = ExplorationSchedule::RoundRobin.matching(2, 3, 2);
        assert_eq!(m.assignment(), &[Some(2), Some(0)]);
        let f = ExplorationSchedule::FixedArm.matching(2, 3, 7);
        assert_eq!(f.assignment(), &[Some(0), Some(1)]);
    }

    #[test]
    fn batch_domination() {
        for n in 1..=40u32 {
            let gap = |k: u32| 0.5 * 2f64.powf(-((k - 1) as f64) / 2.0);
            let lhs: f64 = (1..n).map(|k| 1.0 / gap(k).powi(2)).sum();
            assert!(lhs <= 1.0 / gap(n).powi(2));
        }
    }
}
