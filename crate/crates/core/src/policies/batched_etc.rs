use crate::estimation::{estimated_utilities, GramState};
use crate::market::{deferred_acceptance, ArmPreferences, ContextSet};
use crate::{Error, Result};

use super::{
    min_row_gap, overlap_threshold, update_matched, BatchRecord, ExplorationSchedule,
    LearnerConfig, OverlapScope, Phase, Policy, PolicyStep, StepDiagnostics,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchedEtcParams {
    /// Exploration length `T_1` of the first batch.
    pub initial_explore: u64,
    pub schedule: ExplorationSchedule,
    pub scope: OverlapScope,
}

impl Default for BatchedEtcParams {
    fn default() -> Self {
        Self {
            initial_explore: 100,
            schedule: ExplorationSchedule::default(),
            scope: OverlapScope::TopN,
        }
    }
}

/// Explore-then-commit in batches of doubling exploration length, with the
/// same overlap-driven batch advance as BARB and width `sqrt(ln T / T_k)`.
#[derive(Clone, Debug)]
pub struct BatchedEtcPolicy {
    config: LearnerConfig,
    params: BatchedEtcParams,
    prefs: ArmPreferences,
    explore_len: u64,
    explored: u64,
    counter: u64,
    grams: Vec<GramState>,
    round: u64,
    pending_overlap: bool,
    batches: Vec<BatchRecord>,
    counts: [u64; 4],
}

impl BatchedEtcPolicy {
    pub fn new(
        config: LearnerConfig,
        params: BatchedEtcParams,
        prefs: ArmPreferences,
    ) -> Result<Self> {
        config.validate()?;
        if params.initial_explore == 0 {
            return Err(Error::param("initial_explore", "must be at least 1"));
        }
        let mut p = Self {
            grams: config.fresh_grams()?,
            config,
            params,
            prefs,
            explore_len: params.initial_explore,
            explored: 0,
            counter: 0,
            round: 0,
            pending_overlap: false,
            batches: Vec::new(),
            counts: [0; 4],
        };
        p.batches.push(BatchRecord::new(1, p.width(), 0));
        Ok(p)
    }

    pub fn explore_len(&self) -> u64 {
        self.explore_len
    }

    /// Confidence width `sqrt(ln T / T_k)`.
    pub fn width(&self) -> f64 {
        (self.config.ln_horizon() / self.explore_len as f64).sqrt()
    }

    pub fn batch(&self) -> u32 {
        self.batches.len() as u32
    }

    fn advance_batch(&mut self) -> Result<()> {
        self.explore_len = self.explore_len.saturating_mul(2);
        self.explored = 0;
        self.counter = 0;
        self.grams = self.config.fresh_grams()?;
        let k = self.batches.len() as u32 + 1;
        self.batches
            .push(BatchRecord::new(k, self.width(), self.round));
        Ok(())
    }
}

impl Policy for BatchedEtcPolicy {
    fn name(&self) -> &'static str {
        "batched-etc"
    }

    fn act(&mut self, ctx: &ContextSet) -> Result<PolicyStep> {
        let width = self.width();
        let (matching, phase) = if self.explored < self.explore_len {
            self.pending_overlap = false;
            let m = self.params.schedule.matching(
                self.config.n_players,
                self.config.n_arms,
                self.explored,
            );
            (m, Phase::Explore)
        } else {
            let u_hat = estimated_utilities(&self.grams, ctx)?;
            self.pending_overlap = min_row_gap(&u_hat, self.params.scope) <= 2.0 * width;
            (deferred_acceptance(&u_hat, &self.prefs)?, Phase::ExploitGs)
        };
        Ok(PolicyStep {
            round: self.round,
            matching,
            phase,
            diagnostics: StepDiagnostics {
                max_inv_norm: Vec::new(),
                gap: Some(width),
                overlap_counter: Some(self.counter),
                batch: Some(self.batch()),
                support_size: None,
            },
        })
    }

    fn observe(
        &mut self,
        ctx: &ContextSet,
        step: &PolicyStep,
        rewards: &[Option<f64>],
    ) -> Result<()> {
        let record = self.batches.last_mut().expect("at least one batch");
        if step.phase == Phase::Explore {
            update_matched(&mut self.grams, ctx, &step.matching, rewards)?;
            record.explore_rounds += 1;
            self.explored += 1;
        } else {
            record.exploit_rounds += 1;
            if self.pending_overlap {
                record.overlaps += 1;
                self.counter += 1;
            }
        }
        self.pending_overlap = false;
        self.counts[step.phase as usize] += 1;
        self.round += 1;
        if self.counter as f64 > overlap_threshold(self.config.ln_horizon(), self.width()) {
            self.advance_batch()?;
        }
        Ok(())
    }

    fn batches(&self) -> &[BatchRecord] {
        &self.batches
    }

    fn phase_counts(&self) -> [u64; 4] {
        self.counts
    }
}
