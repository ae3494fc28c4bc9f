use crate::estimation::{estimated_utilities, GramState};
use crate::market::{deferred_acceptance, ArmPreferences, ContextSet};
use crate::{Error, Result};

use super::{
    min_row_gap, overlap_threshold, uncertain_pairs_matching, update_matched, BatchRecord,
    LearnerConfig, OverlapScope, Phase, Policy, PolicyStep, StepDiagnostics,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BarbParams {
    /// Candidate gap of the first batch.
    pub initial_gap: f64,
    pub scope: OverlapScope,
}

impl Default for BarbParams {
    fn default() -> Self {
        Self {
            initial_gap: 0.5,
            scope: OverlapScope::TopN,
        }
    }
}

/// Batched adaptive regret balancing.
///
/// Within a batch the policy explores through a maximum matching of the pairs
/// whose context is still uncertain, and otherwise plays deferred acceptance
/// on the estimates while counting rounds whose estimated preferences come
/// within `2 gap` of a tie. Too many such rounds halve `gap^2` and restart
/// the estimates.
#[derive(Clone, Debug)]
pub struct BarbPolicy {
    config: LearnerConfig,
    params: BarbParams,
    prefs: ArmPreferences,
    eta: f64,
    gap: f64,
    counter: u64,
    grams: Vec<GramState>,
    round: u64,
    pending_overlap: bool,
    batches: Vec<BatchRecord>,
    counts: [u64; 4],
}

impl BarbPolicy {
    pub fn new(config: LearnerConfig, params: BarbParams, prefs: ArmPreferences) -> Result<Self> {
        config.validate()?;
        if !(params.initial_gap > 0.0 && params.initial_gap.is_finite()) {
            return Err(Error::param("initial_gap", "must be positive"));
        }
        let t = config.horizon as f64;
        let eta = config.radius(1.0 / (t * t))?;
        Ok(Self {
            grams: config.fresh_grams()?,
            config,
            params,
            prefs,
            eta,
            gap: params.initial_gap,
            counter: 0,
            round: 0,
            pending_overlap: false,
            batches: vec![BatchRecord::new(1, params.initial_gap, 0)],
            counts: [0; 4],
        })
    }

    pub fn gap(&self) -> f64 {
        self.gap
    }

    /// Norm threshold `gap / eta` of the current batch.
    pub fn threshold(&self) -> f64 {
        self.gap / self.eta
    }

    pub fn batch(&self) -> u32 {
        self.batches.len() as u32
    }

    pub fn overlap_counter(&self) -> u64 {
        self.counter
    }

    pub fn grams(&self) -> &[GramState] {
        &self.grams
    }

    /// Replaces the estimates, e.g. to start from known parameters.
    pub fn set_grams(&mut self, grams: Vec<GramState>) -> Result<()> {
        if grams.len() != self.config.n_players {
            return Err(Error::DimensionMismatch {
                what: "gram states",
                expected: self.config.n_players,
                found: grams.len(),
            });
        }
        self.grams = grams;
        Ok(())
    }

    fn advance_batch(&mut self) -> Result<()> {
        self.gap /= std::f64::consts::SQRT_2;
        self.counter = 0;
        self.grams = self.config.fresh_grams()?;
        let k = self.batches.len() as u32 + 1;
        self.batches.push(BatchRecord::new(k, self.gap, self.round));
        Ok(())
    }
}

impl Policy for BarbPolicy {
    fn name(&self) -> &'static str {
        "barb"
    }

    fn act(&mut self, ctx: &ContextSet) -> Result<PolicyStep> {
        let (explore, max_inv_norm) = uncertain_pairs_matching(&self.grams, ctx, self.threshold())?;
        let (matching, phase) = match explore {
            Some(m) => {
                self.pending_overlap = false;
                (m, Phase::Explore)
            }
            None => {
                let u_hat = estimated_utilities(&self.grams, ctx)?;
                self.pending_overlap = min_row_gap(&u_hat, self.params.scope) <= 2.0 * self.gap;
                (deferred_acceptance(&u_hat, &self.prefs)?, Phase::ExploitGs)
            }
        };
        Ok(PolicyStep {
            round: self.round,
            matching,
            phase,
            diagnostics: StepDiagnostics {
                max_inv_norm,
                gap: Some(self.gap),
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
        if self.counter as f64 > overlap_threshold(self.config.ln_horizon(), self.gap) {
            self.advance_batch()?;
        }
        Ok(())
    }

    fn radius(&self) -> Option<f64> {
        Some(self.eta)
    }

    fn batches(&self) -> &[BatchRecord] {
        &self.batches
    }

    fn phase_counts(&self) -> [u64; 4] {
        self.counts
    }
}
