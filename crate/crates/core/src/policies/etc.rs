use crate::estimation::{estimated_utilities, GramState};
use crate::market::{deferred_acceptance, ArmPreferences, ContextSet};
use crate::Result;

use super::{
    update_matched, ExplorationSchedule, LearnerConfig, Phase, Policy, PolicyStep, StepDiagnostics,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EtcParams {
    /// Number of exploration rounds `h`.
    pub explore_rounds: u64,
    pub schedule: ExplorationSchedule,
}

impl Default for EtcParams {
    fn default() -> Self {
        Self {
            explore_rounds: 5000,
            schedule: ExplorationSchedule::default(),
        }
    }
}

/// Explore for `h` rounds, then play deferred acceptance on the estimates.
#[derive(Clone, Debug)]
pub struct EtcPolicy {
    config: LearnerConfig,
    params: EtcParams,
    prefs: ArmPreferences,
    grams: Vec<GramState>,
    round: u64,
    counts: [u64; 4],
}

impl EtcPolicy {
    pub fn new(config: LearnerConfig, params: EtcParams, prefs: ArmPreferences) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            grams: config.fresh_grams()?,
            config,
            params,
            prefs,
            round: 0,
            counts: [0; 4],
        })
    }

    pub fn grams(&self) -> &[GramState] {
        &self.grams
    }
}

impl Policy for EtcPolicy {
    fn name(&self) -> &'static str {
        "etc"
    }

    fn act(&mut self, ctx: &ContextSet) -> Result<PolicyStep> {
        let (matching, phase) = if self.round < self.params.explore_rounds {
            let m = self.params.schedule.matching(
                self.config.n_players,
                self.config.n_arms,
                self.round,
            );
            (m, Phase::Explore)
        } else {
            let u_hat = estimated_utilities(&self.grams, ctx)?;
            (deferred_acceptance(&u_hat, &self.prefs)?, Phase::Commit)
        };
        Ok(PolicyStep {
            round: self.round,
            matching,
            phase,
            diagnostics: StepDiagnostics::default(),
        })
    }

    fn observe(
        &mut self,
        ctx: &ContextSet,
        step: &PolicyStep,
        rewards: &[Option<f64>],
    ) -> Result<()> {
        if step.phase == Phase::Explore {
            update_matched(&mut self.grams, ctx, &step.matching, rewards)?;
        }
        self.counts[step.phase as usize] += 1;
        self.round += 1;
        Ok(())
    }

    fn phase_counts(&self) -> [u64; 4] {
        self.counts
    }
}
