use rand_chacha::ChaCha8Rng;

use crate::estimation::{estimated_utilities, GramState};
use crate::market::{deferred_acceptance, ArmPreferences, ContextSet};
use crate::oracle::oracle_for_uncertainty;
use crate::{Error, Result};

use super::{
    min_row_gap, uncertain_pairs_matching, update_matched, LearnerConfig, OverlapScope, Phase,
    Policy, PolicyStep, StepDiagnostics,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdecoParams {
    /// Gap `Delta`; `T^{-1/3}` when unset.
    pub gap: Option<f64>,
    /// Tolerance `eps < Delta`; `Delta / 2` when unset.
    pub tolerance: Option<f64>,
    pub scope: OverlapScope,
}

impl Default for AdecoParams {
    fn default() -> Self {
        Self {
            gap: None,
            tolerance: None,
            scope: OverlapScope::AllArms,
        }
    }
}

/// Adaptive explore, then choose between deferred acceptance and the
/// approximation oracle depending on how well separated the estimates are.
#[derive(Clone, Debug)]
pub struct AdecoPolicy {
    config: LearnerConfig,
    scope: OverlapScope,
    prefs: ArmPreferences,
    eta: f64,
    gap: f64,
    tolerance: f64,
    grams: Vec<GramState>,
    rng: ChaCha8Rng,
    round: u64,
    counts: [u64; 4],
}

impl AdecoPolicy {
    /// `rng` drives the draws from the oracle's distribution.
    pub fn new(
        config: LearnerConfig,
        params: AdecoParams,
        prefs: ArmPreferences,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        config.validate()?;
        let gap = params
            .gap
            .unwrap_or_else(|| (config.horizon as f64).powf(-1.0 / 3.0));
        if !(gap > 0.0 && gap.is_finite()) {
            return Err(Error::param("gap", "must be positive"));
        }
        let tolerance = params.tolerance.unwrap_or(gap / 2.0);
        if !(tolerance >= 0.0 && tolerance < gap) {
            return Err(Error::param("tolerance", "needs 0 <= eps < gap"));
        }
        let eta = config.radius(1.0 / config.horizon as f64)?;
        Ok(Self {
            grams: config.fresh_grams()?,
            config,
            scope: params.scope,
            prefs,
            eta,
            gap,
            tolerance,
            rng,
            round: 0,
            counts: [0; 4],
        })
    }

    pub fn gap(&self) -> f64 {
        self.gap
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Radius `(Delta - eps) / 4` of the uncertainty set handed to the oracle.
    pub fn gamma(&self) -> f64 {
        (self.gap - self.tolerance) / 4.0
    }

    /// Norm threshold `(Delta - eps) / (4 eta)`.
    pub fn threshold(&self) -> f64 {
        self.gamma() / self.eta
    }

    pub fn grams(&self) -> &[GramState] {
        &self.grams
    }

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
}

impl Policy for AdecoPolicy {
    fn name(&self) -> &'static str {
        "adeco"
    }

    fn act(&mut self, ctx: &ContextSet) -> Result<PolicyStep> {
        let (explore, max_inv_norm) = uncertain_pairs_matching(&self.grams, ctx, self.threshold())?;
        let mut support_size = None;
        let (matching, phase) = match explore {
            Some(m) => (m, Phase::Explore),
            None => {
                let u_hat = estimated_utilities(&self.grams, ctx)?;
                if min_row_gap(&u_hat, self.scope) > (self.gap + self.tolerance) / 2.0 {
                    (deferred_acceptance(&u_hat, &self.prefs)?, Phase::ExploitGs)
                } else {
                    let d =
                        oracle_for_uncertainty(&u_hat, &self.prefs, self.gamma(), self.tolerance)?;
                    support_size = Some(d.len());
                    (d.sample(&mut self.rng).clone(), Phase::ExploitOracle)
                }
            }
        };
        Ok(PolicyStep {
            round: self.round,
            matching,
            phase,
            diagnostics: StepDiagnostics {
                max_inv_norm,
                gap: Some(self.gap),
                overlap_counter: None,
                batch: None,
                support_size,
            },
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

    fn radius(&self) -> Option<f64> {
        Some(self.eta)
    }

    fn phase_counts(&self) -> [u64; 4] {
        self.counts
    }
}
