//! Experiment configuration files.
//!
//! Configs are JSON with a `schema_version` field; unknown keys are
//! rejected so a typo never silently falls back to a default.

use std::path::{Path, PathBuf};

use matchbandits_core::environments::{
    AdversarialEnvSpec, AdversarialMode, ContextModel, Environment, NoiseModel, StochasticEnvSpec,
};
use matchbandits_core::market::{Bounds, MarketFile};
use matchbandits_core::oracle::replication_for;
use matchbandits_core::policies::{ExplorationSchedule, OverlapScope};
use matchbandits_core::regret::BenchmarkMode;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Bounds used when a generated market does not specify them. The noise
/// scale is an assumption of this tool.
pub const DEFAULT_BOUNDS: Bounds = Bounds {
    b_x: 1.0,
    b_theta: 0.5,
    noise_r: 0.1,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub market: MarketSpec,
    pub environment: EnvironmentSpec,
    pub policies: Vec<PolicyEntry>,
    pub horizon: u64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub benchmark: BenchmarkSpec,
    /// Number of evenly spaced rounds kept in curves; 0 keeps every round.
    #[serde(default = "default_curve_points")]
    pub curve_points: usize,
    /// Write the per-round ledger of replica 0.
    #[serde(default = "default_true")]
    pub write_ledger: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_replicas() -> usize {
    10
}

fn default_ridge() -> f64 {
    1.0
}

fn default_curve_points() -> usize {
    1000
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarketSpec {
    /// Random arm rankings and parameters with entries uniform on `[0, 1]`,
    /// rescaled to norm at most `b_theta`.
    Generate {
        n_players: usize,
        n_arms: usize,
        dim: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bounds: Option<Bounds>,
        /// Seed of the market draw; the experiment seed when unset.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Instance(MarketFile),
    /// Market JSON file, relative to the config file.
    File {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentSpec {
    /// Same context model for every arm, or one model per arm.
    Stochastic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model: Option<ContextModel>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        arms: Option<Vec<ContextModel>>,
    },
    /// Two context generators switched by `mode`; the graded pair when the
    /// generators are omitted.
    Adversarial {
        mode: AdversarialMode,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        large_gap: Option<Vec<ContextModel>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        small_gap: Option<Vec<ContextModel>>,
    },
}

impl EnvironmentSpec {
    pub fn resolve(&self, dim: usize, n_arms: usize, path: &str) -> Result<Environment> {
        let per_arm = |models: &Vec<ContextModel>, p: String| -> Result<StochasticEnvSpec> {
            if models.len() != n_arms {
                return Err(HarnessError::config(
                    p,
                    format!("{} models for {n_arms} arms", models.len()),
                ));
            }
            Ok(StochasticEnvSpec {
                dim,
                arms: models.clone(),
            })
        };
        let env = match self {
            EnvironmentSpec::Stochastic { model, arms } => match (model, arms) {
                (Some(m), None) => Environment::Stochastic(StochasticEnvSpec {
                    dim,
                    arms: vec![m.clone(); n_arms],
                }),
                (None, Some(a)) => Environment::Stochastic(per_arm(a, format!("{path}.arms"))?),
                _ => {
                    return Err(HarnessError::config(
                        path,
                        "give exactly one of `model` and `arms`",
                    ))
                }
            },
            EnvironmentSpec::Adversarial {
                mode,
                large_gap,
                small_gap,
            } => {
                let mut spec = AdversarialEnvSpec::graded(dim, n_arms, *mode);
                if let Some(l) = large_gap {
                    spec.large_gap = per_arm(l, format!("{path}.large_gap"))?;
                }
                if let Some(s) = small_gap {
                    spec.small_gap = per_arm(s, format!("{path}.small_gap"))?;
                }
                Environment::Adversarial(spec)
            }
        };
        env.validate()
            .map_err(|e| HarnessError::config(path, e.to_string()))?;
        Ok(env)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyEntry {
    /// Name used in outputs; the algorithm name when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub algorithm: Algorithm,
    /// Fixed confidence radius instead of the computed one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Confidence level used for the radius.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

impl PolicyEntry {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            label: None,
            algorithm,
            eta: None,
            delta: None,
        }
    }

    pub fn labeled(algorithm: Algorithm, label: &str) -> Self {
        Self {
            label: Some(label.to_string()),
            ..Self::new(algorithm)
        }
    }

    pub fn label(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| self.algorithm.name().to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Algorithm {
    Etc {
        #[serde(default = "default_h")]
        explore_rounds: u64,
        #[serde(default)]
        schedule: ExplorationSchedule,
    },
    BatchedEtc {
        #[serde(default = "default_t1")]
        initial_explore: u64,
        #[serde(default)]
        schedule: ExplorationSchedule,
        #[serde(default)]
        scope: OverlapScope,
    },
    Barb {
        #[serde(default = "default_gap1")]
        initial_gap: f64,
        #[serde(default)]
        scope: OverlapScope,
    },
    Adeco {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gap: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tolerance: Option<f64>,
        #[serde(default = "all_arms")]
        scope: OverlapScope,
    },
    /// Reference learner that sees the true utilities: deferred acceptance
    /// when the round's minimum difference exceeds `gap`, otherwise a draw
    /// from the approximation oracle at `tolerance`.
    KnownUtility {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gap: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tolerance: Option<f64>,
    },
}

fn default_h() -> u64 {
    5000
}

fn default_t1() -> u64 {
    100
}

fn default_gap1() -> f64 {
    0.5
}

fn all_arms() -> OverlapScope {
    OverlapScope::AllArms
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Etc { .. } => "etc",
            Algorithm::BatchedEtc { .. } => "batched-etc",
            Algorithm::Barb { .. } => "barb",
            Algorithm::Adeco { .. } => "adeco",
            Algorithm::KnownUtility { .. } => "known-utility",
        }
    }

    pub fn barb(initial_gap: f64) -> Self {
        Algorithm::Barb {
            initial_gap,
            scope: OverlapScope::TopN,
        }
    }

    pub fn etc(explore_rounds: u64) -> Self {
        Algorithm::Etc {
            explore_rounds,
            schedule: ExplorationSchedule::default(),
        }
    }

    pub fn batched_etc(initial_explore: u64) -> Self {
        Algorithm::BatchedEtc {
            initial_explore,
            schedule: ExplorationSchedule::default(),
            scope: OverlapScope::TopN,
        }
    }

    pub fn adeco() -> Self {
        Algorithm::Adeco {
            gap: None,
            tolerance: None,
            scope: OverlapScope::AllArms,
        }
    }

    pub fn known_utility() -> Self {
        Algorithm::KnownUtility {
            gap: None,
            tolerance: None,
        }
    }
}

/// Gap `T^{-1/3}` used by default for the adversarial setting.
pub fn default_gap(horizon: u64) -> f64 {
    (horizon.max(1) as f64).powf(-1.0 / 3.0)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BenchmarkSpec {
    #[default]
    Stable,
    /// Gap-switched benchmark; `gap` defaults to `T^{-1/3}`, `tolerance` to
    /// `gap / 2` and `alpha` to `1 / m` for the oracle's replication `m`.
    Approximate {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gap: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tolerance: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        alpha: Option<f64>,
    },
}

impl BenchmarkSpec {
    pub fn approximate() -> Self {
        BenchmarkSpec::Approximate {
            gap: None,
            tolerance: None,
            alpha: None,
        }
    }

    pub fn resolve(&self, horizon: u64, n_players: usize) -> BenchmarkMode {
        match *self {
            BenchmarkSpec::Stable => BenchmarkMode::Stable,
            BenchmarkSpec::Approximate {
                gap,
                tolerance,
                alpha,
            } => {
                let gap = gap.unwrap_or_else(|| default_gap(horizon));
                BenchmarkMode::Approximate {
                    gap,
                    tolerance: tolerance.unwrap_or(gap / 2.0),
                    alpha: alpha.unwrap_or(1.0 / replication_for(n_players) as f64),
                }
            }
        }
    }
}

fn positive(v: f64, path: &str) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(HarnessError::config(
            path,
            format!("must be positive, got {v}"),
        ))
    }
}

impl ExperimentConfig {
    /// Parses a config, reporting the field path of any schema error.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            HarnessError::config(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(HarnessError::config(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        if self.horizon == 0 {
            return Err(HarnessError::config("horizon", "must be at least 1"));
        }
        if self.replicas == 0 {
            return Err(HarnessError::config("replicas", "must be at least 1"));
        }
        positive(self.ridge, "ridge")?;
        if self.policies.is_empty() {
            return Err(HarnessError::config(
                "policies",
                "at least one policy is required",
            ));
        }
        let mut labels: Vec<String> = Vec::new();
        for (i, p) in self.policies.iter().enumerate() {
            let at = |f: &str| format!("policies[{i}].{f}");
            let label = p.label();
            if labels.contains(&label) {
                return Err(HarnessError::config(
                    at("label"),
                    format!("duplicate label {label}"),
                ));
            }
            if label.is_empty() || label.contains([',', '"', '\n']) {
                return Err(HarnessError::config(
                    at("label"),
                    "must be non-empty plain text",
                ));
            }
            labels.push(label);
            if let Some(eta) = p.eta {
                positive(eta, &at("eta"))?;
            }
            if let Some(delta) = p.delta {
                if !(delta > 0.0 && delta < 1.0) {
                    return Err(HarnessError::config(at("delta"), "must lie in (0, 1)"));
                }
            }
            match p.algorithm {
                Algorithm::Etc { .. } => {}
                Algorithm::BatchedEtc {
                    initial_explore, ..
                } => {
                    if initial_explore == 0 {
                        return Err(HarnessError::config(
                            at("algorithm.initial_explore"),
                            "must be at least 1",
                        ));
                    }
                }
                Algorithm::Barb { initial_gap, .. } => {
                    positive(initial_gap, &at("algorithm.initial_gap"))?
                }
                Algorithm::Adeco { gap, tolerance, .. }
                | Algorithm::KnownUtility { gap, tolerance } => {
                    let g = gap.unwrap_or_else(|| default_gap(self.horizon));
                    positive(g, &at("algorithm.gap"))?;
                    if let Some(t) = tolerance {
                        if !(t >= 0.0 && t < g) {
                            return Err(HarnessError::config(
                                at("algorithm.tolerance"),
                                "needs 0 <= tolerance < gap",
                            ));
                        }
                    }
                }
            }
        }
        if let BenchmarkSpec::Approximate {
            gap,
            tolerance,
            alpha,
        } = self.benchmark
        {
            if let Some(g) = gap {
                positive(g, "benchmark.gap")?;
            }
            if let Some(t) = tolerance {
                if !(t >= 0.0 && t.is_finite()) {
                    return Err(HarnessError::config("benchmark.tolerance", "must be >= 0"));
                }
            }
            if let Some(a) = alpha {
                if !(a > 0.0 && a <= 1.0) {
                    return Err(HarnessError::config(
                        "benchmark.alpha",
                        "must lie in (0, 1]",
                    ));
                }
            }
        }
        if let MarketSpec::Generate {
            n_players,
            n_arms,
            dim,
            ..
        } = self.market
        {
            if n_players == 0 || dim == 0 || n_players > n_arms {
                return Err(HarnessError::config(
                    "market",
                    "needs 1 <= n_players <= n_arms and dim >= 1",
                ));
            }
        }
        Ok(())
    }

    /// Settings that were filled in from tool defaults rather than the file.
    pub fn assumed_defaults(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let MarketSpec::Generate { bounds: None, .. } = self.market {
            out.push(format!(
                "bounds b_x={} b_theta={} noise_r={}",
                DEFAULT_BOUNDS.b_x, DEFAULT_BOUNDS.b_theta, DEFAULT_BOUNDS.noise_r
            ));
        }
        out
    }
}
