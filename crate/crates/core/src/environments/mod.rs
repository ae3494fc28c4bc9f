//! Context and noise generation, gap diagnostics and the lower-bound
//! instances.

mod gaps;
mod lower_bound;

pub use gaps::{
    appendix_h_cdf, appendix_h_contexts, delta_min, estimate_min_gap, min_gap_from_cdf,
    min_gap_from_samples, EmpiricalCdf, GapDiagnostics, SlopeFit,
};
pub use lower_bound::{LowerBoundInstance, LowerBoundRound, Variant};

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::market::{ContextSet, UtilityMatrix};
use crate::{Error, Result};

/// Independent random streams derived from one seed. Consumers of one
/// stream never shift the draws seen by another.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Market = 1,
    Contexts = 2,
    Noise = 3,
    Oracle = 4,
    Policy = 5,
    Diagnostics = 6,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

fn gaussian_vec<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Distribution of one arm's context.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ContextModel {
    /// Entries `N(mean, var)`, then scaled to unit norm.
    NormalizedGaussian { mean: f64, var: f64 },
    /// Entries uniform on `[lo, hi]`.
    UniformBox { lo: f64, hi: f64 },
    /// Unit vector `e_{j mod d} + mixing * g` normalized, `g` standard
    /// Gaussian; small `mixing` gives a nearly rank-one covariance per arm.
    OrthonormalMixing { mixing: f64 },
    /// `anchor + jitter * g`, shrunk back into the unit ball if needed.
    Anchored { anchor: Vec<f64>, jitter: f64 },
}

impl ContextModel {
    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            ContextModel::NormalizedGaussian { mean, var } => {
                if !(mean.is_finite() && *var >= 0.0 && var.is_finite()) {
                    return Err(Error::param(
                        "normalized_gaussian",
                        "needs finite mean and var >= 0",
                    ));
                }
                if *mean == 0.0 && *var == 0.0 {
                    return Err(Error::param(
                        "normalized_gaussian",
                        "degenerate zero vector",
                    ));
                }
            }
            ContextModel::UniformBox { lo, hi } => {
                if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                    return Err(Error::param("uniform_box", "needs lo <= hi"));
                }
                let m = lo.abs().max(hi.abs()) * (dim as f64).sqrt();
                if m > 1.0 + 1e-12 {
                    return Err(Error::param("uniform_box", "box exceeds the unit ball"));
                }
            }
            ContextModel::OrthonormalMixing { mixing } => {
                if !(*mixing >= 0.0 && mixing.is_finite()) {
                    return Err(Error::param("orthonormal_mixing", "mixing must be >= 0"));
                }
            }
            ContextModel::Anchored { anchor, jitter } => {
                if anchor.len() != dim {
                    return Err(Error::DimensionMismatch {
                        what: "anchor",
                        expected: dim,
                        found: anchor.len(),
                    });
                }
                if !(*jitter >= 0.0 && jitter.is_finite()) {
                    return Err(Error::param("anchored", "jitter must be >= 0"));
                }
            }
        }
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(&self, arm: usize, dim: usize, rng: &mut R) -> DVector<f64> {
        match self {
            ContextModel::NormalizedGaussian { mean, var } => loop {
                let g = gaussian_vec(dim, rng) * var.sqrt();
                let x = g.add_scalar(*mean);
                let n = x.norm();
                if n > 0.0 {
                    break x / n;
                }
            },
            ContextModel::UniformBox { lo, hi } => {
                DVector::from_fn(dim, |_, _| lo + (hi - lo) * rng.gen::<f64>())
            }
            ContextModel::OrthonormalMixing { mixing } => loop {
                let mut x = gaussian_vec(dim, rng) * *mixing;
                x[arm % dim] += 1.0;
                let n = x.norm();
                if n > 0.0 {
                    break x / n;
                }
            },
            ContextModel::Anchored { anchor, jitter } => {
                let x = DVector::from_column_slice(anchor) + gaussian_vec(dim, rng) * *jitter;
                let n = x.norm();
                if n > 1.0 {
                    x / n
                } else {
                    x
                }
            }
        }
    }
}

/// Observation noise added to the utility of each matched pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// `N(0, R^2)`.
    #[default]
    Gaussian,
    /// Uniform on `[-R, R]`.
    Uniform,
}

/// `N x K` noise matrix; zero when `r = 0`.
pub fn sample_noise<R: Rng + ?Sized>(
    n_players: usize,
    n_arms: usize,
    model: NoiseModel,
    r: f64,
    rng: &mut R,
) -> UtilityMatrix {
    let values = (0..n_players * n_arms)
        .map(|_| match model {
            NoiseModel::Gaussian => r * rng.sample::<f64, _>(StandardNormal),
            NoiseModel::Uniform => r * (2.0 * rng.gen::<f64>() - 1.0),
        })
        .collect();
    UtilityMatrix::new(n_players, n_arms, values).expect("noise is finite")
}

/// Per-arm context distributions, fixed over time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticEnvSpec {
    pub dim: usize,
    pub arms: Vec<ContextModel>,
}

impl StochasticEnvSpec {
    pub fn uniform(dim: usize, n_arms: usize, model: ContextModel) -> Result<Self> {
        let s = Self {
            dim,
            arms: vec![model; n_arms],
        };
        s.validate()?;
        Ok(s)
    }

    /// Unit contexts with entries drawn from `N(10, 1)` before normalizing.
    pub fn normalized_gaussian(dim: usize, n_arms: usize) -> Self {
        Self::uniform(
            dim,
            n_arms,
            ContextModel::NormalizedGaussian {
                mean: 10.0,
                var: 1.0,
            },
        )
        .expect("valid spec")
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.arms.is_empty() {
            return Err(Error::param(
                "environment",
                "needs dim >= 1 and at least one arm",
            ));
        }
        self.arms.iter().try_for_each(|m| m.validate(self.dim))
    }

    pub fn n_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ContextSet {
        let xs = self
            .arms
            .iter()
            .enumerate()
            .map(|(j, m)| m.sample(j, self.dim, rng))
            .collect();
        ContextSet::new(self.dim, xs).expect("generated contexts are valid")
    }
}

/// How the adversary picks between its two generators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AdversarialMode {
    /// Large-gap on even rounds, small-gap on odd rounds.
    Alternating,
    /// Small-gap with probability `p`, independently per round.
    BernoulliRegime { p: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversarialEnvSpec {
    pub mode: AdversarialMode,
    pub large_gap: StochasticEnvSpec,
    pub small_gap: StochasticEnvSpec,
}

impl AdversarialEnvSpec {
    /// Large-gap rounds place arm `j` at `(j + 1)/K` along a common direction
    /// with slight jitter; small-gap rounds put every arm near the same point.
    pub fn graded(dim: usize, n_arms: usize, mode: AdversarialMode) -> Self {
        let v = 1.0 / (dim as f64).sqrt();
        let large = (0..n_arms)
            .map(|j| ContextModel::Anchored {
                anchor: vec![v * (j + 1) as f64 / n_arms as f64; dim],
                jitter: 0.01,
            })
            .collect();
        let small = vec![
            ContextModel::Anchored {
                anchor: vec![0.6 * v; dim],
                jitter: 0.002,
            };
            n_arms
        ];
        Self {
            mode,
            large_gap: StochasticEnvSpec { dim, arms: large },
            small_gap: StochasticEnvSpec { dim, arms: small },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.large_gap.validate()?;
        self.small_gap.validate()?;
        if self.large_gap.dim != self.small_gap.dim
            || self.large_gap.n_arms() != self.small_gap.n_arms()
        {
            return Err(Error::param("adversarial", "generators disagree on shape"));
        }
        if let AdversarialMode::BernoulliRegime { p } = self.mode {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::param("p", "must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Any context source driving a simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Environment {
    Stochastic(StochasticEnvSpec),
    Adversarial(AdversarialEnvSpec),
}

/// Contexts of one round and, for adversarial sources, whether the
/// small-gap generator was used.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundContexts {
    pub contexts: ContextSet,
    pub small_gap_generator: Option<bool>,
}

impl Environment {
    pub fn validate(&self) -> Result<()> {
        match self {
            Environment::Stochastic(s) => s.validate(),
            Environment::Adversarial(a) => a.validate(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Environment::Stochastic(s) => s.dim,
            Environment::Adversarial(a) => a.large_gap.dim,
        }
    }

    pub fn n_arms(&self) -> usize {
        match self {
            Environment::Stochastic(s) => s.n_arms(),
            Environment::Adversarial(a) => a.large_gap.n_arms(),
        }
    }

    /// Contexts for round `t` (0-based) drawn from the contexts stream.
    pub fn sample_contexts<R: Rng + ?Sized>(&self, t: u64, rng: &mut R) -> RoundContexts {
        match self {
            Environment::Stochastic(s) => RoundContexts {
                contexts: s.sample(rng),
                small_gap_generator: None,
            },
            Environment::Adversarial(a) => {
                let small = match a.mode {
                    AdversarialMode::Alternating => t % 2 == 1,
                    AdversarialMode::BernoulliRegime { p } => rng.gen::<f64>() < p,
                };
                let gen = if small { &a.small_gap } else { &a.large_gap };
                RoundContexts {
                    contexts: gen.sample(rng),
                    small_gap_generator: Some(small),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_contexts_have_unit_norm() {
        let env = StochasticEnvSpec::normalized_gaussian(3, 4);
        let mut rng = stream_rng(7, Stream::Contexts);
        for _ in 0..100 {
            let ctx = env.sample(&mut rng);
            for x in ctx.iter() {
                assert!((x.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_scale_noise_is_zero() {
        let mut rng = stream_rng(1, Stream::Noise);
        let z = sample_noise(3, 4, NoiseModel::Gaussian, 0.0, &mut rng);
        assert!(z.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| stream_rng(3, Stream::Noise).gen()).collect();
        let b: Vec<u64> = (0..4).map(|_| stream_rng(3, Stream::Noise).gen()).collect();
        assert_eq!(a, b);
        let c: u64 = stream_rng(3, Stream::Contexts).gen();
        assert_ne!(a[0], c);
    }

    #[test]
    fn anchored_contexts_stay_in_unit_ball() {
        let env = AdversarialEnvSpec::graded(3, 4, AdversarialMode::Alternating);
        env.validate().unwrap();
        let e = Environment::Adversarial(env);
        let mut rng = stream_rng(5, Stream::Contexts);
        for t in 0..200 {
            let r = e.sample_contexts(t, &mut rng);
            assert_eq!(r.small_gap_generator, Some(t % 2 == 1));
            assert!(r.contexts.max_norm() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn box_outside_ball_is_rejected() {
        let spec = StochasticEnvSpec::uniform(4, 2, ContextModel::UniformBox { lo: 0.0, hi: 1.0 });
        assert!(spec.is_err());
    }
}
