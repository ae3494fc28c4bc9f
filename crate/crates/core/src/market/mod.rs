//! Market primitives: preferences, utilities, contexts, matchings.

mod bipartite;
mod io;
mod stability;

pub use bipartite::max_cardinality_matching;
pub use io::{MarketFile, MatchingIds};
pub use stability::{
    blocking_pairs, deferred_acceptance, deferred_acceptance_with_stats, enumerate_stable_set,
    is_stable, optimal_stable_share, DaOutcome, ENUMERATION_LIMIT,
};

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::{Error, Result};

pub type PlayerId = usize;
pub type ArmId = usize;

/// Strict preference order of every arm over all players.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmPreferences {
    n_players: usize,
    orders: Vec<Vec<PlayerId>>,
    ranks: Vec<Vec<usize>>,
}

impl ArmPreferences {
    /// `orders[a]` lists players from most to least preferred by arm `a`.
    pub fn new(n_players: usize, orders: Vec<Vec<PlayerId>>) -> Result<Self> {
        let mut ranks = Vec::with_capacity(orders.len());
        for (a, order) in orders.iter().enumerate() {
            if order.len() != n_players {
                return Err(Error::InvalidMarket(format!(
                    "arm {} ranks {} players, expected {}",
                    a,
                    order.len(),
                    n_players
                )));
            }
            let mut rank = vec![usize::MAX; n_players];
            for (pos, &p) in order.iter().enumerate() {
                if p >= n_players || rank[p] != usize::MAX {
                    return Err(Error::InvalidMarket(format!(
                        "arm {a} preference list is not a permutation of players"
                    )));
                }
                rank[p] = pos;
            }
            ranks.push(rank);
        }
        Ok(Self {
            n_players,
            orders,
            ranks,
        })
    }

    /// Every arm ranks players by index.
    pub fn identity(n_players: usize, n_arms: usize) -> Self {
        let orders = vec![(0..n_players).collect::<Vec<_>>(); n_arms];
        Self::new(n_players, orders).expect("identity order is a permutation")
    }

    pub fn random<R: Rng + ?Sized>(n_players: usize, n_arms: usize, rng: &mut R) -> Self {
        let orders = (0..n_arms)
            .map(|_| {
                let mut o: Vec<PlayerId> = (0..n_players).collect();
                o.shuffle(rng);
                o
            })
            .collect();
        Self::new(n_players, orders).expect("shuffled order is a permutation")
    }

    pub fn n_players(&self) -> usize {
        self.n_players
    }

    pub fn n_arms(&self) -> usize {
        self.orders.len()
    }

    pub fn order(&self, arm: ArmId) -> &[PlayerId] {
        &self.orders[arm]
    }

    /// Position of `player` in `arm`'s list; 0 is the favourite.
    pub fn rank(&self, arm: ArmId, player: PlayerId) -> usize {
        self.ranks[arm][player]
    }

    pub fn prefers(&self, arm: ArmId, a: PlayerId, b: PlayerId) -> bool {
        self.ranks[arm][a] < self.ranks[arm][b]
    }

    /// Preferences of the market where every arm appears `copies` times;
    /// replica `c * K + a` inherits the list of arm `a`.
    pub fn replicate(&self, copies: usize) -> Self {
        let mut orders = Vec::with_capacity(self.orders.len() * copies);
        for _ in 0..copies {
            orders.extend(self.orders.iter().cloned());
        }
        Self::new(self.n_players, orders).expect("replicated lists stay permutations")
    }
}

/// Dense `N x K` matrix of player-side utilities.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UtilityMatrix {
    n_players: usize,
    n_arms: usize,
    values: Vec<f64>,
}

impl UtilityMatrix {
    pub fn new(n_players: usize, n_arms: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_players * n_arms {
            return Err(Error::DimensionMismatch {
                what: "utility matrix",
                expected: n_players * n_arms,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("utility matrix"));
        }
        Ok(Self {
            n_players,
            n_arms,
            values,
        })
    }

    pub fn zeros(n_players: usize, n_arms: usize) -> Self {
        Self {
            n_players,
            n_arms,
            values: vec![0.0; n_players * n_arms],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidMarket("ragged utility rows".into()));
        }
        Self::new(n, k, rows.concat())
    }

    pub fn n_players(&self) -> usize {
        self.n_players
    }

    pub fn n_arms(&self) -> usize {
        self.n_arms
    }

    #[inline]
    pub fn get(&self, player: PlayerId, arm: ArmId) -> f64 {
        self.values[player * self.n_arms + arm]
    }

    pub fn set(&mut self, player: PlayerId, arm: ArmId, value: f64) {
        self.values[player * self.n_arms + arm] = value;
    }

    pub fn row(&self, player: PlayerId) -> &[f64] {
        &self.values[player * self.n_arms..(player + 1) * self.n_arms]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Utility of `player` under `matching`; 0 when unmatched.
    pub fn value_of(&self, player: PlayerId, matching: &Matching) -> f64 {
        matching.arm_of(player).map_or(0.0, |a| self.get(player, a))
    }

    pub fn max_abs_diff(&self, other: &UtilityMatrix) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// True when no row contains two equal entries.
    pub fn rows_tie_free(&self) -> bool {
        (0..self.n_players).all(|i| {
            let mut r = self.row(i).to_vec();
            r.sort_by(|a, b| a.total_cmp(b));
            r.windows(2).all(|w| w[0] != w[1])
        })
    }
}

/// One context vector per arm for a single round.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextSet {
    dim: usize,
    contexts: Vec<DVector<f64>>,
}

impl ContextSet {
    pub fn new(dim: usize, contexts: Vec<DVector<f64>>) -> Result<Self> {
        for x in &contexts {
            if x.len() != dim {
                return Err(Error::DimensionMismatch {
                    what: "context",
                    expected: dim,
                    found: x.len(),
                });
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("context"));
            }
        }
        Ok(Self { dim, contexts })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        Self::new(
            dim,
            rows.iter().map(|r| DVector::from_column_slice(r)).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_arms(&self) -> usize {
        self.contexts.len()
    }

    pub fn get(&self, arm: ArmId) -> &DVector<f64> {
        &self.contexts[arm]
    }

    pub fn iter(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.contexts.iter()
    }

    pub fn max_norm(&self) -> f64 {
        self.contexts.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }
}

/// Norm bounds of a market; `b_x` bounds contexts, `b_theta` player
/// parameters and `noise_r` the sub-Gaussian noise scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub b_x: f64,
    pub b_theta: f64,
    pub noise_r: f64,
}

impl Bounds {
    /// Bound on the magnitude of rewards, `2 b_theta b_x`.
    pub fn b_y(&self) -> f64 {
        2.0 * self.b_theta * self.b_x
    }
}

/// Static description of a market: sizes, arm preferences and the unknown
/// player parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct MarketInstance {
    pub n_players: usize,
    pub n_arms: usize,
    pub dim: usize,
    pub arm_prefs: ArmPreferences,
    pub theta: Vec<DVector<f64>>,
    pub bounds: Bounds,
}

impl MarketInstance {
    pub fn new(
        arm_prefs: ArmPreferences,
        theta: Vec<DVector<f64>>,
        bounds: Bounds,
    ) -> Result<Self> {
        let n_players = theta.len();
        let n_arms = arm_prefs.n_arms();
        let dim = theta.first().map_or(0, |t| t.len());
        if n_players == 0 || n_arms == 0 || dim == 0 {
            return Err(Error::InvalidMarket("empty market".into()));
        }
        if n_players > n_arms {
            return Err(Error::InvalidMarket(format!(
                "{n_players} players exceed {n_arms} arms"
            )));
        }
        if arm_prefs.n_players() != n_players {
            return Err(Error::InvalidMarket(
                "arm preference lists do not cover every player".into(),
            ));
        }
        if !(bounds.b_x > 0.0 && bounds.b_theta > 0.0 && bounds.noise_r >= 0.0) {
            return Err(Error::InvalidMarket("bounds must be positive".into()));
        }
        if bounds.b_y() > 1.0 + 1e-12 {
            return Err(Error::InvalidMarket(format!(
                "2 b_theta b_x = {} exceeds 1",
                bounds.b_y()
            )));
        }
        for (i, t) in theta.iter().enumerate() {
            if t.len() != dim {
                return Err(Error::DimensionMismatch {
                    what: "theta",
                    expected: dim,
                    found: t.len(),
                });
            }
            if t.norm() > bounds.b_theta * (1.0 + 1e-9) {
                return Err(Error::InvalidMarket(format!(
                    "player {i} parameter norm {} exceeds b_theta {}",
                    t.norm(),
                    bounds.b_theta
                )));
            }
        }
        Ok(Self {
            n_players,
            n_arms,
            dim,
            arm_prefs,
            theta,
            bounds,
        })
    }

    /// Player parameters with entries uniform on `[0, 1]`, rescaled so every
    /// norm is at most `b_theta`.
    pub fn random_uniform_theta<R: Rng + ?Sized>(
        n_players: usize,
        n_arms: usize,
        dim: usize,
        bounds: Bounds,
        rng: &mut R,
    ) -> Result<Self> {
        let scale = bounds.b_theta / (dim as f64).sqrt();
        let theta = (0..n_players)
            .map(|_| DVector::from_fn(dim, |_, _| rng.gen::<f64>() * scale))
            .collect();
        let prefs = ArmPreferences::random(n_players, n_arms, rng);
        Self::new(prefs, theta, bounds)
    }

    pub fn utilities(&self, contexts: &ContextSet) -> Result<UtilityMatrix> {
        compute_utilities(&self.theta, contexts)
    }
}

/// `U[i][j] = theta_i . x_j`.
pub fn compute_utilities(theta: &[DVector<f64>], contexts: &ContextSet) -> Result<UtilityMatrix> {
    let k = contexts.n_arms();
    let mut values = Vec::with_capacity(theta.len() * k);
    for t in theta {
        if t.len() != contexts.dim() {
            return Err(Error::DimensionMismatch {
                what: "theta",
                expected: contexts.dim(),
                found: t.len(),
            });
        }
        values.extend(contexts.iter().map(|x| t.dot(x)));
    }
    UtilityMatrix::new(theta.len(), k, values)
}

/// Partial injective assignment of players to arms.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Matching {
    assignment: Vec<Option<ArmId>>,
    holders: Vec<Option<PlayerId>>,
}

impl Matching {
    pub fn empty(n_players: usize, n_arms: usize) -> Self {
        Self {
            assignment: vec![None; n_players],
            holders: vec![None; n_arms],
        }
    }

    pub fn new(n_arms: usize, assignment: Vec<Option<ArmId>>) -> Result<Self> {
        let mut holders = vec![None; n_arms];
        for (p, a) in assignment.iter().enumerate() {
            if let Some(a) = *a {
                if a >= n_arms {
                    return Err(Error::InvalidMatching(format!("arm {a} out of range")));
                }
                if holders[a].is_some() {
                    return Err(Error::InvalidMatching(format!("arm {a} matched twice")));
                }
                holders[a] = Some(p);
            }
        }
        Ok(Self {
            assignment,
            holders,
        })
    }

    pub fn n_players(&self) -> usize {
        self.assignment.len()
    }

    pub fn n_arms(&self) -> usize {
        self.holders.len()
    }

    pub fn arm_of(&self, player: PlayerId) -> Option<ArmId> {
        self.assignment[player]
    }

    pub fn player_of(&self, arm: ArmId) -> Option<PlayerId> {
        self.holders[arm]
    }

    pub fn assignment(&self) -> &[Option<ArmId>] {
        &self.assignment
    }

    pub fn size(&self) -> usize {
        self.assignment.iter().filter(|a| a.is_some()).count()
    }

    /// Matches `player` to `arm`, releasing whatever either held before.
    pub fn assign(&mut self, player: PlayerId, arm: ArmId) {
        if let Some(old) = self.assignment[player] {
            self.holders[old] = None;
        }
        if let Some(other) = self.holders[arm] {
            self.assignment[other] = None;
        }
        self.assignment[player] = Some(arm);
        self.holders[arm] = Some(player);
    }

    pub fn unassign(&mut self, player: PlayerId) {
        if let Some(a) = self.assignment[player].take() {
            self.holders[a] = None;
        }
    }
}

/// Finite distribution over matchings.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchingDistribution {
    support: Vec<(Matching, f64)>,
}

impl MatchingDistribution {
    pub fn new(support: Vec<(Matching, f64)>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidMatching("empty distribution".into()));
        }
        if support.iter().any(|(_, p)| p.is_nan() || *p < 0.0) {
            return Err(Error::InvalidMatching("negative probability".into()));
        }
        let total: f64 = support.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidMatching(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(Self { support })
    }

    pub fn uniform(matchings: Vec<Matching>) -> Result<Self> {
        let w = 1.0 / matchings.len().max(1) as f64;
        Self::new(matchings.into_iter().map(|m| (m, w)).collect())
    }

    pub fn point(matching: Matching) -> Self {
        Self {
            support: vec![(matching, 1.0)],
        }
    }

    pub fn support(&self) -> &[(Matching, f64)] {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Expected utility of each player, unmatched counting as 0.
    pub fn expected_utilities(&self, u: &UtilityMatrix) -> Vec<f64> {
        let mut out = vec![0.0; u.n_players()];
        for (m, w) in &self.support {
            for (i, o) in out.iter_mut().enumerate() {
                *o += w * u.value_of(i, m);
            }
        }
        out
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &Matching {
        let mut r: f64 = rng.gen();
        for (m, w) in &self.support {
            if r < *w {
                return m;
            }
            r -= w;
        }
        &self.support[self.support.len() - 1].0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn utility_is_inner_product() {
        let ctx = ContextSet::from_rows(&[vec![0.3, 0.9]]).unwrap();
        let u = compute_utilities(&[DVector::from_vec(vec![1.0, 0.0])], &ctx).unwrap();
        assert_eq!(u.get(0, 0), 0.3);

        let s = 1.0 / 2f64.sqrt();
        let ctx = ContextSet::from_rows(&[vec![s, s]]).unwrap();
        let u = compute_utilities(&[DVector::from_vec(vec![s, s])], &ctx).unwrap();
        assert!((u.get(0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn utility_dimension_mismatch() {
        let ctx = ContextSet::from_rows(&[vec![0.3, 0.9, 0.1]]).unwrap();
        let err = compute_utilities(&[DVector::from_vec(vec![1.0, 0.0])], &ctx).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn matching_rejects_duplicate_arm() {
        assert!(Matching::new(2, vec![Some(1), Some(1)]).is_err());
        let m = Matching::new(3, vec![Some(2), None]).unwrap();
        assert_eq!(m.player_of(2), Some(0));
        assert_eq!(m.size(), 1);
    }

    #[test]
    fn preferences_must_be_permutations() {
        assert!(ArmPreferences::new(2, vec![vec![0, 0]]).is_err());
        assert!(ArmPreferences::new(2, vec![vec![1]]).is_err());
        let p = ArmPreferences::new(2, vec![vec![1, 0]]).unwrap();
        assert!(p.prefers(0, 1, 0));
        let r = p.replicate(3);
        assert_eq!(r.n_arms(), 3);
        assert_eq!(r.order(2), &[1, 0]);
    }

    #[test]
    fn market_rejects_large_reward_bound() {
        let bounds = Bounds {
            b_x: 1.0,
            b_theta: 1.0,
            noise_r: 0.1,
        };
        let theta = vec![DVector::from_vec(vec![0.1, 0.1])];
        let err = MarketInstance::new(ArmPreferences::identity(1, 2), theta, bounds).unwrap_err();
        assert!(matches!(err, Error::InvalidMarket(_)));
    }

    #[test]
    fn distribution_expectation_and_sampling() {
        let u = UtilityMatrix::from_rows(&[vec![1.0, 3.0]]).unwrap();
        let d = MatchingDistribution::uniform(vec![
            Matching::new(2, vec![Some(0)]).unwrap(),
            Matching::new(2, vec![Some(1)]).unwrap(),
            Matching::empty(1, 2),
        ])
        .unwrap();
        assert!((d.expected_utilities(&u)[0] - 4.0 / 3.0).abs() < 1e-12);
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        assert_eq!(d.sample(&mut rng).arm_of(0), Some(0));
    }
}
