//! Randomized approximation oracle built on a replicated market.
//!
//! Every arm is copied `m` times; copy `c` (0-based) is worth
//! `U - c * tol` to each player and keeps the arm's preference list.
//! Deferred acceptance on the replicated market yields one matching per
//! copy, and the oracle plays each of them with probability `1/m`. Each
//! player then receives at least `U*_tol(p) / m - tol` in expectation,
//! where `U*_tol` is the best share over `tol`-stable matchings.

use crate::market::{
    deferred_acceptance, ArmPreferences, Matching, MatchingDistribution, UtilityMatrix,
};
use crate::{Error, Result};

/// `floor(log2 N + 2)`.
pub fn replication_for(n_players: usize) -> usize {
    ((n_players.max(1) as f64).log2() + 2.0).floor() as usize
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleConfig {
    pub replication: usize,
    pub tolerance: f64,
}

impl OracleConfig {
    pub fn for_players(n_players: usize, tolerance: f64) -> Self {
        Self {
            replication: replication_for(n_players),
            tolerance,
        }
    }

    /// Guaranteed fraction of the tolerant stable share, `1/m`.
    pub fn alpha(&self) -> f64 {
        1.0 / self.replication as f64
    }
}

/// Utilities of the replicated market; column `c * K + a` is copy `c` of
/// arm `a`.
pub fn replicated_utilities(
    u: &UtilityMatrix,
    replication: usize,
    tolerance: f64,
) -> UtilityMatrix {
    let n = u.n_players();
    let k = u.n_arms();
    let mut out = UtilityMatrix::zeros(n, k * replication);
    for i in 0..n {
        for c in 0..replication {
            for a in 0..k {
                out.set(i, c * k + a, u.get(i, a) - c as f64 * tolerance);
            }
        }
    }
    out
}

/// Distribution over the `m` copy matchings of the replicated market.
pub fn approx_oracle(
    u: &UtilityMatrix,
    prefs: &ArmPreferences,
    config: OracleConfig,
) -> Result<MatchingDistribution> {
    let m = config.replication;
    if m == 0 {
        return Err(Error::param("replication", "must be at least 1"));
    }
    if !(config.tolerance >= 0.0 && config.tolerance.is_finite()) {
        return Err(Error::param("tolerance", "must be finite and nonnegative"));
    }
    if prefs.n_arms() != u.n_arms() {
        return Err(Error::DimensionMismatch {
            what: "arm preferences",
            expected: u.n_arms(),
            found: prefs.n_arms(),
        });
    }
    let k = u.n_arms();
    let big = replicated_utilities(u, m, config.tolerance);
    let mu = deferred_acceptance(&big, &prefs.replicate(m))?;
    let copies = (0..m)
        .map(|c| {
            let assignment = (0..u.n_players())
                .map(|p| match mu.arm_of(p) {
                    Some(r) if r / k == c => Some(r % k),
                    _ => None,
                })
                .collect();
            Matching::new(k, assignment)
        })
        .collect::<Result<Vec<_>>>()?;
    MatchingDistribution::uniform(copies)
}

/// Oracle call for an uncertainty set of radius `gamma` around `u_hat`,
/// run with instability tolerance `2 gamma + eps`.
pub fn oracle_for_uncertainty(
    u_hat: &UtilityMatrix,
    prefs: &ArmPreferences,
    gamma: f64,
    eps: f64,
) -> Result<MatchingDistribution> {
    if !(gamma >= 0.0 && eps >= 0.0) {
        return Err(Error::param(
            "gamma",
            "radius and tolerance must be nonnegative",
        ));
    }
    approx_oracle(
        u_hat,
        prefs,
        OracleConfig::for_players(u_hat.n_players(), 2.0 * gamma + eps),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replication_counts() {
        assert_eq!(replication_for(1), 2);
        assert_eq!(replication_for(2), 3);
        assert_eq!(replication_for(3), 3);
        assert_eq!(replication_for(4), 4);
        assert_eq!(replication_for(7), 4);
        assert_eq!(replication_for(8), 5);
        assert_eq!(OracleConfig::for_players(4, 0.1).alpha(), 0.25);
    }

    #[test]
    fn every_player_appears_in_exactly_one_copy() {
        let u = UtilityMatrix::from_rows(&[vec![0.9, 0.1], vec![0.8, 0.7]]).unwrap();
        let prefs = ArmPreferences::identity(2, 2);
        let d = approx_oracle(&u, &prefs, OracleConfig::for_players(2, 0.05)).unwrap();
        assert_eq!(d.len(), 3);
        for p in 0..2 {
            let hits = d
                .support()
                .iter()
                .filter(|(m, _)| m.arm_of(p).is_some())
                .count();
            assert_eq!(hits, 1);
        }
    }

    #[test]
    fn ties_go_to_lower_copy() {
        // Player 0 holds arm 0 in copy 0; player 1 is rejected there and the
        // next-best replica is copy 1 of arm 0 (0.5) versus copy 0 of arm 1
        // (0.5): the lower replica index, copy 0 of arm 1, wins.
        let u = UtilityMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.5]]).unwrap();
        let prefs = ArmPreferences::identity(2, 2);
        let cfg = OracleConfig {
            replication: 2,
            tolerance: 0.5,
        };
        let d = approx_oracle(&u, &prefs, cfg).unwrap();
        assert_eq!(d.support()[0].0.assignment(), &[Some(0), Some(1)]);
        assert_eq!(d.support()[1].0.assignment(), &[None, None]);
    }
}
