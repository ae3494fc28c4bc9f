//! Stability checks, player-proposing deferred acceptance and brute-force
//! enumeration of (approximately) stable matchings.

use std::collections::VecDeque;

use super::{ArmId, ArmPreferences, Matching, PlayerId, UtilityMatrix};
use crate::{Error, Result};

/// Largest number of players or arms accepted by [`enumerate_stable_set`].
pub const ENUMERATION_LIMIT: usize = 8;

fn check_shapes(u: &UtilityMatrix, prefs: &ArmPreferences) -> Result<()> {
    if u.n_arms() != prefs.n_arms() {
        return Err(Error::DimensionMismatch {
            what: "arm preferences",
            expected: u.n_arms(),
            found: prefs.n_arms(),
        });
    }
    if u.n_players() != prefs.n_players() {
        return Err(Error::DimensionMismatch {
            what: "arm preference lists",
            expected: u.n_players(),
            found: prefs.n_players(),
        });
    }
    Ok(())
}

/// Pairs `(p, a)` where arm `a` prefers `p` to its current partner (or is
/// free) and `U[p][a]` exceeds `p`'s current utility by more than `eps`.
/// Unmatched players hold utility 0.
pub fn blocking_pairs(
    u: &UtilityMatrix,
    prefs: &ArmPreferences,
    mu: &Matching,
    eps: f64,
) -> Vec<(PlayerId, ArmId)> {
    let mut out = Vec::new();
    for p in 0..u.n_players() {
        let current = u.value_of(p, mu);
        for a in 0..u.n_arms() {
            if mu.arm_of(p) == Some(a) {
                continue;
            }
            let arm_agrees = match mu.player_of(a) {
                None => true,
                Some(q) => prefs.prefers(a, p, q),
            };
            if arm_agrees && u.get(p, a) > current + eps {
                out.push((p, a));
            }
        }
    }
    out
}

pub fn is_stable(u: &UtilityMatrix, prefs: &ArmPreferences, mu: &Matching, eps: f64) -> bool {
    blocking_pairs(u, prefs, mu, eps).is_empty()
}

/// Result of a deferred-acceptance run.
#[derive(Clone, Debug, PartialEq)]
pub struct DaOutcome {
    pub matching: Matching,
    /// Number of proposals issued by each player.
    pub proposals: Vec<usize>,
}

/// Arms sorted by decreasing utility; equal utilities go to the lower index.
fn proposal_order(row: &[f64]) -> Vec<ArmId> {
    let mut order: Vec<ArmId> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    order
}

/// Player-proposing deferred acceptance on utilities `u`.
pub fn deferred_acceptance_with_stats(
    u: &UtilityMatrix,
    prefs: &ArmPreferences,
) -> Result<DaOutcome> {
    check_shapes(u, prefs)?;
    let n = u.n_players();
    let k = u.n_arms();
    let orders: Vec<Vec<ArmId>> = (0..n).map(|i| proposal_order(u.row(i))).collect();
    let mut next = vec![0usize; n];
    let mut matching = Matching::empty(n, k);
    let mut free: VecDeque<PlayerId> = (0..n).collect();
    while let Some(p) = free.pop_front() {
        let Some(&a) = orders[p].get(next[p]) else {
            continue;
        };
        next[p] += 1;
        match matching.player_of(a) {
            None => matching.assign(p, a),
            Some(q) if prefs.prefers(a, p, q) => {
                matching.assign(p, a);
                free.push_back(q);
            }
            Some(_) => free.push_front(p),
        }
    }
    Ok(DaOutcome {
        matching,
        proposals: next,
    })
}

pub fn deferred_acceptance(u: &UtilityMatrix, prefs: &ArmPreferences) -> Result<Matching> {
    deferred_acceptance_with_stats(u, prefs).map(|o| o.matching)
}

/// All `eps`-stable matchings, partial ones included.
pub fn enumerate_stable_set(
    u: &UtilityMatrix,
    prefs: &ArmPreferences,
    eps: f64,
) -> Result<Vec<Matching>> {
    check_shapes(u, prefs)?;
    let n = u.n_players();
    let k = u.n_arms();
    if n > ENUMERATION_LIMIT || k > ENUMERATION_LIMIT {
        return Err(Error::EnumerationLimit {
            n_players: n,
            n_arms: k,
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut out = Vec::new();
    let mut current = Matching::empty(n, k);
    visit(0, &mut current, u, prefs, eps, &mut out);
    Ok(out)
}

fn visit(
    p: PlayerId,
    current: &mut Matching,
    u: &UtilityMatrix,
    prefs: &ArmPreferences,
    eps: f64,
    out: &mut Vec<Matching>,
) {
    if p == current.n_players() {
        if is_stable(u, prefs, current, eps) {
            out.push(current.clone());
        }
        return;
    }
    visit(p + 1, current, u, prefs, eps, out);
    for a in 0..current.n_arms() {
        if current.player_of(a).is_none() {
            current.assign(p, a);
            visit(p + 1, current, u, prefs, eps, out);
            current.unassign(p);
        }
    }
}

/// Best utility each player attains over all `eps`-stable matchings.
///
/// With `eps = 0` and tie-free rows this is the deferred-acceptance outcome;
/// otherwise the stable set, partial matchings included, is enumerated.
/// The two agree whenever utilities are nonnegative; with negative entries
/// the shortcut keeps the complete player-optimal matching.
pub fn optimal_stable_share(
    u: &UtilityMatrix,
    prefs: &ArmPreferences,
    eps: f64,
) -> Result<Vec<f64>> {
    check_shapes(u, prefs)?;
    if eps == 0.0 && u.rows_tie_free() {
        let m = deferred_acceptance(u, prefs)?;
        return Ok((0..u.n_players()).map(|i| u.value_of(i, &m)).collect());
    }
    let set = enumerate_stable_set(u, prefs, eps)?;
    let mut share = vec![f64::NEG_INFINITY; u.n_players()];
    for m in &set {
        for (i, s) in share.iter_mut().enumerate() {
            *s = s.max(u.value_of(i, m));
        }
    }
    Ok(share)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prefs(n: usize, orders: &[&[usize]]) -> ArmPreferences {
        ArmPreferences::new(n, orders.iter().map(|o| o.to_vec()).collect()).unwrap()
    }

    #[test]
    fn single_pair_blocks_empty_matching() {
        let u = UtilityMatrix::from_rows(&[vec![0.5]]).unwrap();
        let p = ArmPreferences::identity(1, 1);
        let mu = Matching::empty(1, 1);
        assert_eq!(blocking_pairs(&u, &p, &mu, 0.0), vec![(0, 0)]);
        assert!(blocking_pairs(&u, &p, &mu, 0.6).is_empty());
    }

    #[test]
    fn da_single_player_takes_favourite() {
        let u = UtilityMatrix::from_rows(&[vec![0.3, 0.7]]).unwrap();
        let m = deferred_acceptance(&u, &ArmPreferences::identity(1, 2)).unwrap();
        assert_eq!(m.arm_of(0), Some(1));
    }

    #[test]
    fn da_two_by_two() {
        let u = UtilityMatrix::from_rows(&[vec![1.0, 0.5], vec![0.9, 0.2]]).unwrap();
        let p = prefs(2, &[&[1, 0], &[0, 1]]);
        let out = deferred_acceptance_with_stats(&u, &p).unwrap();
        assert_eq!(out.matching.assignment(), &[Some(1), Some(0)]);
        assert_eq!(out.proposals, vec![2, 1]);
    }

    #[test]
    fn da_ties_go_to_lower_arm() {
        let u = UtilityMatrix::from_rows(&[vec![0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0]]).unwrap();
        let m = deferred_acceptance(&u, &ArmPreferences::identity(2, 3)).unwrap();
        assert_eq!(m.assignment(), &[Some(0), Some(1)]);
    }

    #[test]
    fn enumeration_respects_limit() {
        let u = UtilityMatrix::zeros(9, 9);
        let err = enumerate_stable_set(&u, &ArmPreferences::identity(9, 9), 0.0).unwrap_err();
        assert!(matches!(err, Error::EnumerationLimit { .. }));
    }

    #[test]
    fn share_with_tolerance_uses_enumeration() {
        // With a large tolerance every matching is stable, so each player can
        // reach its favourite arm in some matching.
        let u = UtilityMatrix::from_rows(&[vec![0.2, 0.4], vec![0.3, 0.1]]).unwrap();
        let p = prefs(2, &[&[0, 1], &[0, 1]]);
        let share = optimal_stable_share(&u, &p, 1.0).unwrap();
        assert_eq!(share, vec![0.4, 0.3]);
        let exact = optimal_stable_share(&u, &p, 0.0).unwrap();
        assert_eq!(exact, vec![0.4, 0.3]);
    }
}
