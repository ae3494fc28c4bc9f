//! Maximum-cardinality bipartite matching by augmenting paths.

use super::{ArmId, Matching, PlayerId};
use crate::{Error, Result};

/// Maximum matching on the player/arm graph with the given edges.
///
/// Players are scanned in index order and each player's edges in the order
/// given, so the result is deterministic.
pub fn max_cardinality_matching(
    n_players: usize,
    n_arms: usize,
    edges: &[(PlayerId, ArmId)],
) -> Result<Matching> {
    let mut adj: Vec<Vec<ArmId>> = vec![Vec::new(); n_players];
    for &(p, a) in edges {
        if p >= n_players || a >= n_arms {
            return Err(Error::InvalidMatching(format!(
                "edge ({p}, {a}) outside a {n_players}x{n_arms} graph"
            )));
        }
        if !adj[p].contains(&a) {
            adj[p].push(a);
        }
    }
    let mut holder: Vec<Option<PlayerId>> = vec![None; n_arms];
    let mut seen = vec![false; n_arms];
    for p in 0..n_players {
        seen.iter_mut().for_each(|s| *s = false);
        augment(p, &adj, &mut holder, &mut seen);
    }
    let mut assignment = vec![None; n_players];
    for (a, h) in holder.iter().enumerate() {
        if let Some(p) = *h {
            assignment[p] = Some(a);
        }
    }
    Matching::new(n_arms, assignment)
}

fn augment(
    p: PlayerId,
    adj: &[Vec<ArmId>],
    holder: &mut [Option<PlayerId>],
    seen: &mut [bool],
) -> bool {
    for &a in &adj[p] {
        if seen[a] {
            continue;
        }
        seen[a] = true;
        let free = match holder[a] {
            None => true,
            Some(q) => augment(q, adj, holder, seen),
        };
        if free {
            holder[a] = Some(p);
            return true;
        }
    }
    false
}
