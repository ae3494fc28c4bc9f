use matchbandits_core::market::{
    blocking_pairs, deferred_acceptance, enumerate_stable_set, is_stable, max_cardinality_matching,
    optimal_stable_share, ArmPreferences, Matching, UtilityMatrix,
};
use matchbandits_core::oracle::{approx_oracle, replication_for, OracleConfig};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_prefs(n: usize, k: usize, rng: &mut ChaCha8Rng) -> ArmPreferences {
    ArmPreferences::random(n, k, rng)
}

fn random_u(n: usize, k: usize, rng: &mut ChaCha8Rng) -> UtilityMatrix {
    UtilityMatrix::new(n, k, (0..n * k).map(|_| rng.gen::<f64>()).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn da_is_player_optimal(seed in any::<u64>(), n in 2usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_u(n, n, &mut rng);
        let prefs = random_prefs(n, n, &mut rng);
        let m = deferred_acceptance(&u, &prefs).unwrap();
        prop_assert!(blocking_pairs(&u, &prefs, &m, 0.0).is_empty());
        let stable = enumerate_stable_set(&u, &prefs, 0.0).unwrap();
        prop_assert!(stable.contains(&m));
        for s in &stable {
            for i in 0..n {
                prop_assert!(u.value_of(i, s) <= u.value_of(i, &m));
            }
        }
    }

    #[test]
    fn da_with_more_arms_is_stable(seed in any::<u64>(), n in 1usize..=4, extra in 0usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = n + extra;
        let u = random_u(n, k, &mut rng);
        let prefs = random_prefs(n, k, &mut rng);
        let m = deferred_acceptance(&u, &prefs).unwrap();
        prop_assert!(is_stable(&u, &prefs, &m, 0.0));
        prop_assert_eq!(m.size(), n);
    }

    #[test]
    fn oracle_meets_its_guarantee(seed in any::<u64>(), n in 2usize..=4, tol_idx in 0usize..3) {
        let tol = [0.0, 0.05, 0.2][tol_idx];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_u(n, n, &mut rng);
        let prefs = random_prefs(n, n, &mut rng);
        let cfg = OracleConfig::for_players(n, tol);
        let d = approx_oracle(&u, &prefs, cfg).unwrap();
        let m = replication_for(n);
        prop_assert_eq!(d.len(), m);
        let share = optimal_stable_share(&u, &prefs, tol).unwrap();
        let expected = d.expected_utilities(&u);
        for i in 0..n {
            prop_assert!(expected[i] >= share[i] / m as f64 - tol - 1e-12);
            let copies = d.support().iter().filter(|(mu, _)| mu.arm_of(i).is_some()).count();
            prop_assert_eq!(copies, 1);
        }
    }

    #[test]
    fn tolerance_collapses_on_separated_rows(seed in any::<u64>(), n in 2usize..=4, eps in 0.01f64..0.1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let step = 2.0 * eps;
        let mut values = Vec::new();
        for _ in 0..n {
            let mut levels: Vec<usize> = (1..=n).collect();
            levels.shuffle(&mut rng);
            values.extend(levels.iter().map(|&l| l as f64 * step + rng.gen::<f64>() * 0.5 * eps));
        }
        let u = UtilityMatrix::new(n, n, values).unwrap();
        let prefs = random_prefs(n, n, &mut rng);
        let a = enumerate_stable_set(&u, &prefs, eps).unwrap();
        let b = enumerate_stable_set(&u, &prefs, 0.0).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn perturbation_keeps_relaxed_stability(
        seed in any::<u64>(),
        n in 2usize..=4,
        gamma in 0.0f64..0.2,
        eps in 0.0f64..0.2,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u1 = random_u(n, n, &mut rng);
        let values = u1.values().iter().map(|v| v + gamma * (2.0 * rng.gen::<f64>() - 1.0)).collect();
        let u2 = UtilityMatrix::new(n, n, values).unwrap();
        let prefs = random_prefs(n, n, &mut rng);
        for m in enumerate_stable_set(&u1, &prefs, eps).unwrap() {
            prop_assert!(is_stable(&u2, &prefs, &m, 2.0 * gamma + eps + 1e-12));
        }
    }

    #[test]
    fn max_matching_size_matches_brute_force(seed in any::<u64>(), n in 1usize..=5, k in 1usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let edges: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (0..k).map(move |j| (i, j)))
            .filter(|_| rng.gen::<f64>() < 0.4)
            .collect();
        let m = max_cardinality_matching(n, k, &edges).unwrap();
        for i in 0..n {
            if let Some(a) = m.arm_of(i) {
                prop_assert!(edges.contains(&(i, a)));
            }
        }
        prop_assert_eq!(m.size(), brute_max(n, &edges, 0, &mut Matching::empty(n, k)));
    }
}

fn brute_max(n: usize, edges: &[(usize, usize)], p: usize, cur: &mut Matching) -> usize {
    if p == n {
        return cur.size();
    }
    let mut best = brute_max(n, edges, p + 1, cur);
    for &(i, a) in edges {
        if i == p && cur.player_of(a).is_none() {
            cur.assign(p, a);
            best = best.max(brute_max(n, edges, p + 1, cur));
            cur.unassign(p);
        }
    }
    best
}

#[test]
fn oracle_without_tolerance_covers_stable_share() {
    // Without tolerance the copy with the player's DA arm is the
    // player-optimal one, so every matched arm is worth at least U*.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let u = random_u(3, 3, &mut rng);
        let prefs = random_prefs(3, 3, &mut rng);
        let share = optimal_stable_share(&u, &prefs, 0.0).unwrap();
        let d = approx_oracle(&u, &prefs, OracleConfig::for_players(3, 0.0)).unwrap();
        for (mu, _) in d.support() {
            for (i, s) in share.iter().enumerate() {
                if let Some(a) = mu.arm_of(i) {
                    assert!(u.get(i, a) >= s - 1e-12);
                }
            }
        }
    }
}
