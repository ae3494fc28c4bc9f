//! Brute-force verification of the approximation oracle.

use matchbandits_core::market::{optimal_stable_share, ArmPreferences, UtilityMatrix};
use matchbandits_core::oracle::{approx_oracle, replication_for, OracleConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub const ORACLE_TOLERANCES: [f64; 3] = [0.0, 0.05, 0.2];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleViolation {
    pub instance: usize,
    pub n_players: usize,
    pub tolerance: f64,
    pub player: usize,
    pub expected: f64,
    pub required: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct OracleCheckReport {
    pub instances: usize,
    /// Players checked across all instances.
    pub checks: usize,
    /// Smallest slack `E[U_D(p)] - (U*_eps(p)/m - eps)` seen.
    pub min_slack: f64,
    pub violations: Vec<OracleViolation>,
    /// Instances whose support was not `m` copies covering each player once.
    pub malformed: usize,
}

/// Checks `E[U_D(p)] >= U*_eps(p) / m - eps` exactly over the support of the
/// oracle on `instances` random square markets with `N` in `{2, 3, 4}`,
/// cycling through the tolerances in [`ORACLE_TOLERANCES`].
pub fn oracle_check(instances: usize, seed: u64) -> OracleCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleCheckReport {
        instances,
        min_slack: f64::INFINITY,
        ..Default::default()
    };
    for k in 0..instances {
        let n = 2 + k % 3;
        let tol = ORACLE_TOLERANCES[(k / 3) % ORACLE_TOLERANCES.len()];
        let u = UtilityMatrix::new(n, n, (0..n * n).map(|_| rng.gen::<f64>()).collect())
            .expect("finite utilities");
        let prefs = ArmPreferences::random(n, n, &mut rng);
        let m = replication_for(n);
        let dist = approx_oracle(&u, &prefs, OracleConfig::for_players(n, tol))
            .expect("valid oracle input");
        let share = optimal_stable_share(&u, &prefs, tol).expect("small market");
        let expected = dist.expected_utilities(&u);
        let well_formed = dist.len() == m
            && (0..n).all(|i| {
                dist.support()
                    .iter()
                    .filter(|(mu, _)| mu.arm_of(i).is_some())
                    .count()
                    == 1
            });
        if !well_formed {
            report.malformed += 1;
        }
        for i in 0..n {
            let required = share[i] / m as f64 - tol;
            let slack = expected[i] - required;
            report.checks += 1;
            report.min_slack = report.min_slack.min(slack);
            if slack < -1e-12 {
                report.violations.push(OracleViolation {
                    instance: k,
                    n_players: n,
                    tolerance: tol,
                    player: i + 1,
                    expected: expected[i],
                    required,
                });
            }
        }
    }
    report
}

impl OracleCheckReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.malformed == 0
    }
}
