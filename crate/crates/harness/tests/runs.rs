use std::path::Path;

use matchbandits::config::{Algorithm, ExperimentConfig, PolicyEntry};
use matchbandits::figures::{fig2_config, FigureOptions};
use matchbandits::runner::{checkpoints, prepare, run_experiment, run_replica};

fn small_config() -> ExperimentConfig {
    let mut c = fig2_config(&FigureOptions {
        horizon: 400,
        replicas: 4,
        seed: 3,
        ..Default::default()
    });
    c.curve_points = 40;
    c.policies.push(PolicyEntry::new(Algorithm::adeco()));
    c
}

#[test]
fn parallel_matches_serial() {
    let prep = prepare(small_config(), Path::new(".")).unwrap();
    let serial: Vec<_> = (0..prep.config.replicas)
        .map(|r| run_replica(&prep, r).unwrap())
        .collect();
    let exp = run_experiment(prep).unwrap();
    assert_eq!(exp.replicas, serial);
}

#[test]
fn replicas_share_the_market_but_not_the_draws() {
    let exp = run_experiment(prepare(small_config(), Path::new(".")).unwrap()).unwrap();
    let seeds: Vec<u64> = exp.replicas.iter().map(|r| r.seed).collect();
    assert_eq!(seeds, [3, 4, 5, 6]);
    let finals: Vec<f64> = exp.runs(0).map(|r| r.final_max_regret()).collect();
    assert!(finals.windows(2).any(|w| w[0] != w[1]));
}

#[test]
fn runs_cover_every_round() {
    let exp = run_experiment(prepare(small_config(), Path::new(".")).unwrap()).unwrap();
    for rep in &exp.replicas {
        for run in &rep.runs {
            assert!(run.ok(), "{:?}", run.failure);
            assert_eq!(run.phase_counts.iter().sum::<u64>(), 400);
            assert_eq!(run.regret.len(), 40 * 4);
            let last = &run.regret[39 * 4..];
            assert_eq!(last, run.final_regret.as_slice());
        }
    }
}

#[test]
fn checkpoints_end_at_horizon() {
    assert_eq!(checkpoints(10, 4), vec![3, 5, 8, 10]);
    assert_eq!(checkpoints(3, 10), vec![1, 2, 3]);
    assert_eq!(checkpoints(1, 1000), vec![1]);
}
