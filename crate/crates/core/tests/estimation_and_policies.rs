use approx::assert_relative_eq;
use matchbandits_core::environments::{stream_rng, StochasticEnvSpec, Stream};
use matchbandits_core::estimation::{confidence_radius, GramState, RadiusParams};
use matchbandits_core::market::{
    deferred_acceptance, ArmPreferences, Bounds, ContextSet, MarketInstance, UtilityMatrix,
};
use matchbandits_core::oracle::replication_for;
use matchbandits_core::policies::{
    AdecoParams, AdecoPolicy, BarbParams, BarbPolicy, BatchedEtcParams, BatchedEtcPolicy,
    EtcParams, EtcPolicy, LearnerConfig, Phase, Policy, PolicyStep,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BOUNDS: Bounds = Bounds {
    b_x: 1.0,
    b_theta: 0.5,
    noise_r: 1.0,
};

fn config(n: usize, k: usize, d: usize, horizon: u64) -> LearnerConfig {
    LearnerConfig {
        n_players: n,
        n_arms: k,
        dim: d,
        horizon,
        ridge: 1.0,
        bounds: BOUNDS,
        delta: None,
        eta: None,
    }
}

/// Gram states whose estimates equal `theta` and whose norms are negligible.
fn planted(theta: &[DVector<f64>]) -> Vec<GramState> {
    let scale = 1e12;
    theta
        .iter()
        .map(|t| {
            let d = t.len();
            GramState::from_parts(1.0, DMatrix::identity(d, d) * scale, t * scale).unwrap()
        })
        .collect()
}

fn unit_contexts(k: usize, d: usize) -> ContextSet {
    ContextSet::new(
        d,
        (0..k)
            .map(|j| DVector::from_fn(d, |r, _| if r == j % d { 1.0 } else { 0.0 }))
            .collect(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ridge_estimate_matches_direct_solve(seed in any::<u64>(), d in 1usize..=4, n in 0usize..30, ridge in 0.1f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = GramState::new(d, ridge).unwrap();
        let mut v = DMatrix::<f64>::identity(d, d) * ridge;
        let mut b = DVector::<f64>::zeros(d);
        for _ in 0..n {
            let x = DVector::from_fn(d, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
            let y = rng.gen::<f64>();
            g.update(&x, y).unwrap();
            v += &x * x.transpose();
            b += &x * y;
        }
        let direct = v.clone().lu().solve(&b).unwrap();
        prop_assert!((g.estimate() - &direct).amax() < 1e-9);
        let probe = DVector::from_fn(d, |_, _| rng.gen::<f64>());
        let inv = v.try_inverse().unwrap();
        let expect = (probe.dot(&(&inv * &probe))).sqrt();
        prop_assert!((g.inv_norm(&probe) - expect).abs() < 1e-9);
    }

    #[test]
    fn norms_never_grow(seed in any::<u64>(), d in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = GramState::new(d, 1.0).unwrap();
        let probe = DVector::from_fn(d, |_, _| rng.gen::<f64>());
        let mut last = g.inv_norm(&probe);
        for _ in 0..50 {
            let x = DVector::from_fn(d, |_, _| rng.gen::<f64>() - 0.5);
            g.update(&x, 0.0).unwrap();
            let now = g.inv_norm(&probe);
            prop_assert!(now <= last + 1e-12);
            last = now;
        }
    }
}

#[test]
fn radius_reference_value() {
    let eta = confidence_radius(&RadiusParams {
        horizon: 10_000,
        dim: 3,
        b_x: 1.0,
        b_theta: 1.0,
        noise_r: 1.0,
        ridge: 1.0,
        delta: 1e-8,
    })
    .unwrap();
    assert_relative_eq!(eta, 10.104_579_250_7, epsilon = 1e-9);
}

fn run(
    policy: &mut dyn Policy,
    market: &MarketInstance,
    horizon: u64,
    seed: u64,
) -> Vec<PolicyStep> {
    let env = StochasticEnvSpec::normalized_gaussian(market.dim, market.n_arms);
    let mut ctx_rng = stream_rng(seed, Stream::Contexts);
    let mut noise_rng = stream_rng(seed, Stream::Noise);
    let mut steps = Vec::new();
    for _ in 0..horizon {
        let ctx = env.sample(&mut ctx_rng);
        let u = market.utilities(&ctx).unwrap();
        let step = policy.act(&ctx).unwrap();
        assert!(step.matching.size() <= market.n_players);
        let rewards: Vec<Option<f64>> = (0..market.n_players)
            .map(|i| {
                let z: f64 = noise_rng.sample(rand_distr::StandardNormal);
                step.matching.arm_of(i).map(|a| u.get(i, a) + 0.1 * z)
            })
            .collect();
        policy.observe(&ctx, &step, &rewards).unwrap();
        steps.push(step);
    }
    steps
}

fn market(seed: u64) -> MarketInstance {
    MarketInstance::random_uniform_theta(4, 4, 3, BOUNDS, &mut stream_rng(seed, Stream::Market))
        .unwrap()
}

fn all_policies(m: &MarketInstance, horizon: u64, seed: u64) -> Vec<Box<dyn Policy>> {
    let c = config(m.n_players, m.n_arms, m.dim, horizon);
    let p = m.arm_prefs.clone();
    vec![
        Box::new(
            EtcPolicy::new(
                c,
                EtcParams {
                    explore_rounds: 50,
                    ..Default::default()
                },
                p.clone(),
            )
            .unwrap(),
        ),
        Box::new(BatchedEtcPolicy::new(c, BatchedEtcParams::default(), p.clone()).unwrap()),
        Box::new(BarbPolicy::new(c, BarbParams::default(), p.clone()).unwrap()),
        Box::new(
            AdecoPolicy::new(
                c,
                AdecoParams::default(),
                p,
                stream_rng(seed, Stream::Oracle),
            )
            .unwrap(),
        ),
    ]
}

#[test]
fn policies_are_deterministic() {
    let m = market(11);
    let a: Vec<_> = all_policies(&m, 400, 5)
        .iter_mut()
        .map(|p| run(p.as_mut(), &m, 400, 5))
        .collect();
    let b: Vec<_> = all_policies(&m, 400, 5)
        .iter_mut()
        .map(|p| run(p.as_mut(), &m, 400, 5))
        .collect();
    assert_eq!(a, b);
}

#[test]
fn barb_first_round_explores() {
    let mut c = config(4, 4, 3, 10_000);
    c.bounds.b_theta = 1.0;
    let mut p = BarbPolicy::new(c, BarbParams::default(), ArmPreferences::identity(4, 4)).unwrap();
    assert_relative_eq!(p.threshold(), 0.5 / 10.104_579_250_7, epsilon = 1e-9);
    let step = p.act(&unit_contexts(4, 3)).unwrap();
    assert_eq!(step.phase, Phase::Explore);
}

#[test]
fn barb_exploits_with_known_parameters() {
    let theta = vec![
        DVector::from_vec(vec![0.4, 0.1, 0.0]),
        DVector::from_vec(vec![0.0, 0.3, 0.2]),
    ];
    let prefs = ArmPreferences::new(2, vec![vec![1, 0], vec![0, 1], vec![1, 0]]).unwrap();
    let ctx = unit_contexts(3, 3);
    let mut p = BarbPolicy::new(
        config(2, 3, 3, 10_000),
        BarbParams {
            initial_gap: 0.02,
            ..Default::default()
        },
        prefs.clone(),
    )
    .unwrap();
    p.set_grams(planted(&theta)).unwrap();
    let step = p.act(&ctx).unwrap();
    assert_eq!(step.phase, Phase::ExploitGs);
    let u = UtilityMatrix::from_rows(&[vec![0.4, 0.1, 0.0], vec![0.0, 0.3, 0.2]]).unwrap();
    assert_eq!(step.matching, deferred_acceptance(&u, &prefs).unwrap());
    p.observe(&ctx, &step, &[Some(0.0), Some(0.0)]).unwrap();
    assert_eq!(p.overlap_counter(), 0);
}

#[test]
fn barb_seventh_overlap_advances_batch() {
    let theta = vec![DVector::from_vec(vec![0.3, 0.3, 0.0])];
    let ctx = unit_contexts(3, 3);
    let mut p = BarbPolicy::new(
        config(1, 3, 3, 10_000),
        BarbParams::default(),
        ArmPreferences::identity(1, 3),
    )
    .unwrap();
    for round in 1..=7 {
        p.set_grams(planted(&theta)).unwrap();
        let step = p.act(&ctx).unwrap();
        assert_eq!(step.phase, Phase::ExploitGs);
        p.observe(&ctx, &step, &[Some(0.3)]).unwrap();
        if round < 7 {
            assert_eq!((p.batch(), p.overlap_counter()), (1, round));
        }
    }
    assert_eq!(p.batch(), 2);
    assert_eq!(p.overlap_counter(), 0);
    assert_relative_eq!(p.gap(), 0.5 / 2f64.sqrt(), epsilon = 1e-15);
    assert_eq!(p.grams()[0].samples(), 0);
    assert_eq!(p.batches()[0].overlaps, 7);
}

#[test]
fn adeco_branches() {
    let ctx = unit_contexts(3, 3);
    let prefs = ArmPreferences::identity(2, 3);
    let params = AdecoParams {
        gap: Some(0.2),
        tolerance: Some(0.1),
        ..Default::default()
    };
    let new = || {
        AdecoPolicy::new(
            config(2, 3, 3, 1000),
            params,
            prefs.clone(),
            stream_rng(1, Stream::Oracle),
        )
        .unwrap()
    };

    let mut fresh = new();
    assert_eq!(fresh.act(&ctx).unwrap().phase, Phase::Explore);

    let mut separated = new();
    let theta = vec![
        DVector::from_vec(vec![0.45, 0.2, 0.0]),
        DVector::from_vec(vec![0.0, 0.2, 0.4]),
    ];
    separated.set_grams(planted(&theta)).unwrap();
    let step = separated.act(&ctx).unwrap();
    assert_eq!(step.phase, Phase::ExploitGs);
    assert_eq!(step.matching.assignment(), &[Some(0), Some(2)]);

    let mut tied = new();
    let theta = vec![
        DVector::from_vec(vec![0.3, 0.3, 0.0]),
        DVector::from_vec(vec![0.0, 0.2, 0.4]),
    ];
    tied.set_grams(planted(&theta)).unwrap();
    let step = tied.act(&ctx).unwrap();
    assert_eq!(step.phase, Phase::ExploitOracle);
    assert_eq!(step.diagnostics.support_size, Some(replication_for(2)));
}

#[test]
fn etc_without_exploration_breaks_ties_by_index() {
    let mut p = EtcPolicy::new(
        config(3, 3, 2, 10),
        EtcParams {
            explore_rounds: 0,
            ..Default::default()
        },
        ArmPreferences::identity(3, 3),
    )
    .unwrap();
    let step = p.act(&unit_contexts(3, 2)).unwrap();
    assert_eq!(step.phase, Phase::Commit);
    assert_eq!(step.matching.assignment(), &[Some(0), Some(1), Some(2)]);
}

#[test]
fn batched_etc_width_and_threshold() {
    let c = config(1, 3, 3, 10_000);
    let mut p = BatchedEtcPolicy::new(
        c,
        BatchedEtcParams::default(),
        ArmPreferences::identity(1, 3),
    )
    .unwrap();
    assert_relative_eq!(p.width(), 0.303_485_6, epsilon = 1e-6);
    let ctx = unit_contexts(3, 3);
    // Contexts where the single player is indifferent between two arms, so
    // every exploit round overlaps.
    let tie = ContextSet::from_rows(&[
        vec![0.0, 0.0, 1.0],
        vec![0.0, 0.0, 1.0],
        vec![0.0, 0.0, 0.0],
    ])
    .unwrap();
    for _ in 0..100 {
        let s = p.act(&ctx).unwrap();
        assert_eq!(s.phase, Phase::Explore);
        p.observe(&ctx, &s, &[Some(0.0)]).unwrap();
    }
    for n in 1..=19 {
        let s = p.act(&tie).unwrap();
        assert_eq!(s.phase, Phase::ExploitGs);
        p.observe(&tie, &s, &[Some(0.0)]).unwrap();
        if n < 19 {
            assert_eq!(p.explore_len(), 100);
        }
    }
    assert_eq!(p.explore_len(), 200);
    assert_eq!(p.batches().len(), 2);
}

#[test]
fn matchings_stay_within_market() {
    let m = market(2);
    for mut p in all_policies(&m, 300, 9) {
        let steps = run(p.as_mut(), &m, 300, 9);
        let counts = p.phase_counts();
        assert_eq!(counts.iter().sum::<u64>(), 300);
        for s in steps {
            assert!(s.matching.size() <= 4);
            assert!(s.diagnostics.max_inv_norm.iter().all(|v| v.is_finite()));
        }
    }
}
