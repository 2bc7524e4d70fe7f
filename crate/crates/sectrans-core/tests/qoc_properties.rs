use proptest::prelude::*;
use sectrans_core::model::AuthPolicy;
use sectrans_core::qoc_sim::{estimate_qoc_bound, simulate_closed_loop, AttackStrategy, DetectorConfig, PlantModel};

/// Discretized double integrator. The residual energy is normalized by the
/// noise covariance, so a threshold of 40 is practically never crossed by noise
/// alone within the short horizons used here.
fn double_integrator(noise: f64, window: usize) -> PlantModel {
    PlantModel {
        plant_id: "di".into(),
        a: vec![vec![1.0, 0.1], vec![0.0, 1.0]],
        b: vec![vec![0.005], vec![0.1]],
        c: vec![vec![1.0, 0.0]],
        process_noise: vec![vec![noise, 0.0], vec![0.0, noise]],
        measurement_noise: vec![vec![noise]],
        observer_gain: vec![vec![1.2], vec![3.0]],
        feedback_gain: vec![vec![10.0, 5.0]],
        detector: DetectorConfig { window, threshold: 40.0 },
    }
}

#[test]
fn estimates_grow_with_the_authentication_distance() {
    for noise in [0.0, 1e-6] {
        for f in 1..=2u32 {
            let p = double_integrator(noise, 1);
            // paired seeds share the noise path; what remains is its own swing
            let slack = simulate_closed_loop(&p, None, &AttackStrategy::None, 300, 17).unwrap().max_error();
            let mut last = 0.0;
            for l in f..=6 {
                let e = estimate_qoc_bound(&p, l, f, 1, 300, 17).unwrap();
                assert!(e >= last - slack, "noise {noise}, f {f}, l {l}: {e} < {last}");
                last = e;
            }
        }
    }
}

#[test]
fn full_authentication_equals_the_attack_free_level() {
    let p = double_integrator(1e-4, 3);
    let clean = simulate_closed_loop(&p, Some(&AuthPolicy::new(0, 1, 1)), &AttackStrategy::None, 200, 3).unwrap().max_error();
    assert_eq!(estimate_qoc_bound(&p, 1, 1, 5, 200, 3).unwrap(), clean);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn attackers_respect_the_zero_pattern_and_stay_silent(
        l in 1u32..=6,
        f_raw in 1u32..=6,
        s_raw in 0u32..=5,
        window in 1usize..=4,
        greedy in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let f = f_raw.min(l);
        let s = s_raw % (l - f + 1);
        let policy = AuthPolicy::new(s, f, l);
        let p = double_integrator(0.0, window);
        let strategy = if greedy {
            AttackStrategy::Greedy { margin: 0.99 }
        } else {
            AttackStrategy::Random { margin: 0.99, seed: seed ^ 1 }
        };
        let t = simulate_closed_loop(&p, Some(&policy), &strategy, 60, seed).unwrap();
        for k in 0..60 {
            let auth = k >= s as usize && (k - s as usize) % (l as usize) < f as usize;
            prop_assert_eq!(t.authenticated[k], auth);
            if auth {
                prop_assert!(t.attack[k].iter().all(|&a| a == 0.0));
            } else {
                prop_assert!(!t.alarms[k], "alarm on attacked step {}", k);
            }
        }
        let again = simulate_closed_loop(&p, Some(&policy), &strategy, 60, seed).unwrap();
        prop_assert_eq!(t, again);
    }
}
