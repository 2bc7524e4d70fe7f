use std::collections::BTreeMap;

use proptest::prelude::*;
use sectrans_core::model::{Resource, SystemModel, TaskKind};
use sectrans_core::workload_gen::{generate, realized_utilization, GenError, GenSpec, BUS_SHARES, ECU_SHARES};

const TICKS_PER_MS: i64 = 10_000;

fn shares<'a>(periods: impl Iterator<Item = &'a i64>) -> BTreeMap<i64, f64> {
    let mut counts = BTreeMap::new();
    let mut n = 0.0;
    for p in periods {
        *counts.entry(p / TICKS_PER_MS).or_insert(0.0) += 1.0;
        n += 1.0;
    }
    counts.values_mut().for_each(|c| *c /= n);
    counts
}

fn ecu_periods(sys: &SystemModel) -> Vec<i64> {
    sys.ecus.iter().flat_map(|e| sys.tasks_on(Resource::Ecu(e.id))).map(|t| t.p).collect()
}

#[test]
fn thousand_ecu_tasks_follow_the_period_shares() {
    let spec = GenSpec { n_transactions: 125, ecu_count: 10, seed: 11, ..GenSpec::default() };
    let sys = generate(&spec).unwrap();
    let periods = ecu_periods(&sys);
    assert_eq!(periods.len(), 1000);
    let got = shares(periods.iter());
    for (p, want) in ECU_SHARES {
        let have = got.get(&p).copied().unwrap_or(0.0);
        assert!((have - want).abs() <= 0.05, "{p} ms: {have} vs {want}");
    }
    let bus: Vec<i64> = sys.bus_messages().iter().map(|t| t.p).collect();
    let got = shares(bus.iter());
    assert!(!got.contains_key(&1000));
    for (p, want) in BUS_SHARES {
        let have = got.get(&p).copied().unwrap_or(0.0);
        assert!((have - want).abs() <= 0.05, "bus {p} ms: {have} vs {want}");
    }
}

#[test]
fn same_seed_same_system() {
    let spec = GenSpec { n_transactions: 8, seed: 7, ..GenSpec::default() };
    let a = serde_json_like(&generate(&spec).unwrap());
    let b = serde_json_like(&generate(&spec).unwrap());
    assert_eq!(a, b);
    let c = serde_json_like(&generate(&GenSpec { seed: 8, ..spec }).unwrap());
    assert_ne!(a, c);
}

/// Field-by-field rendering, so equality covers every generated value.
fn serde_json_like(sys: &SystemModel) -> String {
    format!("{sys:?}")
}

#[test]
fn message_load_beyond_the_target_is_unreachable() {
    let spec = GenSpec {
        n_transactions: 8,
        target_bus_utilization: 0.05,
        bus_rate: Some(125_000),
        seed: 3,
        ..GenSpec::default()
    };
    assert!(matches!(generate(&spec), Err(GenError::Unreachable(_))));
}

#[test]
fn out_of_range_settings_are_rejected() {
    for spec in [
        GenSpec { qoc_share: 0.6, ..GenSpec::default() },
        GenSpec { target_ecu_utilization: 1.2, ..GenSpec::default() },
        GenSpec { l_range: (3, 2), ..GenSpec::default() },
        GenSpec { n_transactions: 0, ..GenSpec::default() },
    ] {
        assert!(matches!(generate(&spec), Err(GenError::InvalidSpec(_))));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_systems_are_valid_and_hit_their_targets(
        n in 1usize..=12,
        ecus in 2usize..=6,
        u_ecu in 0.3f64..=0.8,
        u_bus in 0.3f64..=0.8,
        fixed_rate in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let spec = GenSpec {
            n_transactions: n,
            ecu_count: ecus,
            target_ecu_utilization: u_ecu,
            target_bus_utilization: u_bus,
            bus_rate: fixed_rate.then_some(1_000_000),
            seed,
            ..GenSpec::default()
        };
        let sys = match generate(&spec) {
            Ok(sys) => sys,
            Err(GenError::Unreachable(_)) if fixed_rate => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
        };
        let report = sys.validate();
        prop_assert!(report.is_valid(), "{:?}", report);
        prop_assert_eq!(sys.transactions.len(), n);
        for tx in &sys.transactions {
            prop_assert!(tx.policy.f >= 1 && tx.policy.f <= tx.policy.l && tx.policy.l <= 5 && tx.policy.f <= 3);
            prop_assert!(tx.tasks().iter().all(|t| t.phi.is_none() && t.d.is_none()));
        }
        prop_assert!(sys.background.iter().all(|t| t.kind == TaskKind::Background));

        let (ecu_u, bus_u) = realized_utilization(&sys);
        for u in ecu_u {
            prop_assert!((u - u_ecu).abs() <= 0.02 * u_ecu, "ECU {} vs {}", u, u_ecu);
        }
        prop_assert!((bus_u - u_bus).abs() <= 0.02 * u_bus, "bus {} vs {}", bus_u, u_bus);
    }
}
