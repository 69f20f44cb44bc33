mod common;

use common::{check_trace, night_scenario, relaxed_scenario, scarcity_scenario, session};
use evcs_core::config::Config;
use evcs_core::controller::Method;
use evcs_core::report::compare;
use evcs_core::scenario::{generate_synthetic, heuristic_schedule, SyntheticConfig};
use evcs_core::sim::{simulate, SimulationTrace};
use evcs_core::Error;
use proptest::prelude::*;

#[test]
fn empty_station_tracks_the_battery_plan_only() {
    let config = Config::default();
    let scenario = night_scenario(30, Vec::new(), &config.station);
    let schedule = heuristic_schedule(&scenario, &config).unwrap();
    for m in Method::ALL {
        let t = simulate(&scenario, &schedule, m, &config).unwrap();
        check_trace(&t, &scenario, &config);
        assert!(t.evs.is_empty() && t.timing.is_empty());
        assert!(t.station.iter().all(|r| r.c_delivered == 0.0 && r.n_connected == 0));
    }
}

#[test]
fn invariants_hold_for_every_method_on_a_synthetic_day() {
    let config = Config::default();
    let scenario = generate_synthetic(21, &SyntheticConfig::default(), &config).unwrap();
    let schedule = heuristic_schedule(&scenario, &config).unwrap();
    for m in Method::ALL {
        let t = simulate(&scenario, &schedule, m, &config).unwrap();
        check_trace(&t, &scenario, &config);
        if m != Method::Uncontrolled {
            assert!(t.station.iter().all(|r| r.coupling_violation == 0.0), "{m}");
        }
    }
}

#[test]
fn generous_budget_charges_everyone_fully() {
    let mut config = Config::default();
    config.options.budget_factor = 3.0;
    let scenario = relaxed_scenario(&config.station);
    let schedule = heuristic_schedule(&scenario, &config).unwrap();
    for m in Method::ALL {
        let t = simulate(&scenario, &schedule, m, &config).unwrap();
        check_trace(&t, &scenario, &config);
        for (s, summary) in scenario.sessions.iter().zip(&t.sessions) {
            let short = s.energy_kwh - summary.energy_delivered;
            assert!((0.0..0.01).contains(&short), "{m}: session {} short by {short}", s.id);
        }
    }
}

#[test]
fn scarcity_overloads_the_grid_only_without_control() {
    let config = Config::default();
    let scenario = scarcity_scenario(&config.station);
    let schedule = heuristic_schedule(&scenario, &config).unwrap();
    let un = simulate(&scenario, &schedule, Method::Uncontrolled, &config).unwrap();
    check_trace(&un, &scenario, &config);
    assert!(un.station.iter().any(|r| r.gcp_violation > 0.0));
    for m in [Method::SgAdmm, Method::Admm, Method::Centralized] {
        let t = simulate(&scenario, &schedule, m, &config).unwrap();
        check_trace(&t, &scenario, &config);
        assert!(t.station.iter().all(|r| r.coupling_violation == 0.0), "{m}");
        assert!(t.station.iter().all(|r| r.gcp_violation == 0.0), "{m}");
    }
}

#[test]
fn sg_incentives_stay_within_cap() {
    let mut config = Config::default();
    config.options.incentive_cap = 0.02;
    let scenario = scarcity_scenario(&config.station);
    let schedule = heuristic_schedule(&scenario, &config).unwrap();
    for m in [Method::SgAdmm, Method::Centralized] {
        let t = simulate(&scenario, &schedule, m, &config).unwrap();
        assert!(t.evs.iter().all(|e| (0.0..=0.02).contains(&e.theta)), "{m}");
        assert!(
            t.evs.iter().any(|e| e.theta > 0.0),
            "{m}: scarcity should cost incentives"
        );
    }
}

#[test]
fn misaligned_schedule_is_rejected() {
    let config = Config::default();
    let scenario = relaxed_scenario(&config.station);
    let mut schedule = heuristic_schedule(&scenario, &config).unwrap();
    schedule.slices.pop();
    assert!(matches!(
        simulate(&scenario, &schedule, Method::Admm, &config),
        Err(Error::LengthMismatch { .. })
    ));
}

#[test]
fn compare_output_is_reproducible() {
    let config = Config::default();
    let scenario = generate_synthetic(8, &SyntheticConfig::default(), &config).unwrap();
    let schedule = heuristic_schedule(&scenario, &config).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    compare(&scenario, &schedule, &config, &Method::ALL, a.path()).unwrap();
    compare(&scenario, &schedule, &config, &Method::ALL, b.path()).unwrap();
    for m in Method::ALL {
        for name in [format!("trace_{m}.csv"), format!("evs_{m}.csv")] {
            let x = std::fs::read(a.path().join(&name)).unwrap();
            let y = std::fs::read(b.path().join(&name)).unwrap();
            assert!(x == y, "{name} differs");
        }
    }
    for name in ["summary.json", "schedule.csv", "extra_time.csv", "timing.csv"] {
        assert!(a.path().join(name).exists(), "{name}");
    }
    let records = SimulationTrace::read_station_csv(&a.path().join("trace_admm.csv")).unwrap();
    assert_eq!(records.len(), 1440);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn random_small_stations_keep_invariants(
        seed in 0u64..1000,
        n in 1usize..12,
        budget in 0.3f64..1.5,
    ) {
        let mut config = Config::default();
        config.options.budget_factor = budget;
        let mut rng = common::rng(seed);
        use rand::Rng;
        let sessions = (0..n as u32)
            .map(|i| {
                let cap = [40.0, 60.0, 100.0][rng.random_range(0..3)];
                let soc = rng.random_range(0.05..0.7);
                let arrival = rng.random_range(0..40);
                let stay = rng.random_range(5..50);
                session(i + 1, arrival, arrival + stay, cap, soc, cap * (0.95 - soc) * rng.random_range(0.2..1.0))
            })
            .collect();
        let scenario = night_scenario(90, sessions, &config.station);
        let schedule = heuristic_schedule(&scenario, &config).unwrap();
        for m in Method::ALL {
            let t = simulate(&scenario, &schedule, m, &config).unwrap();
            check_trace(&t, &scenario, &config);
        }
    }
}
