mod common;

use evcs_core::admm::{admm_solve, Coupling};
use evcs_core::config::{Hyperparams, StationParams};
use rand::Rng;

fn coupling() -> Coupling {
    Coupling::from_station(&StationParams::default())
}

fn tight() -> Hyperparams {
    Hyperparams {
        eps_abs: 1e-6,
        eps_rel: 1e-4,
        admm_max_iter: 5000,
        ..Hyperparams::default()
    }
}

#[test]
fn single_follower_gets_exact_budget() {
    let hp = Hyperparams::default();
    let mut rng = common::rng(1);
    let c = coupling();
    for _ in 0..20 {
        let f = common::random_follower(&mut rng, &hp, 0, 150.0);
        let budget = f.p_req / c.eff_cp;
        let st = admm_solve(&[f], &c, budget, &hp, None).unwrap();
        assert!(st.converged);
        assert!((st.p[0] - f.p_req).abs() < 0.05, "{} vs {}", st.p[0], f.p_req);
    }
}

#[test]
fn symmetric_pair_splits_evenly_tight_tolerance() {
    let hp = tight();
    let mut rng = common::rng(2);
    let c = coupling();
    let mut a = common::random_follower(&mut rng, &hp, 0, 100.0);
    a.p_req = 40.0;
    a.p_max = 80.0;
    let mut b = a;
    b.column = 1;
    let budget = 60.0 / c.eff_cp;
    let st = admm_solve(&[a, b], &c, budget, &hp, None).unwrap();
    assert!(st.converged);
    assert!((st.p[0] - st.p[1]).abs() < 1e-3, "{:?}", st.p);
    assert!((st.p[0] - 30.0).abs() < 1e-3, "{:?}", st.p);
}

#[test]
fn matches_equality_optimum_small_fleets_tight_tolerance() {
    let hp = tight();
    let c = coupling();
    let mut rng = common::rng(3);
    let mut worst = 0.0f64;
    let mut nonconv = 0;
    for case in 0..60 {
        let n = 1 + case % 3;
        let fs: Vec<_> = (0..n)
            .map(|_| {
                let col = rng.random_range(0..2);
                common::random_follower(&mut rng, &hp, col, 150.0)
            })
            .collect();
        let total = rng.random_range(0.0..=1.0) * c.max_absorbable(&fs) * c.eff_cp;
        let st = admm_solve(&fs, &c, total / c.eff_cp, &hp, None).unwrap();
        if !st.converged {
            nonconv += 1;
        }
        let (_, p_star) = common::equality_optimum(&fs, &c, total).expect("feasible by construction");
        let err = st.p.iter().zip(&p_star).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(err);
        assert!(
            err <= 0.05,
            "case {case}: admm {:?} oracle {:?} err {err}",
            st.p,
            p_star
        );
    }
    assert_eq!(nonconv, 0);
    eprintln!("worst deviation {worst:.5} kW");
}

#[test]
fn warm_start_agrees_with_cold_start_tight_tolerance() {
    let hp = tight();
    let c = coupling();
    let mut rng = common::rng(4);
    for _ in 0..20 {
        let fs: Vec<_> = (0..4)
            .map(|i| common::random_follower(&mut rng, &hp, i % 3, 120.0))
            .collect();
        let budget = 0.6 * c.max_absorbable(&fs);
        let cold = admm_solve(&fs, &c, budget, &hp, None).unwrap();
        let seed = admm_solve(&fs, &c, 0.8 * budget, &hp, None).unwrap();
        let warm = admm_solve(&fs, &c, budget, &hp, Some(&seed)).unwrap();
        assert!(cold.converged && warm.converged);
        for (a, b) in cold.p.iter().zip(&warm.p) {
            assert!((a - b).abs() <= 1e-2, "{a} vs {b}");
        }
    }
}

#[test]
fn column_cap_is_respected() {
    let hp = tight();
    let mut c = coupling();
    c.column_limit = 100.0;
    let mut rng = common::rng(5);
    let fs: Vec<_> = (0..3)
        .map(|_| {
            let mut f = common::random_follower(&mut rng, &hp, 0, 150.0);
            f.p_max = 80.0;
            f.p_req = 70.0;
            f
        })
        .collect();
    let st = admm_solve(&fs, &c, 95.0 / c.eff_cp, &hp, None).unwrap();
    let s: f64 = st.p.iter().sum();
    assert!(s <= 100.0 + 0.5, "{s}");
    let (_, p_star) = common::equality_optimum(&fs, &c, 95.0).unwrap();
    for (a, b) in st.p.iter().zip(&p_star) {
        assert!((a - b).abs() <= 0.05, "{:?} vs {:?}", st.p, p_star);
    }
}

#[test]
fn default_tolerance_meets_stopping_bound() {
    let hp = Hyperparams::default();
    let c = coupling();
    let mut rng = common::rng(6);
    for _ in 0..50 {
        let fs: Vec<_> = (0..5)
            .map(|i| common::random_follower(&mut rng, &hp, i % 3, 150.0))
            .collect();
        let budget = rng.random_range(0.1..=1.0) * c.max_absorbable(&fs);
        let st = admm_solve(&fs, &c, budget, &hp, None).unwrap();
        assert!(st.converged, "k={}", st.k);
        let (eps_pri, _) = evcs_core::admm::stopping_bounds(&st.p, st.lambda, budget, c.eff_cp, &hp);
        assert!(st.coupling_residual(&c, budget) <= eps_pri);
        assert!(st.mu_cc.iter().all(|&m| m >= 0.0) && st.rho > 0.0);
        for (p, f) in st.p.iter().zip(&fs) {
            assert!(*p >= 0.0 && *p <= f.p_max);
        }
    }
}

#[test]
fn oversized_budget_saturates_without_iterating() {
    let hp = Hyperparams::default();
    let c = coupling();
    let mut rng = common::rng(7);
    let fs: Vec<_> = (0..3)
        .map(|i| common::random_follower(&mut rng, &hp, i, 100.0))
        .collect();
    let st = admm_solve(&fs, &c, 2.0 * c.max_absorbable(&fs), &hp, None).unwrap();
    assert!(!st.converged);
    assert_eq!(st.k, 0);
    for (p, f) in st.p.iter().zip(&fs) {
        assert_eq!(*p, f.p_max);
    }
}

#[test]
fn rejects_bad_inputs() {
    let hp = Hyperparams::default();
    let c = coupling();
    assert!(admm_solve(&[], &c, 1.0, &hp, None).is_err());
    let mut rng = common::rng(8);
    let mut f = common::random_follower(&mut rng, &hp, 0, 100.0);
    assert!(admm_solve(&[f], &c, -1.0, &hp, None).is_err());
    f.column = 99;
    assert!(admm_solve(&[f], &c, 1.0, &hp, None).is_err());
}
