//! Independent reference solvers used by the integration and acceptance tests.
#![allow(dead_code)]

use chrono::NaiveDate;
use evcs_core::admm::Coupling;
use evcs_core::config::{Config, Hyperparams, StationParams};
use evcs_core::curve::StressFunction;
use evcs_core::follower::FollowerProblem;
use evcs_core::forecast::Site;
use evcs_core::scenario::{assign_plugs, Scenario};
use evcs_core::sim::{EvRecord, SimulationTrace, StationRecord};
use evcs_core::types::EvSession;
use evcs_core::types::ScheduleSlice;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Follower with every field drawn at random; `p_req <= p_max <= p_ref`.
pub fn random_follower(rng: &mut ChaCha8Rng, hp: &Hyperparams, column: usize, p_top: f64) -> FollowerProblem {
    let p_ref = rng.random_range(0.5 * p_top..=p_top);
    let p_max = rng.random_range(0.3..=1.0) * p_ref;
    let p_req = rng.random_range(0.0..=1.0) * p_max;
    FollowerProblem {
        p_req,
        p_max,
        sf: StressFunction::new(hp, p_ref),
        shortfall_weight: hp.shortfall_weight,
        stress_weight: hp.stress_weight,
        theta: 0.0,
        dt_min: 1.0,
        column,
    }
}

fn golden(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        if b - a < 1e-9 {
            break;
        }
        let x1 = b - g * (b - a);
        let x2 = a + g * (b - a);
        if f(x1) <= f(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Minimizes a convex extended-value function on `[lo, hi]`: dense scan at
/// `step`, then golden refinement inside the bracket around the best sample.
fn scan_then_refine(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, step: f64) -> (f64, f64) {
    if hi - lo <= 1e-12 {
        return (lo, f(lo));
    }
    let n = ((hi - lo) / step).ceil().max(1.0) as usize;
    let mut best = (0usize, f64::INFINITY);
    for k in 0..=n {
        let x = (lo + k as f64 * step).min(hi);
        let v = f(x);
        if v < best.1 {
            best = (k, v);
        }
    }
    let a = (lo + (best.0 as f64 - 1.0) * step).max(lo);
    let b = (lo + (best.0 as f64 + 1.0) * step).min(hi);
    let refined = golden(f, a, b);
    let at_grid = ((lo + best.0 as f64 * step).min(hi), best.1);
    if refined.1 <= at_grid.1 {
        refined
    } else {
        at_grid
    }
}

/// Minimum of `sum cost_i(p_i)` subject to `sum p_i = total`, boxes and
/// column caps, by nested one-dimensional minimization (the partial minimum
/// of a convex function is convex). Returns `None` if infeasible.
pub fn equality_optimum(followers: &[FollowerProblem], coupling: &Coupling, total: f64) -> Option<(f64, Vec<f64>)> {
    fn rec(fs: &[FollowerProblem], coupling: &Coupling, total: f64, cols: &[f64]) -> (f64, Vec<f64>) {
        let f = &fs[0];
        let room = (coupling.column_limit - cols[f.column]).max(0.0);
        let hi_box = f.p_max.min(room);
        if fs.len() == 1 {
            if total < -1e-9 || total > hi_box + 1e-9 {
                return (f64::INFINITY, Vec::new());
            }
            let p = total.clamp(0.0, hi_box);
            return (f.cost(p), vec![p]);
        }
        let with = |p: f64| {
            let mut c = cols.to_vec();
            c[f.column] += p;
            c
        };
        let h = |p: f64| f.cost(p) + rec(&fs[1..], coupling, total - p, &with(p)).0;
        let step = if fs.len() == 2 { 0.01 } else { 0.1 };
        let (p, v) = scan_then_refine(&h, 0.0, hi_box.min(total.max(0.0)), step);
        if !v.is_finite() {
            return (v, Vec::new());
        }
        let mut out = vec![p];
        out.extend(rec(&fs[1..], coupling, total - p, &with(p)).1);
        (v, out)
    }
    let (v, p) = rec(followers, coupling, total, &vec![0.0; coupling.n_columns]);
    v.is_finite().then_some((v, p))
}

/// Follower penalty written out from the model definition.
pub fn penalty_ref(f: &FollowerProblem, p: f64) -> f64 {
    let sf = |x: f64| f.sf.base + f.sf.scale * ((100.0 * f.sf.growth * x / f.sf.p_ref).exp() - 1.0);
    if p < f.p_req {
        f.shortfall_weight * (f.p_req - p).powi(2)
    } else if p > f.p_req {
        f.stress_weight * (sf(p) / sf(f.p_req) - 1.0)
    } else {
        0.0
    }
}

pub fn penalty_slope_ref(f: &FollowerProblem, p: f64) -> f64 {
    let k = 100.0 * f.sf.growth / f.sf.p_ref;
    let sf_req = f.sf.base + f.sf.scale * ((k * f.p_req).exp() - 1.0);
    if p < f.p_req {
        -2.0 * f.shortfall_weight * (f.p_req - p)
    } else if p > f.p_req {
        f.stress_weight * f.sf.scale * k * (k * p).exp() / sf_req
    } else {
        0.0
    }
}

/// Leader cost of one vehicle at power `p` with the incentive substituted.
pub fn leader_term_ref(f: &FollowerProblem, p: f64, slice: &ScheduleSlice, hp: &Hyperparams) -> f64 {
    let h = f.dt_min / 60.0;
    let theta = (hp.incentive_gain * penalty_slope_ref(f, p)).abs().min(slice.d_cap);
    -slice.tariff_ev * p * h + penalty_ref(f, p) + theta * p * h
}

/// Exhaustive search over all quantized allocations. Ties go to the lowest
/// total, then to the lexicographically smallest level vector.
pub fn brute_force(
    followers: &[FollowerProblem],
    coupling: &Coupling,
    slice: &ScheduleSlice,
    hp: &Hyperparams,
    q: f64,
) -> Option<(f64, Vec<usize>)> {
    let n = followers.len();
    let tops: Vec<usize> = followers
        .iter()
        .map(|f| (f.p_max / q + 1e-9).floor() as usize)
        .collect();
    let col_cap = (coupling.column_limit / q + 1e-9).floor() as usize;
    let h = followers[0].dt_min / 60.0;
    let mut levels = vec![0usize; n];
    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    loop {
        let mut cols = vec![0usize; coupling.n_columns];
        for (f, &k) in followers.iter().zip(&levels) {
            cols[f.column] += k;
        }
        let total: usize = levels.iter().sum();
        let s = total as f64 * q / coupling.eff_cp - slice.c_budget;
        if cols.iter().all(|&c| c <= col_cap) && s >= slice.s_min && s <= slice.s_max {
            let v: f64 = followers
                .iter()
                .zip(&levels)
                .map(|(f, &k)| leader_term_ref(f, k as f64 * q, slice, hp))
                .sum::<f64>()
                + hp.slack_cost * s.abs() * h;
            let better = match &best {
                None => true,
                Some((bv, bt, _)) => v < *bv || (v == *bv && total < *bt),
            };
            if better {
                best = Some((v, total, levels.clone()));
            }
        }
        let mut i = n;
        loop {
            if i == 0 {
                return best.map(|(v, _, l)| (v, l));
            }
            i -= 1;
            if levels[i] < tops[i] {
                levels[i] += 1;
                break;
            }
            levels[i] = 0;
        }
    }
}

/// Scarcity-prone schedule slice with the given budget and incentive cap.
pub fn slice_with(c_budget: f64, d_cap: f64, s_min: f64, s_max: f64) -> ScheduleSlice {
    ScheduleSlice {
        c_budget,
        p_bess_setpoint: 0.0,
        d_cap,
        s_min,
        s_max,
        tariff_ev: 0.45,
        price_dam: 0.12,
        price_short: 0.2,
        price_long: 0.05,
        p_dp: 0.0,
    }
}

/// Night-time scenario (no PV, flat prices) of `minutes` with the given
/// sessions, plugs assigned first-fit.
pub fn night_scenario(minutes: usize, mut sessions: Vec<EvSession>, station: &StationParams) -> Scenario {
    assign_plugs(&mut sessions, station).unwrap();
    let n_da = minutes / 15;
    Scenario {
        date: NaiveDate::from_ymd_opt(2024, 11, 29).unwrap(),
        site: Site::default(),
        pv_real: vec![0.0; minutes],
        price_dam: vec![0.12; n_da],
        price_short: vec![0.2; n_da],
        price_long: vec![0.05; n_da],
        tariff_ev: vec![0.45; n_da],
        sessions,
    }
}

pub fn session(id: u32, arrival: u32, departure: u32, capacity_kwh: f64, soc: f64, energy_kwh: f64) -> EvSession {
    EvSession {
        id,
        arrival,
        departure,
        capacity_kwh,
        soc_arrival: soc,
        energy_kwh,
        rated_kw: EvSession::default_rated_kw(capacity_kwh),
        column: 0,
        plug: 0,
        curve: None,
    }
}

/// Twenty large batteries plugged in together for an hour: far more demand
/// than grid plus battery can serve.
pub fn scarcity_scenario(station: &StationParams) -> Scenario {
    let sessions = (1..=20).map(|i| session(i, 0, 60, 100.0, 0.1, 80.0)).collect();
    night_scenario(60, sessions, station)
}

/// Three vehicles with long stays and modest requests.
pub fn relaxed_scenario(station: &StationParams) -> Scenario {
    let sessions = vec![
        session(1, 0, 120, 60.0, 0.3, 20.0),
        session(2, 10, 150, 75.0, 0.4, 25.0),
        session(3, 30, 180, 40.0, 0.2, 15.0),
    ];
    night_scenario(180, sessions, station)
}

/// `p_grid*eff_tr + pv*eff_pv - p_bess - c_delivered + reroute`.
pub fn balance_residual(r: &StationRecord, st: &StationParams) -> f64 {
    r.p_grid * st.eff_tr + r.pv * st.eff_pv - r.p_bess - r.c_delivered + r.reroute
}

/// Physical invariants every trace must satisfy; panics with the first breach.
pub fn check_trace(trace: &SimulationTrace, scenario: &Scenario, config: &Config) {
    let st = &config.station;
    assert_eq!(trace.station.len(), scenario.steps());
    for r in &trace.station {
        let b = balance_residual(r, st);
        assert!(b.abs() <= 1e-6, "minute {}: balance residual {b}", r.minute);
        let (lo, hi) = (st.soc_min * st.bess_capacity_kwh, st.soc_max * st.bess_capacity_kwh);
        assert!(
            r.soe >= lo - 1e-9 && r.soe <= hi + 1e-9,
            "minute {}: soe {}",
            r.minute,
            r.soe
        );
        assert!(r.gcp_violation >= 0.0 && r.coupling_violation >= 0.0);
    }
    for s in &scenario.sessions {
        let recs: Vec<&EvRecord> = trace.evs.iter().filter(|e| e.ev_id == s.id).collect();
        let minutes: Vec<u32> = recs.iter().map(|e| e.minute).collect();
        let expected: Vec<u32> = (s.arrival..s.departure).collect();
        assert_eq!(minutes, expected, "session {} records", s.id);
        let mut soc = s.soc_arrival;
        for e in &recs {
            assert!(e.soc >= soc - 1e-12 && e.soc <= 1.0, "session {} soc {}", s.id, e.soc);
            assert!(e.p_delivered <= e.p_alloc + 1e-12 && e.p_alloc <= e.p_max + 1e-9);
            soc = e.soc;
        }
        let summary = trace.sessions.iter().find(|x| x.ev_id == s.id).unwrap();
        assert!(
            summary.energy_delivered <= s.energy_kwh + 1e-9,
            "session {} overshoot",
            s.id
        );
    }
}
