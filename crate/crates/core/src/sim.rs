//! Minute-by-minute station simulation under one controller.

use std::path::Path;
use std::time::Instant;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::admm::Coupling;
use crate::config::Config;
use crate::controller::{Controller, Method};
use crate::curve::deliverable_power;
use crate::dispatch::{dispatch, soe_step, BessState};
use crate::error::{Error, Result};
use crate::follower::FollowerProblem;
use crate::forecast::{period_persistence, persistence_bounds, persistence_error_quantiles};
use crate::scenario::{pv_forecast, timestamp, Scenario, ScheduleSeries};
use crate::types::Allocation;

/// Station-level record for one real-time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationRecord {
    pub minute: u32,
    pub ts: String,
    /// Power budget in force (kW at the coupling point).
    pub c_budget: f64,
    pub slack: f64,
    /// Delivered EV power referred to the coupling point (kW).
    pub c_delivered: f64,
    pub p_grid: f64,
    pub p_bess: f64,
    pub soe: f64,
    pub pv: f64,
    pub pv_forecast: f64,
    pub pv_lo: f64,
    pub pv_hi: f64,
    /// Committed grid exchange (kW).
    pub p_dp: f64,
    pub tariff: f64,
    pub price_dam: f64,
    pub price_short: f64,
    pub price_long: f64,
    pub price_short_fc: f64,
    pub price_long_fc: f64,
    pub d_cap: f64,
    pub n_connected: usize,
    pub n_active: usize,
    pub admm_iterations: usize,
    pub sg_iterations: usize,
    pub converged: bool,
    pub feasible: bool,
    pub gcp_violation: f64,
    /// Excess of EV draw over budget plus slack or over a column cap (kW).
    pub coupling_violation: f64,
    /// Conversion term moved through the grid by battery C-rate clipping (kW),
    /// so that `p_grid*eff_tr + pv*eff_pv - p_bess - c_delivered + reroute = 0`.
    pub reroute: f64,
    /// Battery power refused by the SoE window and taken by the grid (kW).
    pub soe_rerouted: f64,
    pub crate_clipped: bool,
    /// Incentives paid this step ($).
    pub incentive_cost: f64,
}

/// Per-vehicle record for one real-time step of its stay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvRecord {
    pub minute: u32,
    pub ev_id: u32,
    pub column: usize,
    pub plug: usize,
    /// SoC at the start of the step.
    pub soc: f64,
    pub p_req: f64,
    pub p_max: f64,
    pub p_alloc: f64,
    pub p_delivered: f64,
    pub theta: f64,
    /// Cumulative energy at the end of the step (kWh).
    pub energy_delivered: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub ev_id: u32,
    pub arrival: u32,
    pub departure: u32,
    pub energy_request: f64,
    pub energy_delivered: f64,
    pub soc_final: f64,
}

/// Wall-clock of one controller call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSample {
    pub minute: u32,
    pub n_ev: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub method: Method,
    pub date: NaiveDate,
    pub step_min: u32,
    pub station: Vec<StationRecord>,
    pub evs: Vec<EvRecord>,
    pub sessions: Vec<SessionSummary>,
    pub timing: Vec<TimingSample>,
    /// Steps where the slack search fell back to a linear scan.
    pub fallback_scans: usize,
}

impl SimulationTrace {
    pub fn step_hours(&self) -> f64 {
        self.step_min as f64 / 60.0
    }

    /// Steps whose solver did not meet its stopping rule.
    pub fn nonconverged(&self) -> usize {
        self.station.iter().filter(|r| !r.converged).count()
    }

    pub fn write_station_csv(&self, path: &Path) -> Result<()> {
        write_rows(path, &self.station)
    }

    pub fn write_ev_csv(&self, path: &Path) -> Result<()> {
        write_rows(path, &self.evs)
    }

    pub fn write_timing_csv(&self, path: &Path) -> Result<()> {
        write_rows(path, &self.timing)
    }

    pub fn read_station_csv(path: &Path) -> Result<Vec<StationRecord>> {
        read_rows(path)
    }

    pub fn read_ev_csv(path: &Path) -> Result<Vec<EvRecord>> {
        read_rows(path)
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::schema(path, format!("row {}: {e}", i + 1))))
        .collect()
}

/// Draw beyond budget plus slack and beyond column caps, net of the solver's
/// primal tolerance.
pub fn coupling_violation(
    followers: &[FollowerProblem],
    a: &Allocation,
    coupling: &Coupling,
    c_budget: f64,
    eps: (f64, f64),
) -> f64 {
    if followers.is_empty() {
        return 0.0;
    }
    let target = (c_budget + a.slack).max(0.0);
    let hp_tol = |scale: f64| (followers.len() as f64).sqrt() * eps.0 + eps.1 * scale;
    let draw: f64 = a.power.iter().sum::<f64>() / coupling.eff_cp;
    let mut v = (draw - target - hp_tol(draw.max(target))).max(0.0);
    for col in coupling.column_sums(followers, &a.power) {
        v += (col - coupling.column_limit - hp_tol(col.max(coupling.column_limit))).max(0.0);
    }
    v
}

struct Live {
    soc: f64,
    energy: f64,
}

/// Runs `method` over the whole scenario with the given leader schedule.
#[allow(clippy::needless_range_loop)]
pub fn simulate(
    scenario: &Scenario,
    schedule: &ScheduleSeries,
    method: Method,
    config: &Config,
) -> Result<SimulationTrace> {
    config.validate()?;
    let st = &config.station;
    let time = &config.time;
    scenario.validate(st, time)?;
    let per_id = time.rt_per_id();
    let per_da = time.rt_per_da();
    let n = scenario.steps();
    if !n.is_multiple_of(per_id) {
        return Err(Error::invalid("schedule", "scenario length is not a multiple of dt_id"));
    }
    schedule.validate(n / per_id)?;

    let dt = time.step_rt_min as f64;
    let h = time.rt_hours();
    let mut controller = Controller::new(method, config);
    let coupling = *controller.coupling();
    let pv_fc = pv_forecast(scenario, config);
    let (q05, q95) = persistence_error_quantiles(&scenario.pv_real);
    let day = 1440 / time.step_da_min as usize;
    let short_fc = period_persistence(&scenario.price_short, day);
    let long_fc = period_persistence(&scenario.price_long, day);
    let curves: Vec<_> = scenario.sessions.iter().map(|s| s.curve()).collect();
    let mut live: Vec<Live> = scenario
        .sessions
        .iter()
        .map(|s| Live {
            soc: s.soc_arrival,
            energy: 0.0,
        })
        .collect();
    let mut bess = BessState::from_soc(config.options.bess_soc_ref, st);

    let mut trace = SimulationTrace {
        method,
        date: scenario.date,
        step_min: time.step_rt_min,
        station: Vec::with_capacity(n),
        evs: Vec::new(),
        sessions: Vec::new(),
        timing: Vec::new(),
        fallback_scans: 0,
    };

    for m in 0..n {
        let minute = (m * time.step_rt_min as usize) as u32;
        let slice = &schedule.slices[m / per_id];
        let connected: Vec<usize> = (0..scenario.sessions.len())
            .filter(|&i| scenario.sessions[i].is_connected(minute))
            .collect();

        let mut caps = Vec::with_capacity(connected.len());
        let mut ids = Vec::new();
        let mut followers = Vec::new();
        let mut slot = Vec::with_capacity(connected.len());
        for &i in &connected {
            let s = &scenario.sessions[i];
            let remaining = (s.energy_kwh - live[i].energy).max(0.0);
            let cap = deliverable_power(&curves[i], live[i].soc, remaining / h, h, s.capacity_kwh);
            caps.push(cap);
            if cap > 1e-9 {
                slot.push(Some(followers.len()));
                ids.push(s.id);
                followers.push(FollowerProblem::new(
                    &config.hyper,
                    cap,
                    cap,
                    curves[i].max_power(),
                    s.column,
                    dt,
                ));
            } else {
                slot.push(None);
            }
        }

        let started = Instant::now();
        let out = controller.step(&ids, &followers, slice)?;
        let wall_ms = started.elapsed().as_secs_f64() * 1e3;
        if !followers.is_empty() {
            trace.timing.push(TimingSample {
                minute,
                n_ev: followers.len(),
                wall_ms,
            });
        }
        let a = out.allocation;
        trace.fallback_scans += out.fallback_scan as usize;

        let mut delivered_total = 0.0;
        let mut incentive_cost = 0.0;
        for (k, &i) in connected.iter().enumerate() {
            let s = &scenario.sessions[i];
            let (p_alloc, theta) = match slot[k] {
                Some(j) => (a.power[j], a.theta[j]),
                None => (0.0, 0.0),
            };
            let soc0 = live[i].soc;
            let p = deliverable_power(&curves[i], soc0, p_alloc, h, s.capacity_kwh);
            live[i].soc = (soc0 + p * h / s.capacity_kwh).min(1.0);
            live[i].energy += p * h;
            delivered_total += p;
            incentive_cost += theta * p_alloc * h;
            trace.evs.push(EvRecord {
                minute,
                ev_id: s.id,
                column: s.column,
                plug: s.plug,
                soc: soc0,
                p_req: caps[k],
                p_max: caps[k],
                p_alloc,
                p_delivered: p,
                theta,
                energy_delivered: live[i].energy,
            });
        }
        let c_delivered = delivered_total / st.eff_cp;

        let pv = scenario.pv_real[m];
        let mut d = dispatch(c_delivered, slice.p_bess_setpoint, pv, st);
        let step = soe_step(bess, d.p_b, dt, st);
        bess = step.state;
        d.p_b = step.p_b;
        d.p_g -= step.rerouted / st.eff_tr;
        d.gcp_violation = (d.p_g.abs() - st.grid_limit_kw).max(0.0);

        let pv_prev = if m == 0 { 0.0 } else { scenario.pv_real[m - 1] };
        let (pv_lo, _, pv_hi) = persistence_bounds(pv_prev, q05, q95);
        let eps = (config.hyper.eps_abs, config.hyper.eps_rel);
        let da = m / per_da;
        trace.station.push(StationRecord {
            minute,
            ts: timestamp(scenario.date, minute as usize),
            c_budget: slice.c_budget,
            slack: a.slack,
            c_delivered,
            p_grid: d.p_g,
            p_bess: d.p_b,
            soe: bess.soe,
            pv,
            pv_forecast: pv_fc[m],
            pv_lo,
            pv_hi,
            p_dp: slice.p_dp,
            tariff: slice.tariff_ev,
            price_dam: slice.price_dam,
            price_short: slice.price_short,
            price_long: slice.price_long,
            price_short_fc: short_fc[da],
            price_long_fc: long_fc[da],
            d_cap: slice.d_cap,
            n_connected: connected.len(),
            n_active: followers.len(),
            admm_iterations: a.admm_iterations,
            sg_iterations: a.sg_iterations,
            converged: a.converged,
            feasible: a.feasible,
            gcp_violation: d.gcp_violation,
            coupling_violation: coupling_violation(&followers, &a, &coupling, slice.c_budget, eps),
            reroute: d.reroute,
            soe_rerouted: step.rerouted,
            crate_clipped: d.crate_clipped,
            incentive_cost,
        });
    }

    trace.sessions = scenario
        .sessions
        .iter()
        .zip(&live)
        .map(|(s, l)| SessionSummary {
            ev_id: s.id,
            arrival: s.arrival,
            departure: s.departure,
            energy_request: s.energy_kwh,
            energy_delivered: l.energy,
            soc_final: l.soc,
        })
        .collect();
    Ok(trace)
}
