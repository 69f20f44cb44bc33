//! Post-processing of simulation traces: profit, fairness, battery wear,
//! charging delays and controller timing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::{Config, Options, StationParams};
use crate::controller::Method;
use crate::error::{Error, Result};
use crate::scenario::ScheduleSeries;
use crate::sim::{SimulationTrace, TimingSample};

/// `2 Σ i x_(i) / (n Σ x) - (n+1)/n` over the ascending sort; 0 for an
/// empty or all-zero input.
pub fn gini(x: &[f64]) -> Result<f64> {
    if x.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid("gini", "entries must be finite and >= 0"));
    }
    let total: f64 = x.iter().sum();
    if x.is_empty() || total <= 0.0 {
        return Ok(0.0);
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let weighted: f64 = sorted.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).sum();
    Ok(2.0 * weighted / (n * total) - (n + 1.0) / n)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid(
            "spearman",
            "need two equally long series of length >= 2",
        ));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (vx * vy).sqrt())
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvFairness {
    pub ev_id: u32,
    pub minutes: usize,
    /// Mean per-unit deviation of the allocation from the request.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub per_ev: Vec<EvFairness>,
    pub gini: f64,
    pub mean_score: f64,
}

/// Per vehicle, the mean of `|p_alloc - p_req| / max(p_req, floor_kw)` over
/// its connected steps, and the Gini index of those scores.
pub fn fairness(trace: &SimulationTrace, floor_kw: f64) -> Result<FairnessReport> {
    if !(floor_kw > 0.0) {
        return Err(Error::invalid("fairness_floor_kw", "must be > 0"));
    }
    let mut acc: BTreeMap<u32, (usize, f64)> = BTreeMap::new();
    for r in &trace.evs {
        let e = acc.entry(r.ev_id).or_default();
        e.0 += 1;
        e.1 += (r.p_alloc - r.p_req).abs() / r.p_req.max(floor_kw);
    }
    let per_ev: Vec<EvFairness> = acc
        .into_iter()
        .map(|(ev_id, (minutes, sum))| EvFairness {
            ev_id,
            minutes,
            score: sum / minutes as f64,
        })
        .collect();
    let scores: Vec<f64> = per_ev.iter().map(|e| e.score).collect();
    let mean_score = if scores.is_empty() {
        0.0
    } else {
        scores.iter().sum::<f64>() / scores.len() as f64
    };
    Ok(FairnessReport {
        gini: gini(&scores)?,
        mean_score,
        per_ev,
    })
}

/// Money flows of one run ($). `bm_cost` is negative when the station earns
/// on the balancing market.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfitBreakdown {
    pub potential_profit: f64,
    pub dam_cost: f64,
    pub bm_cost: f64,
    pub incentives_paid: f64,
    pub net_profit: f64,
}

/// Settles a trace: EV sales at the tariff, the committed exchange at the
/// day-ahead price, deviations of the grid exchange from it at the imbalance
/// prices, and the incentives.
pub fn profit_breakdown(trace: &SimulationTrace, schedule: &ScheduleSeries) -> Result<ProfitBreakdown> {
    let n = trace.station.len();
    if schedule.slices.is_empty() || !n.is_multiple_of(schedule.slices.len()) {
        return Err(Error::LengthMismatch {
            series: "schedule".into(),
            expected: n,
            found: schedule.slices.len(),
        });
    }
    let per = n / schedule.slices.len();
    let h = trace.step_hours();
    let mut tariff = Vec::with_capacity(n);
    let (mut dam, mut bm) = (0.0, 0.0);
    for (m, r) in trace.station.iter().enumerate() {
        let s = &schedule.slices[m / per];
        tariff.push(s.tariff_ev);
        dam += s.price_dam * s.p_dp * h;
        let imbalance = (r.p_grid - s.p_dp) * h;
        bm += if imbalance > 0.0 {
            s.price_short * imbalance
        } else {
            s.price_long * imbalance
        };
    }
    let step = trace.step_min.max(1);
    let (mut potential, mut incentives) = (0.0, 0.0);
    for e in &trace.evs {
        let m = (e.minute / step) as usize;
        let t = *tariff
            .get(m)
            .ok_or_else(|| Error::invalid("trace", format!("ev record at minute {} beyond the horizon", e.minute)))?;
        potential += t * e.p_delivered * h;
        incentives += e.theta * e.p_alloc * h;
    }
    Ok(ProfitBreakdown {
        potential_profit: potential,
        dam_cost: dam,
        bm_cost: bm,
        incentives_paid: incentives,
        net_profit: potential - dam - bm - incentives,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WearReport {
    pub throughput_kwh: f64,
    pub equivalent_cycles: f64,
    /// Fraction of the usable life consumed.
    pub wear: f64,
    pub days: f64,
    pub wear_per_day: f64,
}

/// Throughput-based wear: equivalent full cycles times the capacity fade per
/// rated cycle.
pub fn battery_wear(trace: &SimulationTrace, station: &StationParams, options: &Options) -> WearReport {
    let h = trace.step_hours();
    let throughput: f64 = trace.station.iter().map(|r| r.p_bess.abs() * h).sum();
    let cycles = throughput / (2.0 * station.bess_capacity_kwh);
    let wear = cycles * (1.0 - station.bess_eol_fraction) / options.rated_cycles;
    let days = trace.station.len() as f64 * h / 24.0;
    WearReport {
        throughput_kwh: throughput,
        equivalent_cycles: cycles,
        wear,
        days,
        wear_per_day: if days > 0.0 { wear / days } else { 0.0 },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtraTime {
    pub ev_id: u32,
    /// Minutes from arrival to completion in each run.
    pub t_method: f64,
    pub t_reference: f64,
    pub delta_min: f64,
}

/// Charging delay of `method` relative to `reference`, per session.
///
/// Completion is the end of the first step at which the delivered energy
/// reaches the smaller of the request and both runs' final energies; a
/// session that never gets there completes at its departure.
pub fn extra_charging_time(method: &SimulationTrace, reference: &SimulationTrace) -> Result<Vec<ExtraTime>> {
    let ids = |t: &SimulationTrace| t.sessions.iter().map(|s| s.ev_id).collect::<Vec<_>>();
    if ids(method) != ids(reference) {
        return Err(Error::invalid("traces", "session sets differ"));
    }
    let tol = 1e-6;
    let finish = |t: &SimulationTrace, id: u32, target: f64, arrival: u32, departure: u32| -> f64 {
        let end = t
            .evs
            .iter()
            .filter(|e| e.ev_id == id)
            .find(|e| e.energy_delivered >= target - tol)
            .map(|e| e.minute + t.step_min)
            .unwrap_or(departure);
        (end.min(departure).max(arrival) - arrival) as f64
    };
    Ok(method
        .sessions
        .iter()
        .zip(&reference.sessions)
        .map(|(a, b)| {
            let target = a.energy_request.min(a.energy_delivered).min(b.energy_delivered);
            let (t_m, t_r) = if target <= tol {
                (0.0, 0.0)
            } else {
                (
                    finish(method, a.ev_id, target, a.arrival, a.departure),
                    finish(reference, b.ev_id, target, b.arrival, b.departure),
                )
            };
            ExtraTime {
                ev_id: a.ev_id,
                t_method: t_m,
                t_reference: t_r,
                delta_min: t_m - t_r,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: Method,
    pub n_ev: usize,
    pub mean_ms: f64,
    pub count: usize,
}

/// Mean controller wall-clock per method and connected-vehicle count.
pub fn timing_report<'a>(samples: impl IntoIterator<Item = (Method, &'a TimingSample)>) -> Vec<TimingRow> {
    let mut cells: BTreeMap<(Method, usize), (f64, usize)> = BTreeMap::new();
    for (method, s) in samples {
        let c = cells.entry((method, s.n_ev)).or_default();
        c.0 += s.wall_ms;
        c.1 += 1;
    }
    cells
        .into_iter()
        .map(|((method, n_ev), (sum, count))| TimingRow {
            method,
            n_ev,
            mean_ms: sum / count as f64,
            count,
        })
        .collect()
}

/// Headline numbers of one run, written as `metrics_<method>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub method: Method,
    pub minutes: usize,
    pub sessions: usize,
    pub energy_requested_kwh: f64,
    pub energy_delivered_kwh: f64,
    pub profit: ProfitBreakdown,
    pub fairness: FairnessReport,
    pub wear: WearReport,
    pub gcp_violation_minutes: usize,
    pub coupling_violation_minutes: usize,
    pub nonconverged_steps: usize,
    pub infeasible_steps: usize,
    pub fallback_scans: usize,
    pub max_sg_iterations: usize,
    pub mean_controller_ms: f64,
}

pub fn run_metrics(trace: &SimulationTrace, schedule: &ScheduleSeries, config: &Config) -> Result<RunMetrics> {
    let active = |r: &&crate::sim::StationRecord| r.n_active > 0;
    Ok(RunMetrics {
        method: trace.method,
        minutes: trace.station.len(),
        sessions: trace.sessions.len(),
        energy_requested_kwh: trace.sessions.iter().map(|s| s.energy_request).sum(),
        energy_delivered_kwh: trace.sessions.iter().map(|s| s.energy_delivered).sum(),
        profit: profit_breakdown(trace, schedule)?,
        fairness: fairness(trace, config.options.fairness_floor_kw)?,
        wear: battery_wear(trace, &config.station, &config.options),
        gcp_violation_minutes: trace.station.iter().filter(|r| r.gcp_violation > 0.0).count(),
        coupling_violation_minutes: trace.station.iter().filter(|r| r.coupling_violation > 0.0).count(),
        nonconverged_steps: trace.station.iter().filter(active).filter(|r| !r.converged).count(),
        infeasible_steps: trace.station.iter().filter(active).filter(|r| !r.feasible).count(),
        fallback_scans: trace.fallback_scans,
        max_sg_iterations: trace.station.iter().map(|r| r.sg_iterations).max().unwrap_or(0),
        mean_controller_ms: if trace.timing.is_empty() {
            0.0
        } else {
            trace.timing.iter().map(|t| t.wall_ms).sum::<f64>() / trace.timing.len() as f64
        },
    })
}
