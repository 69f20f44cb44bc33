//! Output directory layout shared by the CLI and the bindings.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::controller::Method;
use crate::error::Result;
use crate::metrics::{extra_charging_time, run_metrics, timing_report, ExtraTime, RunMetrics, TimingRow};
use crate::scenario::{write_schedule_csv, Scenario, ScheduleSeries};
use crate::sim::{simulate, SimulationTrace};

pub fn trace_path(dir: &Path, method: Method) -> std::path::PathBuf {
    dir.join(format!("trace_{method}.csv"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `trace_<m>.csv`, `evs_<m>.csv` and `metrics_<m>.json`.
pub fn write_run(
    dir: &Path,
    trace: &SimulationTrace,
    schedule: &ScheduleSeries,
    config: &Config,
) -> Result<RunMetrics> {
    fs::create_dir_all(dir)?;
    let m = trace.method;
    trace.write_station_csv(&trace_path(dir, m))?;
    trace.write_ev_csv(&dir.join(format!("evs_{m}.csv")))?;
    let metrics = run_metrics(trace, schedule, config)?;
    write_json(&dir.join(format!("metrics_{m}.json")), &metrics)?;
    Ok(metrics)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub net_profit: f64,
    pub incentives_paid: f64,
    pub energy_delivered_kwh: f64,
    pub fairness_gini: f64,
    pub wear_per_day: f64,
    pub gcp_violation_minutes: usize,
    pub coupling_violation_minutes: usize,
    pub nonconverged_steps: usize,
    /// Median delay against the uncontrolled run (minutes).
    pub median_extra_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub date: chrono::NaiveDate,
    pub minutes: usize,
    pub sessions: usize,
    pub methods: Vec<MethodSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ExtraTimeRow {
    method: Method,
    ev_id: u32,
    t_method: f64,
    t_reference: f64,
    delta_min: f64,
}

impl ExtraTimeRow {
    fn new(method: Method, e: ExtraTime) -> Self {
        Self {
            method,
            ev_id: e.ev_id,
            t_method: e.t_method,
            t_reference: e.t_reference,
            delta_min: e.delta_min,
        }
    }
}

pub struct CompareOutput {
    pub traces: Vec<SimulationTrace>,
    pub metrics: Vec<RunMetrics>,
    pub timing: Vec<TimingRow>,
    pub summary: Summary,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[k]
    } else {
        (v[k - 1] + v[k]) / 2.0
    })
}

/// Runs each method in turn and writes every per-run file plus
/// `schedule.csv`, `timing.csv`, `extra_time.csv` and `summary.json`.
pub fn compare(
    scenario: &Scenario,
    schedule: &ScheduleSeries,
    config: &Config,
    methods: &[Method],
    dir: &Path,
) -> Result<CompareOutput> {
    fs::create_dir_all(dir)?;
    write_schedule_csv(
        schedule,
        scenario.date,
        config.time.step_id_min,
        &dir.join("schedule.csv"),
    )?;
    let mut traces = Vec::with_capacity(methods.len());
    let mut metrics = Vec::with_capacity(methods.len());
    for &m in methods {
        let trace = simulate(scenario, schedule, m, config)?;
        metrics.push(write_run(dir, &trace, schedule, config)?);
        traces.push(trace);
    }
    let timing = timing_report(traces.iter().flat_map(|t| t.timing.iter().map(move |s| (t.method, s))));
    write_csv(&dir.join("timing.csv"), &timing)?;

    let reference = traces.iter().find(|t| t.method == Method::Uncontrolled);
    let mut extra_rows = Vec::new();
    let mut methods_out = Vec::with_capacity(traces.len());
    for (t, rm) in traces.iter().zip(&metrics) {
        let extra = match reference {
            Some(r) => Some(extra_charging_time(t, r)?),
            None => None,
        };
        let median_extra_min = extra
            .as_ref()
            .and_then(|e| median(e.iter().map(|x| x.delta_min).collect()));
        if t.method != Method::Uncontrolled {
            extra_rows.extend(extra.into_iter().flatten().map(|e| ExtraTimeRow::new(t.method, e)));
        }
        methods_out.push(MethodSummary {
            method: t.method,
            net_profit: rm.profit.net_profit,
            incentives_paid: rm.profit.incentives_paid,
            energy_delivered_kwh: rm.energy_delivered_kwh,
            fairness_gini: rm.fairness.gini,
            wear_per_day: rm.wear.wear_per_day,
            gcp_violation_minutes: rm.gcp_violation_minutes,
            coupling_violation_minutes: rm.coupling_violation_minutes,
            nonconverged_steps: rm.nonconverged_steps,
            median_extra_min,
        });
    }
    if reference.is_some() {
        write_csv(&dir.join("extra_time.csv"), &extra_rows)?;
    }
    let summary = Summary {
        date: scenario.date,
        minutes: scenario.steps() * config.time.step_rt_min as usize,
        sessions: scenario.sessions.len(),
        methods: methods_out,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(CompareOutput {
        traces,
        metrics,
        timing,
        summary,
    })
}
