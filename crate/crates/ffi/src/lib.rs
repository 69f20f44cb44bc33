//! C ABI for the charging station controllers and simulator.
//!
//! Every fallible function returns an [`EvcsStatus`]; on failure the message
//! is available from [`evcs_last_error`] on the same thread. Objects are
//! opaque handles created by `evcs_*_new`/`_load`/`_default` functions and
//! released with the matching `evcs_*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use evcs_core::config::Config;
use evcs_core::controller::{Controller, Method};
use evcs_core::dispatch::dispatch;
use evcs_core::follower::FollowerProblem;
use evcs_core::metrics::{gini, run_metrics};
use evcs_core::report::write_run;
use evcs_core::scenario::{
    generate_synthetic, heuristic_schedule, load_scenario, Scenario, ScheduleSeries, SyntheticConfig,
};
use evcs_core::sim::{simulate, SimulationTrace};
use evcs_core::types::ScheduleSlice;
use evcs_core::Error;

pub const EVCS_METHOD_SG_ADMM: u32 = 0;
pub const EVCS_METHOD_ADMM: u32 = 1;
pub const EVCS_METHOD_CENTRALIZED: u32 = 2;
pub const EVCS_METHOD_UNCONTROLLED: u32 = 3;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvcsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Infeasible = 3,
    Parse = 4,
    Io = 5,
    Solver = 6,
    Panic = 7,
}

/// Station configuration.
pub struct EvcsConfig(Config);

/// Scenario: sessions, PV and prices for one or more days.
pub struct EvcsScenario(Scenario);

/// Result of one simulated run, with the schedule and configuration it used.
pub struct EvcsTrace {
    trace: SimulationTrace,
    schedule: ScheduleSeries,
    config: Config,
}

/// Stateful per-step controller.
pub struct EvcsController {
    inner: Controller,
    config: Config,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EvcsDispatch {
    pub p_grid: f64,
    pub p_bess: f64,
    pub gcp_violation: f64,
    pub reroute: f64,
    pub crate_clipped: bool,
}

/// One connected vehicle for a controller step.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EvcsVehicle {
    pub id: u32,
    pub column: u32,
    /// Requested power (kW).
    pub p_req: f64,
    /// Deliverable power this step (kW).
    pub p_max: f64,
    /// Peak of the vehicle's charging curve (kW).
    pub p_ref: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EvcsSlice {
    pub c_budget: f64,
    pub p_bess_setpoint: f64,
    pub d_cap: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub tariff_ev: f64,
    pub price_dam: f64,
    pub price_short: f64,
    pub price_long: f64,
    pub p_dp: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EvcsStepInfo {
    pub slack: f64,
    pub lambda: f64,
    pub admm_iterations: u64,
    pub sg_iterations: u64,
    pub converged: bool,
    pub feasible: bool,
    pub fallback_scan: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EvcsMetrics {
    pub minutes: u64,
    pub sessions: u64,
    pub energy_requested_kwh: f64,
    pub energy_delivered_kwh: f64,
    pub net_profit: f64,
    pub incentives_paid: f64,
    pub fairness_gini: f64,
    pub wear_per_day: f64,
    pub gcp_violation_minutes: u64,
    pub coupling_violation_minutes: u64,
    pub nonconverged_steps: u64,
    pub max_sg_iterations: u64,
    pub mean_controller_ms: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(EvcsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Invalid { .. } | Error::LengthMismatch { .. } | Error::PlugConflict { .. } => {
                EvcsStatus::InvalidArgument
            }
            Error::Infeasible(_) => EvcsStatus::Infeasible,
            Error::Schema { .. } | Error::Csv(_) | Error::Json(_) => EvcsStatus::Parse,
            Error::Io(_) => EvcsStatus::Io,
            Error::Solver(_) => EvcsStatus::Solver,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(EvcsStatus::NullPointer, format!("`{what}` is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(EvcsStatus::InvalidArgument, msg.into())
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EvcsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EvcsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            EvcsStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn as_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn as_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("`{what}` is not valid UTF-8")))
}

unsafe fn slice_of<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    let out = as_mut(out, "out")?;
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

fn method(code: u32) -> Result<Method, Failure> {
    match code {
        EVCS_METHOD_SG_ADMM => Ok(Method::SgAdmm),
        EVCS_METHOD_ADMM => Ok(Method::Admm),
        EVCS_METHOD_CENTRALIZED => Ok(Method::Centralized),
        EVCS_METHOD_UNCONTROLLED => Ok(Method::Uncontrolled),
        other => Err(invalid(format!("unknown method code {other}"))),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn evcs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn evcs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by the library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn evcs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn evcs_config_default(out: *mut *mut EvcsConfig) -> EvcsStatus {
    guard(|| put(out, EvcsConfig(Config::default())))
}

/// Parses and validates a JSON configuration; missing keys take defaults.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn evcs_config_from_json(json: *const c_char, out: *mut *mut EvcsConfig) -> EvcsStatus {
    guard(|| {
        let cfg = Config::from_json(as_str(json, "json")?)?;
        put(out, EvcsConfig(cfg))
    })
}

/// Serializes a configuration; release the string with `evcs_string_free`.
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn evcs_config_to_json(config: *const EvcsConfig, out: *mut *mut c_char) -> EvcsStatus {
    guard(|| {
        let cfg = as_ref(config, "config")?;
        let out = as_mut(out, "out")?;
        *out = CString::new(cfg.0.to_json())
            .map_err(|e| invalid(e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `config` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn evcs_config_free(config: *mut EvcsConfig) {
    free(config)
}

/// Gini index of non-negative values.
///
/// # Safety
/// `values` must point to `len` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn evcs_gini(values: *const f64, len: usize, out: *mut f64) -> EvcsStatus {
    guard(|| {
        let x = slice_of(values, len, "values")?;
        let g = gini(x)?;
        *as_mut(out, "out")? = g;
        Ok(())
    })
}

/// One real-time dispatch of grid, battery and PV for the configured station.
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn evcs_dispatch(
    config: *const EvcsConfig,
    c_total: f64,
    p_b_setpoint: f64,
    pv_real: f64,
    out: *mut EvcsDispatch,
) -> EvcsStatus {
    guard(|| {
        let cfg = as_ref(config, "config")?;
        let out = as_mut(out, "out")?;
        if !(c_total >= 0.0 && pv_real >= 0.0 && p_b_setpoint.is_finite()) {
            return Err(invalid("need finite c_total >= 0, pv_real >= 0 and p_b_setpoint"));
        }
        let r = dispatch(c_total, p_b_setpoint, pv_real, &cfg.0.station);
        *out = EvcsDispatch {
            p_grid: r.p_g,
            p_bess: r.p_b,
            gcp_violation: r.gcp_violation,
            reroute: r.reroute,
            crate_clipped: r.crate_clipped,
        };
        Ok(())
    })
}

/// Loads a scenario directory or JSON bundle.
///
/// # Safety
/// `path` must be a NUL-terminated string; `config` a live handle; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn evcs_scenario_load(
    path: *const c_char,
    config: *const EvcsConfig,
    out: *mut *mut EvcsScenario,
) -> EvcsStatus {
    guard(|| {
        let cfg = as_ref(config, "config")?;
        let s = load_scenario(Path::new(as_str(path, "path")?), &cfg.0)?;
        put(out, EvcsScenario(s))
    })
}

/// Synthetic one-day scenario with `n_sessions` sessions.
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn evcs_scenario_synthetic(
    seed: u64,
    n_sessions: u32,
    config: *const EvcsConfig,
    out: *mut *mut EvcsScenario,
) -> EvcsStatus {
    guard(|| {
        let cfg = as_ref(config, "config")?;
        let synth = SyntheticConfig {
            n_sessions: n_sessions as usize,
            ..SyntheticConfig::default()
        };
        put(out, EvcsScenario(generate_synthetic(seed, &synth, &cfg.0)?))
    })
}

/// Number of real-time steps, or 0 for a null handle.
///
/// # Safety
/// `scenario` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn evcs_scenario_steps(scenario: *const EvcsScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.0.steps())
}

/// Number of charging sessions, or 0 for a null handle.
///
/// # Safety
/// `scenario` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn evcs_scenario_sessions(scenario: *const EvcsScenario) -> usize {
    scenario.as_ref().map_or(0, |s| s.0.sessions.len())
}

/// # Safety
/// `scenario` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn evcs_scenario_free(scenario: *mut EvcsScenario) {
    free(scenario)
}

/// Simulates a scenario under one method with the heuristic schedule.
///
/// # Safety
/// Handles must be live and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn evcs_simulate(
    scenario: *const EvcsScenario,
    config: *const EvcsConfig,
    method_code: u32,
    out: *mut *mut EvcsTrace,
) -> EvcsStatus {
    guard(|| {
        let scenario = as_ref(scenario, "scenario")?;
        let cfg = as_ref(config, "config")?;
        let m = method(method_code)?;
        let schedule = heuristic_schedule(&scenario.0, &cfg.0)?;
        let trace = simulate(&scenario.0, &schedule, m, &cfg.0)?;
        put(
            out,
            EvcsTrace {
                trace,
                schedule,
                config: cfg.0.clone(),
            },
        )
    })
}

/// Number of station records, or 0 for a null handle.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn evcs_trace_steps(trace: *const EvcsTrace) -> usize {
    trace.as_ref().map_or(0, |t| t.trace.station.len())
}

/// Headline metrics of a run.
///
/// # Safety
/// `trace` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn evcs_trace_metrics(trace: *const EvcsTrace, out: *mut EvcsMetrics) -> EvcsStatus {
    guard(|| {
        let t = as_ref(trace, "trace")?;
        let out = as_mut(out, "out")?;
        let m = run_metrics(&t.trace, &t.schedule, &t.config)?;
        *out = EvcsMetrics {
            minutes: m.minutes as u64,
            sessions: m.sessions as u64,
            energy_requested_kwh: m.energy_requested_kwh,
            energy_delivered_kwh: m.energy_delivered_kwh,
            net_profit: m.profit.net_profit,
            incentives_paid: m.profit.incentives_paid,
            fairness_gini: m.fairness.gini,
            wear_per_day: m.wear.wear_per_day,
            gcp_violation_minutes: m.gcp_violation_minutes as u64,
            coupling_violation_minutes: m.coupling_violation_minutes as u64,
            nonconverged_steps: m.nonconverged_steps as u64,
            max_sg_iterations: m.max_sg_iterations as u64,
            mean_controller_ms: m.mean_controller_ms,
        };
        Ok(())
    })
}

/// Writes `trace_<method>.csv`, `evs_<method>.csv` and `metrics_<method>.json`
/// into `dir`, creating it if needed.
///
/// # Safety
/// `trace` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn evcs_trace_write(trace: *const EvcsTrace, dir: *const c_char) -> EvcsStatus {
    guard(|| {
        let t = as_ref(trace, "trace")?;
        let dir = Path::new(as_str(dir, "dir")?);
        std::fs::create_dir_all(dir).map_err(Error::from)?;
        write_run(dir, &t.trace, &t.schedule, &t.config)?;
        Ok(())
    })
}

/// # Safety
/// `trace` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn evcs_trace_free(trace: *mut EvcsTrace) {
    free(trace)
}

/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn evcs_controller_new(
    config: *const EvcsConfig,
    method_code: u32,
    out: *mut *mut EvcsController,
) -> EvcsStatus {
    guard(|| {
        let cfg = as_ref(config, "config")?;
        cfg.0.validate()?;
        let m = method(method_code)?;
        put(
            out,
            EvcsController {
                inner: Controller::new(m, &cfg.0),
                config: cfg.0.clone(),
            },
        )
    })
}

/// Solves one control step for `n` vehicles. `power` and `theta` receive `n`
/// values each, in vehicle order; `info` may be null.
///
/// # Safety
/// `vehicles` must point to `n` entries, `power` and `theta` to room for `n`
/// doubles, and the other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn evcs_controller_step(
    controller: *mut EvcsController,
    vehicles: *const EvcsVehicle,
    n: usize,
    slice: *const EvcsSlice,
    power: *mut f64,
    theta: *mut f64,
    info: *mut EvcsStepInfo,
) -> EvcsStatus {
    guard(|| {
        let c = as_mut(controller, "controller")?;
        let evs = slice_of(vehicles, n, "vehicles")?;
        let s = as_ref(slice, "slice")?;
        if n > 0 && (power.is_null() || theta.is_null()) {
            return Err(null("power/theta"));
        }
        let sl = ScheduleSlice {
            c_budget: s.c_budget,
            p_bess_setpoint: s.p_bess_setpoint,
            d_cap: s.d_cap,
            s_min: s.s_min,
            s_max: s.s_max,
            tariff_ev: s.tariff_ev,
            price_dam: s.price_dam,
            price_short: s.price_short,
            price_long: s.price_long,
            p_dp: s.p_dp,
        };
        sl.validate()?;
        let cfg = &c.config;
        let mut ids: Vec<u32> = Vec::with_capacity(n);
        let mut followers = Vec::with_capacity(n);
        for v in evs {
            if v.column as usize >= cfg.station.n_columns {
                return Err(invalid(format!("vehicle {}: column {} out of range", v.id, v.column)));
            }
            if ids.contains(&v.id) {
                return Err(invalid(format!("vehicle id {} repeated", v.id)));
            }
            let f = FollowerProblem::new(
                &cfg.hyper,
                v.p_req,
                v.p_max,
                v.p_ref,
                v.column as usize,
                cfg.time.step_rt_min as f64,
            );
            f.validate()?;
            ids.push(v.id);
            followers.push(f);
        }
        let out = c.inner.step(&ids, &followers, &sl)?;
        let a = &out.allocation;
        if n > 0 {
            std::slice::from_raw_parts_mut(power, n).copy_from_slice(&a.power);
            std::slice::from_raw_parts_mut(theta, n).copy_from_slice(&a.theta);
        }
        if let Some(info) = info.as_mut() {
            *info = EvcsStepInfo {
                slack: a.slack,
                lambda: a.lambda,
                admm_iterations: a.admm_iterations as u64,
                sg_iterations: a.sg_iterations as u64,
                converged: a.converged,
                feasible: a.feasible,
                fallback_scan: out.fallback_scan,
            };
        }
        Ok(())
    })
}

/// # Safety
/// `controller` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn evcs_controller_free(controller: *mut EvcsController) {
    free(controller)
}
