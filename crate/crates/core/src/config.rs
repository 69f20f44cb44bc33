//! Station parameters, controller hyperparameters and the simulation time grid.
//!
//! Every field has a default matching the reference charging station (a
//! 10-column, 20-plug L3 station with a 506.7 kWh battery and a 954.5 kW grid
//! connection). Configuration files are JSON; any field may be omitted and
//! unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical parameters of the charging station.
///
/// Powers are kW, energies kWh, efficiencies dimensionless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationParams {
    pub eff_pv: f64,
    pub eff_inv: f64,
    pub eff_tr: f64,
    /// Charging point efficiency between the coupling bus and the vehicle.
    pub eff_cp: f64,
    pub eff_ch: f64,
    pub eff_dh: f64,
    /// Battery C-rate (1/h); the battery power limit is `capacity * c_rate`.
    pub c_rate: f64,
    pub bess_capacity_kwh: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    /// Grid connection point limit (import and export).
    pub grid_limit_kw: f64,
    /// Power limit of one charging column.
    pub column_limit_kw: f64,
    pub n_columns: usize,
    pub plugs_per_column: usize,
    pub pv_peak_kw: f64,
    /// Battery replacement cost ($/kWh).
    pub bess_price_per_kwh: f64,
    /// Remaining capacity fraction at battery end of life.
    pub bess_eol_fraction: f64,
}

impl Default for StationParams {
    fn default() -> Self {
        Self {
            eff_pv: 0.98,
            eff_inv: 0.98,
            eff_tr: 0.99,
            eff_cp: 0.95,
            eff_ch: 0.95,
            eff_dh: 0.95,
            c_rate: 1.0,
            bess_capacity_kwh: 506.7,
            soc_min: 0.1,
            soc_max: 0.9,
            grid_limit_kw: 954.5,
            column_limit_kw: 172.5,
            n_columns: 10,
            plugs_per_column: 2,
            pv_peak_kw: 500.0,
            bess_price_per_kwh: 115.0,
            bess_eol_fraction: 0.8,
        }
    }
}

impl StationParams {
    /// Battery power limit in kW.
    pub fn bess_power_kw(&self) -> f64 {
        self.bess_capacity_kwh * self.c_rate
    }

    pub fn n_plugs(&self) -> usize {
        self.n_columns * self.plugs_per_column
    }
}

/// Controller hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    /// Carried for the day-ahead layer; unused in real time.
    pub upstream_fs: f64,
    /// Carried for the day-ahead layer; unused in real time.
    pub upstream_tau: f64,
    /// Growth rate of the stress function exponent.
    pub sf_growth: f64,
    /// Stress function value at zero power.
    pub sf_base: f64,
    /// Stress function exponential scale.
    pub sf_scale: f64,
    /// Leader cost per kWh of slack.
    pub slack_cost: f64,
    /// Weight of the quadratic under-delivery penalty.
    pub shortfall_weight: f64,
    /// Weight of the over-delivery stress penalty.
    pub stress_weight: f64,
    /// Initial ADMM penalty.
    pub rho_init: f64,
    /// Gradient-to-price gain for incentives.
    pub incentive_gain: f64,
    pub eps_abs: f64,
    pub eps_rel: f64,
    /// Relative bracket width at which the slack bisection stops.
    pub bisect_tol: f64,
    /// Multiplicative penalty update used by residual balancing.
    pub rho_scale: f64,
    /// Residual ratio that triggers a penalty update.
    pub rho_balance: f64,
    pub admm_max_iter: usize,
    pub sg_max_iter: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            upstream_fs: 0.8,
            upstream_tau: 0.2,
            sf_growth: 0.04,
            sf_base: 1.0,
            sf_scale: 0.01,
            slack_cost: 10.0,
            shortfall_weight: 0.01,
            stress_weight: 10.0,
            rho_init: 10.0,
            incentive_gain: 0.04,
            eps_abs: 1e-4,
            eps_rel: 1e-2,
            bisect_tol: 1e-3,
            rho_scale: 2.0,
            rho_balance: 10.0,
            admm_max_iter: 500,
            sg_max_iter: 32,
        }
    }
}

/// Horizons (hours) and step lengths (minutes) of the three control layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeGrid {
    pub horizon_da_h: u32,
    pub horizon_bm_h: u32,
    pub step_da_min: u32,
    pub step_id_min: u32,
    pub step_rt_min: u32,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self {
            horizon_da_h: 24,
            horizon_bm_h: 4,
            step_da_min: 15,
            step_id_min: 5,
            step_rt_min: 1,
        }
    }
}

impl TimeGrid {
    /// Real-time steps per intra-day step.
    pub fn rt_per_id(&self) -> usize {
        (self.step_id_min / self.step_rt_min) as usize
    }

    /// Real-time steps per day-ahead step.
    pub fn rt_per_da(&self) -> usize {
        (self.step_da_min / self.step_rt_min) as usize
    }

    /// Real-time step length in hours.
    pub fn rt_hours(&self) -> f64 {
        self.step_rt_min as f64 / 60.0
    }
}

/// Numerical knobs of the benchmark solver and the metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Options {
    /// Power discretization of the centralized solver.
    pub quantum_kw: f64,
    /// Segments of the piecewise-linear stress derivative table.
    pub sf_segments: usize,
    /// Denominator floor of the per-unit fairness deviation.
    pub fairness_floor_kw: f64,
    /// Rated equivalent full cycles of the station battery.
    pub rated_cycles: f64,
    /// Incentive cap used by the heuristic schedule ($/kWh).
    pub incentive_cap: f64,
    /// Multiplier on the expected EV demand when the heuristic schedule sets
    /// the power budget; below 1 the station plans for scarcity.
    pub budget_factor: f64,
    /// Battery state-of-charge target of the heuristic schedule.
    pub bess_soc_ref: f64,
    /// Time constant for returning the battery to its target (minutes).
    pub bess_restore_min: f64,
    /// Fraction of battery capacity the heuristic schedule keeps clear of
    /// either end of the SoE window.
    pub bess_reserve: f64,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            quantum_kw: 0.5,
            sf_segments: 32,
            fairness_floor_kw: 1.0,
            rated_cycles: 5000.0,
            incentive_cap: 0.10,
            budget_factor: 1.0,
            bess_soc_ref: 0.5,
            bess_restore_min: 60.0,
            bess_reserve: 0.02,
        }
    }
}

/// Full configuration bundle.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub station: StationParams,
    pub hyper: Hyperparams,
    pub time: TimeGrid,
    pub options: Options,
}

fn check(cond: bool, field: &str, reason: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::invalid(field, reason))
    }
}

fn efficiency(value: f64, field: &str) -> Result<()> {
    check(value > 0.0 && value <= 1.0, field, "efficiency must lie in (0,1]")
}

fn positive(value: f64, field: &str) -> Result<()> {
    check(value.is_finite() && value > 0.0, field, "must be > 0")
}

impl StationParams {
    pub fn validate(&self) -> Result<()> {
        efficiency(self.eff_pv, "station.eff_pv")?;
        efficiency(self.eff_inv, "station.eff_inv")?;
        efficiency(self.eff_tr, "station.eff_tr")?;
        efficiency(self.eff_cp, "station.eff_cp")?;
        efficiency(self.eff_ch, "station.eff_ch")?;
        efficiency(self.eff_dh, "station.eff_dh")?;
        positive(self.c_rate, "station.c_rate")?;
        positive(self.bess_capacity_kwh, "station.bess_capacity_kwh")?;
        check(
            (0.0..=1.0).contains(&self.soc_min) && (0.0..=1.0).contains(&self.soc_max),
            "station.soc_min",
            "soc bounds must lie in [0,1]",
        )?;
        check(self.soc_min < self.soc_max, "station.soc_min", "soc_min < soc_max")?;
        positive(self.grid_limit_kw, "station.grid_limit_kw")?;
        positive(self.column_limit_kw, "station.column_limit_kw")?;
        check(self.n_columns > 0, "station.n_columns", "must be > 0")?;
        check(self.plugs_per_column > 0, "station.plugs_per_column", "must be > 0")?;
        positive(self.pv_peak_kw, "station.pv_peak_kw")?;
        positive(self.bess_price_per_kwh, "station.bess_price_per_kwh")?;
        check(
            self.bess_eol_fraction > 0.0 && self.bess_eol_fraction < 1.0,
            "station.bess_eol_fraction",
            "must lie in (0,1)",
        )
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        positive(self.rho_init, "hyper.rho_init")?;
        positive(self.eps_abs, "hyper.eps_abs")?;
        positive(self.eps_rel, "hyper.eps_rel")?;
        positive(self.bisect_tol, "hyper.bisect_tol")?;
        check(self.rho_scale > 1.0, "hyper.rho_scale", "tau_rho>1")?;
        check(self.rho_balance > 1.0, "hyper.rho_balance", "mu>1")?;
        check(self.shortfall_weight >= 0.0, "hyper.shortfall_weight", "beta>=0")?;
        check(self.stress_weight >= 0.0, "hyper.stress_weight", "gamma>=0")?;
        positive(self.incentive_gain, "hyper.incentive_gain")?;
        check(
            self.sf_base > 0.0,
            "hyper.sf_base",
            "stress function must be positive at zero power",
        )?;
        check(self.sf_scale >= 0.0, "hyper.sf_scale", "must be >= 0")?;
        check(self.sf_growth >= 0.0, "hyper.sf_growth", "must be >= 0")?;
        check(self.slack_cost >= 0.0, "hyper.slack_cost", "must be >= 0")?;
        check(self.admm_max_iter > 0, "hyper.admm_max_iter", "must be > 0")?;
        check(self.sg_max_iter > 0, "hyper.sg_max_iter", "must be > 0")
    }
}

impl TimeGrid {
    pub fn validate(&self) -> Result<()> {
        check(self.step_rt_min > 0, "time.step_rt_min", "must be > 0")?;
        check(
            self.step_id_min > 0 && self.step_id_min.is_multiple_of(self.step_rt_min),
            "time.step_id_min",
            "dt_rt divides dt_id",
        )?;
        check(
            self.step_da_min > 0 && self.step_da_min.is_multiple_of(self.step_id_min),
            "time.step_da_min",
            "dt_id divides dt_da",
        )?;
        check(
            self.horizon_da_h > 0 && (self.horizon_da_h * 60).is_multiple_of(self.step_da_min),
            "time.horizon_da_h",
            "horizon must be a multiple of dt_da",
        )?;
        check(
            self.horizon_bm_h > 0 && (self.horizon_bm_h * 60).is_multiple_of(self.step_id_min),
            "time.horizon_bm_h",
            "horizon must be a multiple of dt_id",
        )
    }
}

impl Options {
    pub fn validate(&self) -> Result<()> {
        positive(self.quantum_kw, "options.quantum_kw")?;
        check(self.sf_segments > 0, "options.sf_segments", "must be > 0")?;
        positive(self.fairness_floor_kw, "options.fairness_floor_kw")?;
        positive(self.rated_cycles, "options.rated_cycles")?;
        check(
            self.incentive_cap.is_finite() && self.incentive_cap >= 0.0,
            "options.incentive_cap",
            "must be >= 0",
        )?;
        check(
            self.budget_factor.is_finite() && self.budget_factor >= 0.0,
            "options.budget_factor",
            "must be >= 0",
        )?;
        check(
            (0.0..=1.0).contains(&self.bess_soc_ref),
            "options.bess_soc_ref",
            "0 <= bess_soc_ref <= 1",
        )?;
        positive(self.bess_restore_min, "options.bess_restore_min")?;
        check(
            (0.0..0.5).contains(&self.bess_reserve),
            "options.bess_reserve",
            "0 <= bess_reserve < 0.5",
        )
    }
}

impl Config {
    /// Checks every invariant and reports the first violation.
    pub fn validate(&self) -> Result<()> {
        self.station.validate()?;
        self.hyper.validate()?;
        self.time.validate()?;
        self.options.validate()
    }

    /// Consumes the bundle and returns it only if it is valid.
    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text)?;
        cfg.validated()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
