//! Domain records shared by the controllers, the simulator and the metrics.

use serde::{Deserialize, Serialize};

use crate::curve::PowerSocCurve;
use crate::error::{Error, Result};

/// Leader inputs for one control step, held constant over an intra-day step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSlice {
    /// Power budget for the EV fleet at the coupling bus (kW).
    pub c_budget: f64,
    /// Battery setpoint (kW, charge positive).
    pub p_bess_setpoint: f64,
    /// Incentive cap ($/kWh).
    pub d_cap: f64,
    /// Most negative admissible leader slack (kW, <= 0).
    pub s_min: f64,
    /// Largest admissible leader slack (kW, >= 0).
    pub s_max: f64,
    pub tariff_ev: f64,
    pub price_dam: f64,
    pub price_short: f64,
    pub price_long: f64,
    /// Planned grid exchange committed day-ahead (kW, import positive).
    pub p_dp: f64,
}

impl ScheduleSlice {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.c_budget,
            self.p_bess_setpoint,
            self.d_cap,
            self.s_min,
            self.s_max,
            self.tariff_ev,
            self.price_dam,
            self.price_short,
            self.price_long,
            self.p_dp,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("slice", "all values must be finite"));
        }
        if self.s_min > 0.0 || self.s_max < 0.0 {
            return Err(Error::invalid("slice.s_min", "s_min <= 0 <= s_max"));
        }
        if self.d_cap < 0.0 {
            return Err(Error::invalid("slice.d_cap", "d_cap >= 0"));
        }
        if self.c_budget < 0.0 {
            return Err(Error::invalid("slice.c_budget", "c_budget >= 0"));
        }
        Ok(())
    }
}

/// One vehicle's booking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvSession {
    pub id: u32,
    /// First connected minute.
    pub arrival: u32,
    /// First minute after disconnection.
    pub departure: u32,
    pub capacity_kwh: f64,
    pub soc_arrival: f64,
    pub energy_kwh: f64,
    /// Rated charging power; defines the default charging curve.
    pub rated_kw: f64,
    pub column: usize,
    pub plug: usize,
    /// Measured power-vs-SoC curve; the default CC-CV shape is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<PowerSocCurve>,
}

impl EvSession {
    /// Default rated power for a battery of the given size.
    pub fn default_rated_kw(capacity_kwh: f64) -> f64 {
        (1.5 * capacity_kwh).clamp(50.0, 150.0)
    }

    pub fn curve(&self) -> PowerSocCurve {
        self.curve
            .clone()
            .unwrap_or_else(|| PowerSocCurve::cc_cv(self.rated_kw))
    }

    pub fn is_connected(&self, minute: u32) -> bool {
        minute >= self.arrival && minute < self.departure
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str| format!("session {}: {name}", self.id);
        if self.arrival >= self.departure {
            return Err(Error::invalid(field("arrival"), "arrival < departure"));
        }
        if !(0.0..=1.0).contains(&self.soc_arrival) {
            return Err(Error::invalid(field("soc_arrival"), "0 <= soc_arrival <= 1"));
        }
        if !(self.capacity_kwh > 0.0) {
            return Err(Error::invalid(field("capacity_kwh"), "must be > 0"));
        }
        if !(self.rated_kw > 0.0) {
            return Err(Error::invalid(field("rated_kw"), "must be > 0"));
        }
        if !(self.energy_kwh >= 0.0) || self.energy_kwh > self.capacity_kwh * (1.0 - self.soc_arrival) + 1e-9 {
            return Err(Error::invalid(
                field("energy_kwh"),
                "0 <= energy_request <= capacity * (1 - soc_arrival)",
            ));
        }
        Ok(())
    }
}

/// Live state of a connected vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvState {
    pub session: usize,
    pub id: u32,
    pub soc: f64,
    pub p_req: f64,
    pub p_max: f64,
    pub p_alloc: f64,
    pub theta: f64,
    pub energy_delivered: f64,
}

/// One control step's solution.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    /// Per-vehicle power (kW), in follower order.
    pub power: Vec<f64>,
    /// Per-vehicle incentive ($/kWh).
    pub theta: Vec<f64>,
    /// Signed leader slack (kW).
    pub slack: f64,
    pub lambda: f64,
    pub mu_cc: Vec<f64>,
    pub admm_iterations: usize,
    pub sg_iterations: usize,
    /// Inner solver met its stopping rule.
    pub converged: bool,
    /// Incentives within the cap and coupling satisfiable.
    pub feasible: bool,
}

impl Allocation {
    pub fn empty() -> Self {
        Self {
            converged: true,
            feasible: true,
            ..Self::default()
        }
    }
}
