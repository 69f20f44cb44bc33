//! Real-time power dispatch between grid, battery and PV, and battery
//! state-of-energy bookkeeping.

use serde::{Deserialize, Serialize};

use crate::config::StationParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispatchResult {
    /// Grid import (kW, export negative).
    pub p_g: f64,
    /// Battery power (kW, charge positive).
    pub p_b: f64,
    pub pv_used: f64,
    /// Excess of `|p_g|` over the grid connection limit (kW).
    pub gcp_violation: f64,
    pub crate_clipped: bool,
    /// Conversion term moved through the grid when the battery clips, so that
    /// `p_g * eff_tr + pv * eff_pv - p_b - c + reroute = 0`.
    pub reroute: f64,
}

impl DispatchResult {
    /// Residual of the bus balance; zero up to rounding.
    pub fn balance(&self, c_total: f64, params: &StationParams) -> f64 {
        self.p_g * params.eff_tr + self.pv_used * params.eff_pv - self.p_b - c_total + self.reroute
    }
}

/// Grid takes the EV demand plus the battery setpoint net of PV, up to the
/// connection limit; the battery absorbs the rest within its C-rate, and
/// clipped battery power is moved back to the grid.
pub fn dispatch(c_total: f64, p_b_setpoint: f64, pv_real: f64, params: &StationParams) -> DispatchResult {
    let pv = pv_real * params.eff_pv;
    let mut p_g = params.grid_limit_kw.min((c_total + p_b_setpoint - pv) / params.eff_tr);
    let mut p_b = p_g * params.eff_tr + pv - c_total;
    let limit = params.bess_power_kw();
    let mut clipped = false;
    let mut reroute = 0.0;

    if p_b > limit {
        let dp = p_b - limit;
        p_b = limit;
        let k = params.eff_inv * params.eff_ch;
        p_g -= dp / (k * params.eff_tr);
        reroute = dp / k - dp;
        clipped = true;
    }
    if p_b < -limit {
        let dp = -limit - p_b;
        p_b = -limit;
        let k = params.eff_inv * params.eff_dh * params.eff_tr;
        p_g += dp * k;
        reroute = dp - dp * k * params.eff_tr;
        clipped = true;
    }
    DispatchResult {
        p_g,
        p_b,
        pv_used: pv_real,
        gcp_violation: (p_g.abs() - params.grid_limit_kw).max(0.0),
        crate_clipped: clipped,
        reroute,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BessState {
    pub soe: f64,
}

impl BessState {
    pub fn from_soc(soc: f64, params: &StationParams) -> Self {
        Self {
            soe: soc * params.bess_capacity_kwh,
        }
    }

    pub fn soc(&self, params: &StationParams) -> f64 {
        self.soe / params.bess_capacity_kwh
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoeStep {
    pub state: BessState,
    /// Battery power actually exchanged after the SoE clamp (kW).
    pub p_b: f64,
    /// Battery power sent back to the grid by the clamp (kW, same sign as the request).
    pub rerouted: f64,
}

/// Integrates battery power over `dt_min` minutes and clamps the SoE to its
/// operating window; the clamped part is reported as a grid reroute.
pub fn soe_step(state: BessState, p_b: f64, dt_min: f64, params: &StationParams) -> SoeStep {
    let h = dt_min / 60.0;
    let lo = params.soc_min * params.bess_capacity_kwh;
    let hi = params.soc_max * params.bess_capacity_kwh;
    let raw = if p_b >= 0.0 {
        state.soe + p_b * params.eff_ch * h
    } else {
        state.soe + p_b / params.eff_dh * h
    };
    let soe = raw.clamp(lo.min(state.soe), hi.max(state.soe));
    let p_actual = if soe == raw {
        p_b
    } else if p_b >= 0.0 {
        (soe - state.soe) / (params.eff_ch * h)
    } else {
        (soe - state.soe) * params.eff_dh / h
    };
    SoeStep {
        state: BessState { soe },
        p_b: p_actual,
        rerouted: p_b - p_actual,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nominal_hand_trace() {
        let params = StationParams::default();
        let r = dispatch(200.0, 0.0, 100.0, &params);
        assert!((r.p_g - 102.0 / 0.99).abs() < 1e-9);
        assert!(r.p_b.abs() < 1e-9);
        assert!(r.balance(200.0, &params).abs() < 1e-9);
    }

    #[test]
    fn idle_station() {
        let params = StationParams::default();
        let r = dispatch(0.0, 0.0, 0.0, &params);
        assert_eq!((r.p_g, r.p_b, r.gcp_violation), (0.0, 0.0, 0.0));
    }

    #[test]
    fn soe_clamp_at_top() {
        let params = StationParams::default();
        let s = soe_step(BessState { soe: 253.35 }, 506.7, 60.0, &params);
        assert!((s.state.soe - 0.9 * 506.7).abs() < 1e-9);
        assert!(s.rerouted > 0.0);
    }

    #[test]
    fn idle_battery_keeps_soe() {
        let params = StationParams::default();
        let s = soe_step(BessState { soe: 300.0 }, 0.0, 1.0, &params);
        assert_eq!(s.state.soe, 300.0);
        assert_eq!(s.rerouted, 0.0);
    }

    #[test]
    fn round_trip_loss() {
        let params = StationParams::default();
        let start = BessState { soe: 250.0 };
        let e = 60.0;
        let up = soe_step(start, e, 60.0, &params);
        let out = e * params.eff_ch * params.eff_dh;
        let down = soe_step(up.state, -out, 60.0, &params);
        assert!((down.state.soe - start.soe).abs() < 1e-9);
        assert!((e - out - e * (1.0 - params.eff_ch * params.eff_dh)).abs() < 1e-12);
    }

    #[test]
    fn charge_clip_hand_trace() {
        let params = StationParams::default();
        let r = dispatch(0.0, 600.0, 400.0, &params);
        let p_g0 = (600.0 - 400.0 * 0.98) / 0.99;
        let dp = p_g0 * 0.99 + 400.0 * 0.98 - 506.7;
        assert!(r.crate_clipped);
        assert!((r.p_b - 506.7).abs() < 1e-9);
        assert!((r.p_g - (p_g0 - dp / (0.98 * 0.95 * 0.99))).abs() < 1e-9);
        assert!(r.balance(0.0, &params).abs() < 1e-9);
    }

    #[test]
    fn discharge_clip_hand_trace() {
        let params = StationParams::default();
        let r = dispatch(1600.0, 0.0, 0.0, &params);
        let p_b0 = 954.5 * 0.99 - 1600.0;
        let dp = -506.7 - p_b0;
        assert!(r.crate_clipped && (r.p_b + 506.7).abs() < 1e-9);
        assert!((r.p_g - (954.5 + dp * 0.98 * 0.95 * 0.99)).abs() < 1e-9);
        assert!(r.gcp_violation > 0.0);
        assert!(r.balance(1600.0, &params).abs() < 1e-9);
    }
}
