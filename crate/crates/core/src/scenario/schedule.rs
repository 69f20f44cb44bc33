use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::io::read_schedule_raw;
use super::Scenario;
use crate::config::Config;
use crate::curve::deliverable_power;
use crate::error::{Error, Result};
use crate::forecast::{elevation_series, rp_value};
use crate::types::ScheduleSlice;

/// Leader inputs at intra-day resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSeries {
    pub slices: Vec<ScheduleSlice>,
    /// Battery energy reference (kWh), one per slice.
    pub bess_soe_ref: Vec<f64>,
}

impl ScheduleSeries {
    pub fn validate(&self, expected: usize) -> Result<()> {
        if self.slices.len() != expected {
            return Err(Error::LengthMismatch {
                series: "schedule".into(),
                expected,
                found: self.slices.len(),
            });
        }
        if self.bess_soe_ref.len() != expected {
            return Err(Error::LengthMismatch {
                series: "bess_soe_ref".into(),
                expected,
                found: self.bess_soe_ref.len(),
            });
        }
        self.slices.iter().try_for_each(ScheduleSlice::validate)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleMode {
    File(PathBuf),
    Heuristic,
}

/// PV forecast issued at the start of each day-ahead step from the last
/// realized minute, scaled by the sun elevation.
pub fn pv_forecast(scenario: &Scenario, config: &Config) -> Vec<f64> {
    let n = scenario.steps();
    let block = config.time.rt_per_da();
    let elev = elevation_series(&scenario.site, scenario.date, n * config.time.step_rt_min as usize);
    let elev_at = |k: usize| elev[k * config.time.step_rt_min as usize];
    (0..n)
        .map(|m| {
            let t0 = m - m % block;
            if t0 == 0 {
                0.0
            } else {
                rp_value(scenario.pv_real[t0 - 1], elev_at(m), elev_at(t0 - 1))
            }
        })
        .collect()
}

/// Fleet demand (kW at the vehicles) if every session charged at its curve
/// from arrival until its request is met.
fn expected_demand(scenario: &Scenario, config: &Config) -> Vec<f64> {
    let dt = config.time.step_rt_min as f64;
    let h = dt / 60.0;
    let mut demand = vec![0.0; scenario.steps()];
    for s in &scenario.sessions {
        let curve = s.curve();
        let mut soc = s.soc_arrival;
        let mut remaining = s.energy_kwh;
        let first = (s.arrival as f64 / dt).ceil() as usize;
        let last = ((s.departure as f64 / dt).ceil() as usize).min(demand.len());
        for slot in demand.iter_mut().take(last).skip(first) {
            if remaining <= 1e-9 {
                break;
            }
            let p = deliverable_power(&curve, soc, remaining / h, h, s.capacity_kwh);
            *slot += p;
            remaining -= p * h;
            soc += p * h / s.capacity_kwh;
        }
    }
    demand
}

/// Stand-in for the day-ahead and intra-day layers.
///
/// The budget follows the expected fleet demand (scaled by
/// `options.budget_factor`) averaged over each intra-day step, capped by what
/// grid and battery can supply; the battery shaves grid excess and otherwise
/// relaxes toward a flat state-of-charge reference.
pub fn heuristic_schedule(scenario: &Scenario, config: &Config) -> Result<ScheduleSeries> {
    let st = &config.station;
    let time = &config.time;
    let opt = &config.options;
    let per_id = time.rt_per_id();
    let per_da = time.rt_per_da();
    let n = scenario.steps();
    if !n.is_multiple_of(per_id) {
        return Err(Error::invalid("schedule", "scenario length is not a multiple of dt_id"));
    }
    let demand = expected_demand(scenario, config);
    let pv_fc = pv_forecast(scenario, config);
    let id_h = time.step_id_min as f64 / 60.0;
    let bess_max = st.bess_power_kw();
    let budget_cap = st.eff_tr * st.grid_limit_kw + bess_max * st.eff_dh * st.eff_inv;
    let soe_ref = opt.bess_soc_ref * st.bess_capacity_kwh;
    let reserve = opt.bess_reserve * st.bess_capacity_kwh;
    let (soe_lo, soe_hi) = (
        st.soc_min * st.bess_capacity_kwh + reserve,
        st.soc_max * st.bess_capacity_kwh - reserve,
    );
    let mut soe = soe_ref;

    let mut slices = Vec::with_capacity(n / per_id);
    let mut refs = Vec::with_capacity(n / per_id);
    for k in 0..n / per_id {
        let window = k * per_id..(k + 1) * per_id;
        let mean = |s: &[f64]| s[window.clone()].iter().sum::<f64>() / per_id as f64;
        let c = (opt.budget_factor * mean(&demand) / st.eff_cp).clamp(0.0, budget_cap);
        let pv = mean(&pv_fc) * st.eff_pv;

        let grid_need = (c - pv) / st.eff_tr;
        let mut bess = if grid_need > st.grid_limit_kw {
            -(grid_need - st.grid_limit_kw) * st.eff_tr
        } else {
            (soe_ref - soe) / (opt.bess_restore_min / 60.0)
        };
        bess = bess.clamp(-bess_max, bess_max);
        // Keep the planned energy inside the operating window.
        let next = if bess >= 0.0 {
            soe + bess * st.eff_ch * id_h
        } else {
            soe + bess / st.eff_dh * id_h
        };
        if next > soe_hi {
            bess = (soe_hi - soe).max(0.0) / (st.eff_ch * id_h);
        } else if next < soe_lo {
            bess = -(soe - soe_lo).max(0.0) * st.eff_dh / id_h;
        }
        soe += if bess >= 0.0 {
            bess * st.eff_ch * id_h
        } else {
            bess / st.eff_dh * id_h
        };

        let c = c.min((st.grid_limit_kw * st.eff_tr + pv - bess).max(0.0));
        let p_dp = ((c + bess - pv) / st.eff_tr).clamp(-st.grid_limit_kw, st.grid_limit_kw);
        let da = k * per_id / per_da;
        slices.push(ScheduleSlice {
            c_budget: c,
            p_bess_setpoint: bess,
            d_cap: opt.incentive_cap,
            s_min: -c,
            s_max: (st.grid_limit_kw * st.eff_tr - c).max(0.0),
            tariff_ev: scenario.tariff_ev[da],
            price_dam: scenario.price_dam[da],
            price_short: scenario.price_short[da],
            price_long: scenario.price_long[da],
            p_dp,
        });
        refs.push(soe_ref);
    }
    Ok(ScheduleSeries {
        slices,
        bess_soe_ref: refs,
    })
}

/// Schedule for a scenario: read from a file, or built by the heuristic.
///
/// A file without `dp_kw` gets the planned grid exchange implied by its
/// budget, battery setpoint and the PV forecast.
pub fn schedule_provider(scenario: &Scenario, mode: &ScheduleMode, config: &Config) -> Result<ScheduleSeries> {
    let expected = scenario.steps() / config.time.rt_per_id();
    let series = match mode {
        ScheduleMode::Heuristic => heuristic_schedule(scenario, config)?,
        ScheduleMode::File(path) => {
            let raw = read_schedule_raw(path, config.time.step_id_min)?;
            let mut slices = raw.slices;
            if slices.len() != expected {
                return Err(Error::LengthMismatch {
                    series: "schedule".into(),
                    expected,
                    found: slices.len(),
                });
            }
            if !raw.dp_given {
                let st = &config.station;
                let per_id = config.time.rt_per_id();
                let pv = pv_forecast(scenario, config);
                for (k, s) in slices.iter_mut().enumerate() {
                    let mean_pv = pv[k * per_id..(k + 1) * per_id].iter().sum::<f64>() / per_id as f64;
                    s.p_dp = ((s.c_budget + s.p_bess_setpoint - mean_pv * st.eff_pv) / st.eff_tr)
                        .clamp(-st.grid_limit_kw, st.grid_limit_kw);
                }
            }
            let soe = config.options.bess_soc_ref * config.station.bess_capacity_kwh;
            ScheduleSeries {
                bess_soe_ref: raw.soe_ref.unwrap_or_else(|| vec![soe; slices.len()]),
                slices,
            }
        }
    };
    series.validate(expected)?;
    Ok(series)
}
