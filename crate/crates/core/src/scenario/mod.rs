//! Scenario data: PV realization, market prices, EV bookings, plus loading,
//! synthetic generation and the schedule provider.

mod io;
mod schedule;
mod synthetic;

pub(crate) use io::timestamp;
pub use io::{load_scenario, read_schedule_csv, write_scenario_dir, write_scenario_json, write_schedule_csv};
pub use schedule::{heuristic_schedule, pv_forecast, schedule_provider, ScheduleMode, ScheduleSeries};
pub use synthetic::{generate_synthetic, ArrivalPeak, SyntheticConfig};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::config::{StationParams, TimeGrid};
use crate::error::{Error, Result};
use crate::forecast::Site;
use crate::types::EvSession;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub date: NaiveDate,
    #[serde(default)]
    pub site: Site,
    /// Realized PV production (kW), one value per real-time step.
    pub pv_real: Vec<f64>,
    /// Prices ($/kWh), one value per day-ahead step.
    pub price_dam: Vec<f64>,
    pub price_short: Vec<f64>,
    pub price_long: Vec<f64>,
    pub tariff_ev: Vec<f64>,
    pub sessions: Vec<EvSession>,
}

/// Repeats each value `factor` times.
pub fn step_hold(series: &[f64], factor: usize) -> Vec<f64> {
    series.iter().flat_map(|&v| std::iter::repeat_n(v, factor)).collect()
}

impl Scenario {
    /// Simulated length in real-time steps.
    pub fn steps(&self) -> usize {
        self.pv_real.len()
    }

    pub fn price_series(&self) -> [(&'static str, &[f64]); 4] {
        [
            ("price_dam", &self.price_dam),
            ("price_short", &self.price_short),
            ("price_long", &self.price_long),
            ("tariff_ev", &self.tariff_ev),
        ]
    }

    pub fn validate(&self, station: &StationParams, time: &TimeGrid) -> Result<()> {
        let steps = self.steps();
        let per_da = time.rt_per_da();
        if steps == 0 || !steps.is_multiple_of(per_da) {
            return Err(Error::invalid(
                "pv_real",
                format!("length {steps} is not a positive multiple of {per_da}"),
            ));
        }
        for (name, series) in self.price_series() {
            if series.len() != steps / per_da {
                return Err(Error::LengthMismatch {
                    series: name.into(),
                    expected: steps / per_da,
                    found: series.len(),
                });
            }
            if series.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(name, "prices must be finite"));
            }
        }
        if self.pv_real.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("pv_real", "must be finite and >= 0"));
        }
        for s in &self.sessions {
            s.validate()?;
            if s.departure as usize > steps * time.step_rt_min as usize {
                return Err(Error::invalid(
                    format!("session {}: departure_min", s.id),
                    "beyond the scenario horizon",
                ));
            }
            if s.column >= station.n_columns || s.plug >= station.plugs_per_column {
                return Err(Error::invalid(
                    format!("session {}: plug", s.id),
                    format!("({}, {}) outside the station", s.column, s.plug),
                ));
            }
        }
        check_plugs(&self.sessions)
    }
}

/// Sessions sharing a plug must not overlap in time.
pub fn check_plugs(sessions: &[EvSession]) -> Result<()> {
    let mut order: Vec<&EvSession> = sessions.iter().collect();
    order.sort_by_key(|s| (s.column, s.plug, s.arrival, s.id));
    for w in order.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.column == b.column && a.plug == b.plug && b.arrival < a.departure {
            return Err(Error::PlugConflict {
                first: a.id,
                second: b.id,
                column: a.column,
                plug: a.plug,
            });
        }
    }
    Ok(())
}

/// Assigns plugs first-fit in arrival order, filling columns before plugs so
/// that vehicles spread over columns.
pub fn assign_plugs(sessions: &mut [EvSession], station: &StationParams) -> Result<()> {
    let mut order: Vec<usize> = (0..sessions.len()).collect();
    order.sort_by_key(|&i| (sessions[i].arrival, sessions[i].id));
    let mut free_at = vec![0u32; station.n_plugs()];
    for i in order {
        let s = &mut sessions[i];
        let slot = (0..free_at.len())
            .map(|k| (k % station.n_columns, k / station.n_columns))
            .position(|(c, p)| free_at[c * station.plugs_per_column + p] <= s.arrival)
            .ok_or_else(|| {
                Error::Infeasible(format!(
                    "session {} arrives at minute {} with all {} plugs busy",
                    s.id,
                    s.arrival,
                    free_at.len()
                ))
            })?;
        let (c, p) = (slot % station.n_columns, slot / station.n_columns);
        s.column = c;
        s.plug = p;
        free_at[c * station.plugs_per_column + p] = s.departure;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session(id: u32, arrival: u32, departure: u32) -> EvSession {
        EvSession {
            id,
            arrival,
            departure,
            capacity_kwh: 60.0,
            soc_arrival: 0.3,
            energy_kwh: 20.0,
            rated_kw: 90.0,
            column: 0,
            plug: 0,
            curve: None,
        }
    }

    #[test]
    fn step_hold_conserves_average() {
        let s = [1.0, 4.0, 2.5];
        let held = step_hold(&s, 15);
        assert_eq!(held.len(), 45);
        for (k, chunk) in held.chunks(15).enumerate() {
            assert_eq!(chunk.iter().sum::<f64>() / 15.0, s[k]);
        }
    }

    #[test]
    fn overlapping_plug_is_rejected() {
        let a = session(1, 0, 60);
        let b = session(2, 30, 90);
        match check_plugs(&[a.clone(), b.clone()]) {
            Err(Error::PlugConflict { first, second, .. }) => assert_eq!((first, second), (1, 2)),
            other => panic!("{other:?}"),
        }
        let mut c = b;
        c.arrival = 60;
        check_plugs(&[a, c]).unwrap();
    }

    #[test]
    fn first_fit_spreads_and_fails_when_full() {
        let station = StationParams::default();
        let mut ss: Vec<_> = (0..20).map(|i| session(i, 0, 100)).collect();
        assign_plugs(&mut ss, &station).unwrap();
        check_plugs(&ss).unwrap();
        assert_eq!((ss[1].column, ss[1].plug), (1, 0));
        ss.push(session(99, 50, 120));
        assert!(matches!(assign_plugs(&mut ss, &station), Err(Error::Infeasible(_))));
    }
}
