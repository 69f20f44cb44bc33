//! Controller timing against the number of concurrently connected vehicles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::controller::Method;
use crate::error::{Error, Result};
use crate::metrics::{timing_report, TimingRow};
use crate::scenario::{assign_plugs, heuristic_schedule, Scenario};
use crate::sim::{simulate, TimingSample};
use crate::types::EvSession;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub min_evs: usize,
    pub max_evs: usize,
    /// Simulated minutes per fleet size; each yields one timing sample.
    pub minutes: usize,
    /// Budget as a fraction of expected demand; below 1 the controllers
    /// have to arbitrate.
    pub budget_factor: f64,
    pub seed: u64,
    pub methods: Vec<Method>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            min_evs: 1,
            max_evs: 20,
            minutes: 15,
            budget_factor: 0.6,
            seed: 7,
            methods: Method::ALL.to_vec(),
        }
    }
}

/// `n` vehicles plugged in for the whole window, nobody close to full.
pub fn sweep_scenario(n: usize, seed: u64, minutes: usize, config: &Config) -> Result<Scenario> {
    let st = &config.station;
    if n == 0 || n > st.n_plugs() {
        return Err(Error::invalid(
            "sweep.evs",
            format!("{n} vehicles for {} plugs", st.n_plugs()),
        ));
    }
    let per_da = config.time.rt_per_da();
    let steps = minutes.div_ceil(per_da).max(1) * per_da;
    let horizon = (steps * config.time.step_rt_min as usize) as u32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((n as u64) << 32));
    let mut sessions: Vec<EvSession> = (0..n)
        .map(|i| {
            let capacity = [40.0, 60.0, 75.0, 100.0][rng.random_range(0..4)];
            let soc = rng.random_range(0.1..0.5);
            EvSession {
                id: i as u32 + 1,
                arrival: 0,
                departure: horizon,
                capacity_kwh: capacity,
                soc_arrival: soc,
                energy_kwh: capacity * (0.95 - soc),
                rated_kw: EvSession::default_rated_kw(capacity),
                column: 0,
                plug: 0,
                curve: None,
            }
        })
        .collect();
    assign_plugs(&mut sessions, st)?;
    let n_da = steps / per_da;
    Ok(Scenario {
        date: chrono::NaiveDate::from_ymd_opt(2024, 11, 29).unwrap(),
        site: Default::default(),
        pv_real: vec![0.0; steps],
        price_dam: vec![0.12; n_da],
        price_short: vec![0.2; n_da],
        price_long: vec![0.05; n_da],
        tariff_ev: vec![0.45; n_da],
        sessions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub samples: Vec<(Method, TimingSample)>,
    pub table: Vec<TimingRow>,
}

/// Runs every method on fleets of `min_evs..=max_evs` vehicles, one method at
/// a time so that timings do not contend.
pub fn run_sweep(config: &Config, sweep: &SweepConfig) -> Result<SweepResult> {
    if sweep.min_evs == 0 || sweep.min_evs > sweep.max_evs || sweep.minutes == 0 {
        return Err(Error::invalid("sweep", "need 1 <= min_evs <= max_evs and minutes >= 1"));
    }
    let mut cfg = config.clone();
    cfg.options.budget_factor = sweep.budget_factor;
    let mut samples = Vec::new();
    for n in sweep.min_evs..=sweep.max_evs {
        let scenario = sweep_scenario(n, sweep.seed, sweep.minutes, &cfg)?;
        let schedule = heuristic_schedule(&scenario, &cfg)?;
        for &method in &sweep.methods {
            let trace = simulate(&scenario, &schedule, method, &cfg)?;
            samples.extend(
                trace
                    .timing
                    .into_iter()
                    .filter(|t| t.n_ev == n)
                    .take(sweep.minutes)
                    .map(|t| (method, t)),
            );
        }
    }
    let table = timing_report(samples.iter().map(|(m, t)| (*m, t)));
    Ok(SweepResult { samples, table })
}
