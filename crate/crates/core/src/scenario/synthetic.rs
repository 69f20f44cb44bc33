use chrono::NaiveDate;
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{assign_plugs, Scenario};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::forecast::{elevation_series, Site};
use crate::types::EvSession;

/// One mode of the arrival-time mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrivalPeak {
    pub mean_h: f64,
    pub sd_h: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_sessions: usize,
    pub date: NaiveDate,
    pub site: Site,
    pub days: usize,
    pub arrivals: Vec<ArrivalPeak>,
    pub dwell_mean_min: f64,
    pub dwell_sd_min: f64,
    pub dwell_min_min: f64,
    /// Battery sizes (kWh) and their weights.
    pub capacity_mix: Vec<(f64, f64)>,
    pub soc_arrival: (f64, f64),
    /// Range of the target state of charge; the request is the gap to it.
    pub soc_target: (f64, f64),
    /// Standard deviation of the multiplicative cloud factor.
    pub pv_noise: f64,
    pub tariff_ev: f64,
    pub dam_base: f64,
    pub dam_peak: f64,
    /// Plug assignment attempts per session before giving up.
    pub retries: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_sessions: 30,
            date: NaiveDate::from_ymd_opt(2024, 11, 29).unwrap(),
            site: Site::default(),
            days: 1,
            arrivals: vec![
                ArrivalPeak {
                    mean_h: 8.5,
                    sd_h: 1.5,
                    weight: 0.55,
                },
                ArrivalPeak {
                    mean_h: 14.0,
                    sd_h: 2.5,
                    weight: 0.45,
                },
            ],
            dwell_mean_min: 90.0,
            dwell_sd_min: 40.0,
            dwell_min_min: 20.0,
            capacity_mix: vec![(40.0, 0.15), (60.0, 0.35), (75.0, 0.3), (100.0, 0.2)],
            soc_arrival: (0.1, 0.6),
            soc_target: (0.8, 1.0),
            pv_noise: 0.08,
            tariff_ev: 0.45,
            dam_base: 0.12,
            dam_peak: 0.08,
            retries: 50,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        if self.days == 0 {
            return Err(Error::invalid("synthetic.days", "must be >= 1"));
        }
        if self.arrivals.is_empty() || self.arrivals.iter().any(|a| !(a.weight > 0.0 && a.sd_h > 0.0)) {
            return Err(Error::invalid(
                "synthetic.arrivals",
                "need positive weights and spreads",
            ));
        }
        if self.capacity_mix.is_empty() || self.capacity_mix.iter().any(|&(c, w)| !(c > 0.0 && w > 0.0)) {
            return Err(Error::invalid(
                "synthetic.capacity_mix",
                "need positive sizes and weights",
            ));
        }
        let (a0, a1) = self.soc_arrival;
        let (t0, t1) = self.soc_target;
        if !(0.0 <= a0 && a0 <= a1 && a1 <= t0 && t0 <= t1 && t1 <= 1.0) {
            return Err(Error::invalid(
                "synthetic.soc_target",
                "need 0 <= soc_arrival <= soc_target <= 1",
            ));
        }
        if !(self.dwell_min_min > 0.0 && self.dwell_sd_min >= 0.0 && self.pv_noise >= 0.0) {
            return Err(Error::invalid(
                "synthetic.dwell",
                "dwell and noise must be non-negative",
            ));
        }
        Ok(())
    }
}

/// Clear-sky irradiance (W/m2) from the solar elevation.
fn clear_sky(elev_deg: f64) -> f64 {
    let s = elev_deg.to_radians().sin();
    if s <= 0.0 {
        0.0
    } else {
        1098.0 * s * (-0.057 / s).exp()
    }
}

/// Deterministic scenario for a seed: bimodal arrivals, a battery-size mix,
/// first-fit plugs, clear-sky PV with a seeded cloud factor, and smooth
/// day-ahead prices with imbalance spreads.
pub fn generate_synthetic(seed: u64, syn: &SyntheticConfig, config: &Config) -> Result<Scenario> {
    syn.validate()?;
    let station = &config.station;
    let time = &config.time;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let minutes = syn.days * 1440;
    let rt = time.step_rt_min as usize;
    let steps = minutes / rt;

    let peaks = WeightedIndex::new(syn.arrivals.iter().map(|a| a.weight))
        .map_err(|e| Error::invalid("synthetic.arrivals", e.to_string()))?;
    let sizes = WeightedIndex::new(syn.capacity_mix.iter().map(|c| c.1))
        .map_err(|e| Error::invalid("synthetic.capacity_mix", e.to_string()))?;
    let dwell = Normal::new(syn.dwell_mean_min, syn.dwell_sd_min)
        .map_err(|e| Error::invalid("synthetic.dwell", e.to_string()))?;

    let mut sessions: Vec<EvSession> = Vec::with_capacity(syn.n_sessions * syn.days);
    let mut id = 1u32;
    for day in 0..syn.days {
        for _ in 0..syn.n_sessions {
            let mut placed = false;
            for _ in 0..=syn.retries {
                let peak = syn.arrivals[peaks.sample(&mut rng)];
                let hour = Normal::new(peak.mean_h, peak.sd_h).unwrap().sample(&mut rng);
                let stay = dwell.sample(&mut rng).max(syn.dwell_min_min);
                let day_start = (day * 1440) as f64;
                let arrival = (day_start + (hour * 60.0).clamp(0.0, 1439.0)).round() as u32;
                let departure = ((arrival as f64 + stay).round() as u32).min(minutes as u32);
                let capacity = syn.capacity_mix[sizes.sample(&mut rng)].0;
                let soc0 = rng.random_range(syn.soc_arrival.0..=syn.soc_arrival.1);
                let target = rng.random_range(syn.soc_target.0..=syn.soc_target.1);
                if departure <= arrival {
                    continue;
                }
                let candidate = EvSession {
                    id,
                    arrival,
                    departure,
                    capacity_kwh: capacity,
                    soc_arrival: soc0,
                    energy_kwh: capacity * (target - soc0).max(0.0),
                    rated_kw: EvSession::default_rated_kw(capacity),
                    column: 0,
                    plug: 0,
                    curve: None,
                };
                sessions.push(candidate);
                if assign_plugs(&mut sessions, station).is_ok() {
                    placed = true;
                    break;
                }
                sessions.pop();
            }
            if !placed {
                return Err(Error::Infeasible(format!(
                    "could not place session {id} within {} plugs after {} attempts",
                    station.n_plugs(),
                    syn.retries + 1
                )));
            }
            id += 1;
        }
    }
    sessions.sort_by_key(|s| (s.arrival, s.id));
    assign_plugs(&mut sessions, station)?;

    let elev = elevation_series(&syn.site, syn.date, minutes);
    let mut cloud = 1.0f64;
    let noise = Normal::new(0.0, syn.pv_noise.max(f64::MIN_POSITIVE)).unwrap();
    let pv_real: Vec<f64> = (0..steps)
        .map(|k| {
            cloud = (0.97 * cloud + 0.03 + 0.2 * noise.sample(&mut rng)).clamp(0.2, 1.05);
            station.pv_peak_kw * clear_sky(elev[k * rt]) / 1000.0 * cloud
        })
        .collect();

    let n_da = minutes / time.step_da_min as usize;
    let mut price_dam = Vec::with_capacity(n_da);
    let mut price_short = Vec::with_capacity(n_da);
    let mut price_long = Vec::with_capacity(n_da);
    for k in 0..n_da {
        let hour = (k * time.step_da_min as usize % 1440) as f64 / 60.0;
        let shape = (-(hour - 8.0).powi(2) / 4.0).exp() + (-(hour - 19.0).powi(2) / 6.0).exp();
        let dam = (syn.dam_base + syn.dam_peak * shape + rng.random_range(-0.01..0.01)).max(0.0);
        price_dam.push(dam);
        price_short.push(dam * rng.random_range(1.1..1.6));
        price_long.push(dam * rng.random_range(0.4..0.9));
    }

    let scenario = Scenario {
        date: syn.date,
        site: syn.site,
        pv_real,
        price_dam,
        price_short,
        price_long,
        tariff_ev: vec![syn.tariff_ev; n_da],
        sessions,
    };
    scenario.validate(station, time)?;
    Ok(scenario)
}
