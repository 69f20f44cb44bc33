//! Short-horizon forecasts: sun-elevation-scaled PV persistence, empirical
//! persistence bands, and one-day persistence for price series.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

/// Station location and the offset of its local clock from UTC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Site {
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub utc_offset_h: f64,
}

impl Default for Site {
    fn default() -> Self {
        Self {
            lat_deg: 46.52,
            lon_deg: 6.55,
            utc_offset_h: 1.0,
        }
    }
}

/// Solar elevation (degrees) at a local clock minute of the given day, from
/// the Fourier-series approximation of declination and equation of time.
pub fn sun_elevation(site: &Site, date: NaiveDate, local_minute: f64) -> f64 {
    let doy = date.ordinal() as f64;
    let utc_hour = local_minute / 60.0 - site.utc_offset_h;
    let g = 2.0 * std::f64::consts::PI / 365.0 * (doy - 1.0 + (utc_hour - 12.0) / 24.0);
    let eqtime = 229.18
        * (0.000075 + 0.001868 * g.cos()
            - 0.032077 * g.sin()
            - 0.014615 * (2.0 * g).cos()
            - 0.040849 * (2.0 * g).sin());
    let decl = 0.006918 - 0.399912 * g.cos() + 0.070257 * g.sin() - 0.006758 * (2.0 * g).cos()
        + 0.000907 * (2.0 * g).sin()
        - 0.002697 * (3.0 * g).cos()
        + 0.00148 * (3.0 * g).sin();
    let true_solar = local_minute + eqtime + 4.0 * site.lon_deg - 60.0 * site.utc_offset_h;
    let hour_angle = (true_solar / 4.0 - 180.0).to_radians();
    let lat = site.lat_deg.to_radians();
    let cos_zenith = lat.sin() * decl.sin() + lat.cos() * decl.cos() * hour_angle.cos();
    90.0 - cos_zenith.clamp(-1.0, 1.0).acos().to_degrees()
}

/// Elevation at every minute of a day starting at local midnight.
pub fn elevation_series(site: &Site, date: NaiveDate, minutes: usize) -> Vec<f64> {
    (0..minutes)
        .map(|m| {
            let day = date + chrono::Days::new((m / 1440) as u64);
            sun_elevation(site, day, (m % 1440) as f64)
        })
        .collect()
}

/// One-step scaled persistence `p_prev * elev_now / elev_prev`, floored at 0;
/// zero when the sun was below the horizon.
pub fn rp_value(p_prev: f64, elev_now: f64, elev_prev: f64) -> f64 {
    if elev_prev <= 0.0 {
        return 0.0;
    }
    (p_prev * elev_now / elev_prev).max(0.0)
}

/// Forecast for the next minutes given the elevation at each of them.
pub fn rp_forecast(p_prev: f64, elev_prev: f64, elev_next: &[f64]) -> Vec<f64> {
    elev_next.iter().map(|&e| rp_value(p_prev, e, elev_prev)).collect()
}

/// `(max(0, p + q05), p, p + q95)`.
pub fn persistence_bounds(p_prev: f64, q05: f64, q95: f64) -> (f64, f64, f64) {
    ((p_prev + q05).max(0.0), p_prev, p_prev + q95)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    match sorted.get(i + 1) {
        Some(&next) => sorted[i] + frac * (next - sorted[i]),
        None => sorted[i],
    }
}

/// 5% and 95% quantiles of the one-step persistence error of a series,
/// widened to contain zero.
pub fn persistence_error_quantiles(series: &[f64]) -> (f64, f64) {
    let mut errors: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    if errors.is_empty() {
        return (0.0, 0.0);
    }
    errors.sort_by(f64::total_cmp);
    (quantile(&errors, 0.05).min(0.0), quantile(&errors, 0.95).max(0.0))
}

/// Value one period earlier; the first period repeats itself.
pub fn period_persistence(series: &[f64], period: usize) -> Vec<f64> {
    (0..series.len())
        .map(|t| if t >= period { series[t - period] } else { series[t] })
        .collect()
}
