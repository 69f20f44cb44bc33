//! Vehicle surrogate model: power-vs-SoC curves, the stress function that
//! penalizes charging above the requested power, and SoC integration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Hyperparams;
use crate::error::{Error, Result};

/// Piecewise-linear maximum charging power as a function of SoC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSocCurve {
    /// `(soc, p_max_kw)` pairs, strictly increasing in SoC from 0 to 1.
    breakpoints: Vec<(f64, f64)>,
}

impl PowerSocCurve {
    pub fn new(breakpoints: Vec<(f64, f64)>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::invalid("curve", "needs at least two breakpoints"));
        }
        if breakpoints[0].0 != 0.0 || breakpoints[breakpoints.len() - 1].0 != 1.0 {
            return Err(Error::invalid("curve", "breakpoints must cover soc [0,1]"));
        }
        if breakpoints.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::invalid("curve", "soc must be strictly increasing"));
        }
        if breakpoints.iter().any(|&(_, p)| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::invalid("curve", "p_max must be finite and >= 0"));
        }
        Ok(Self { breakpoints })
    }

    /// Constant power up to 80 % SoC, then a linear taper to zero at full.
    pub fn cc_cv(rated_kw: f64) -> Self {
        Self {
            breakpoints: vec![(0.0, rated_kw), (0.8, rated_kw), (1.0, 0.0)],
        }
    }

    /// Same power at every SoC.
    pub fn flat(rated_kw: f64) -> Self {
        Self {
            breakpoints: vec![(0.0, rated_kw), (1.0, rated_kw)],
        }
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    /// Largest power over the whole SoC range.
    pub fn max_power(&self) -> f64 {
        self.breakpoints.iter().map(|&(_, p)| p).fold(0.0, f64::max)
    }

    pub fn eval(&self, soc: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&soc) {
            return Err(Error::invalid("soc", format!("{soc} outside [0,1]")));
        }
        Ok(self.value(soc))
    }

    /// Interpolated power; `soc` is clamped into [0,1].
    pub fn value(&self, soc: f64) -> f64 {
        let soc = soc.clamp(0.0, 1.0);
        let idx = self.breakpoints.partition_point(|&(s, _)| s <= soc);
        if idx == 0 {
            return self.breakpoints[0].1;
        }
        if idx == self.breakpoints.len() {
            return self.breakpoints[idx - 1].1;
        }
        let (s0, p0) = self.breakpoints[idx - 1];
        let (s1, p1) = self.breakpoints[idx];
        p0 + (p1 - p0) * (soc - s0) / (s1 - s0)
    }

    /// Reads `soc,p_max` rows (header required).
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "soc" || &headers[1] != "p_max" {
            return Err(Error::schema(path, "expected header `soc,p_max`"));
        }
        let mut points = Vec::new();
        for row in reader.deserialize() {
            let (soc, p): (f64, f64) = row?;
            points.push((soc, p));
        }
        Self::new(points).map_err(|e| Error::schema(path, e.to_string()))
    }
}

/// Convex increasing penalty of the charging power,
/// `SF(p) = base + scale * (exp(100 * growth * p / p_ref) - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StressFunction {
    pub growth: f64,
    pub base: f64,
    pub scale: f64,
    /// Normalization power, the vehicle's curve maximum.
    pub p_ref: f64,
}

impl StressFunction {
    pub fn new(hp: &Hyperparams, p_ref: f64) -> Self {
        Self {
            growth: hp.sf_growth,
            base: hp.sf_base,
            scale: hp.sf_scale,
            p_ref,
        }
    }

    fn rate(&self) -> f64 {
        100.0 * self.growth / self.p_ref
    }

    /// Stress value; callers guarantee `p >= 0`.
    #[inline]
    pub fn value(&self, p: f64) -> f64 {
        self.base + self.scale * (self.rate() * p).exp_m1()
    }

    /// Analytic derivative; callers guarantee `p >= 0`.
    #[inline]
    pub fn slope(&self, p: f64) -> f64 {
        let k = self.rate();
        self.scale * k * (k * p).exp()
    }

    pub fn eval(&self, p: f64) -> Result<f64> {
        if !(p >= 0.0) {
            return Err(Error::invalid("p", "stress function needs p >= 0"));
        }
        Ok(self.value(p))
    }

    pub fn derivative(&self, p: f64) -> Result<f64> {
        if !(p >= 0.0) {
            return Err(Error::invalid("p", "stress function needs p >= 0"));
        }
        Ok(self.slope(p))
    }

    /// Tabulates the stress value on `[0, 2 * p_ref]`.
    pub fn value_table(&self, segments: usize) -> PiecewiseLinear {
        PiecewiseLinear::tabulate(|p| self.value(p), 2.0 * self.p_ref, segments)
    }

    /// Tabulates the stress derivative on `[0, 2 * p_ref]`.
    pub fn slope_table(&self, segments: usize) -> PiecewiseLinear {
        PiecewiseLinear::tabulate(|p| self.slope(p), 2.0 * self.p_ref, segments)
    }
}

/// Uniform-grid linear interpolant on `[0, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    step: f64,
    values: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn tabulate(f: impl Fn(f64) -> f64, upper: f64, segments: usize) -> Self {
        let step = upper / segments as f64;
        let values = (0..=segments).map(|i| f(i as f64 * step)).collect();
        Self { step, values }
    }

    pub fn segments(&self) -> usize {
        self.values.len() - 1
    }

    /// Interpolated value; beyond the table the last segment is extended.
    pub fn eval(&self, x: f64) -> f64 {
        let pos = (x / self.step).max(0.0);
        let i = (pos.floor() as usize).min(self.segments() - 1);
        let t = pos - i as f64;
        self.values[i] + t * (self.values[i + 1] - self.values[i])
    }
}

/// Result of integrating a power schedule through the charging curve.
#[derive(Debug, Clone, PartialEq)]
pub struct SocTrajectory {
    /// SoC after each step.
    pub soc: Vec<f64>,
    /// Cumulative delivered energy after each step (kWh).
    pub energy: Vec<f64>,
    /// Power actually delivered in each step (kW).
    pub delivered: Vec<f64>,
}

/// Delivered power for one step: the schedule capped by the curve and by the
/// energy left before the battery is full.
pub fn deliverable_power(curve: &PowerSocCurve, soc: f64, p_sched: f64, hours: f64, capacity_kwh: f64) -> f64 {
    let headroom = (1.0 - soc).max(0.0) * capacity_kwh / hours;
    p_sched.min(curve.value(soc)).min(headroom).max(0.0)
}

/// Steps the SoC forward under a power schedule at `dt_min` resolution.
pub fn integrate_soc(
    curve: &PowerSocCurve,
    soc0: f64,
    p_sched: &[f64],
    dt_min: f64,
    capacity_kwh: f64,
) -> Result<SocTrajectory> {
    if !(capacity_kwh > 0.0) {
        return Err(Error::invalid("capacity_kwh", "must be > 0"));
    }
    if !(0.0..=1.0).contains(&soc0) {
        return Err(Error::invalid("soc0", "must lie in [0,1]"));
    }
    if p_sched.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::invalid("p_sched", "powers must be >= 0"));
    }
    let hours = dt_min / 60.0;
    let mut soc = soc0;
    let mut energy = 0.0;
    let mut out = SocTrajectory {
        soc: Vec::with_capacity(p_sched.len()),
        energy: Vec::with_capacity(p_sched.len()),
        delivered: Vec::with_capacity(p_sched.len()),
    };
    for &p in p_sched {
        let delivered = deliverable_power(curve, soc, p, hours, capacity_kwh);
        soc = (soc + delivered * hours / capacity_kwh).min(1.0);
        energy += delivered * hours;
        out.soc.push(soc);
        out.energy.push(energy);
        out.delivered.push(delivered);
    }
    Ok(out)
}
