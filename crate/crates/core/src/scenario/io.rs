use std::fs;
use std::path::Path;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::{assign_plugs, Scenario, ScheduleSeries};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::forecast::Site;
use crate::types::{EvSession, ScheduleSlice};

pub const TS_FORMAT: &str = "%Y-%m-%dT%H:%M";

pub(crate) fn timestamp(date: NaiveDate, minute: usize) -> String {
    (date.and_hms_opt(0, 0, 0).unwrap() + Duration::minutes(minute as i64))
        .format(TS_FORMAT)
        .to_string()
}

fn parse_ts(path: &Path, row: usize, text: &str) -> Result<NaiveDateTime> {
    NaiveDateTime::parse_from_str(text, TS_FORMAT)
        .map_err(|e| Error::schema(path, format!("row {row}: bad timestamp `{text}`: {e}")))
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::schema(path, e.to_string()))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn expect_headers(path: &Path, rdr: &mut csv::Reader<fs::File>, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers()?.clone();
    let found: Vec<&str> = headers.iter().collect();
    if found != expected {
        return Err(Error::schema(
            path,
            format!("expected header `{}`, found `{}`", expected.join(","), found.join(",")),
        ));
    }
    Ok(())
}

/// Reads a `ts,<column>` series with a fixed step; returns the start time and values.
fn read_series(path: &Path, column: &str, step_min: u32) -> Result<(NaiveDateTime, Vec<f64>)> {
    let mut rdr = reader(path)?;
    expect_headers(path, &mut rdr, &["ts", column])?;
    let mut start = None;
    let mut values = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let ts = parse_ts(path, row + 1, &rec[0])?;
        let t0 = *start.get_or_insert(ts);
        if ts != t0 + Duration::minutes(row as i64 * step_min as i64) {
            return Err(Error::schema(
                path,
                format!("row {}: timestamp {ts} breaks the {step_min}-minute grid", row + 1),
            ));
        }
        let v: f64 = rec[1]
            .parse()
            .map_err(|_| Error::schema(path, format!("row {}: `{}` is not a number", row + 1, &rec[1])))?;
        values.push(v);
    }
    let start = start.ok_or_else(|| Error::schema(path, "no data rows"))?;
    Ok((start, values))
}

fn write_series(path: &Path, column: &str, date: NaiveDate, step_min: u32, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["ts", column])?;
    for (k, v) in values.iter().enumerate() {
        w.write_record([timestamp(date, k * step_min as usize), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct SessionRow {
    id: u32,
    arrival_min: u32,
    departure_min: u32,
    capacity_kwh: f64,
    soc_arrival: f64,
    energy_kwh: f64,
    #[serde(default)]
    rated_kw: Option<f64>,
    #[serde(default)]
    cc: Option<usize>,
    #[serde(default)]
    cp: Option<usize>,
}

const SESSION_HEADER: [&str; 6] = [
    "id",
    "arrival_min",
    "departure_min",
    "capacity_kwh",
    "soc_arrival",
    "energy_kwh",
];

fn read_sessions(path: &Path, config: &Config) -> Result<Vec<EvSession>> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() < SESSION_HEADER.len() || headers.iter().zip(SESSION_HEADER).any(|(a, b)| a != b) {
        return Err(Error::schema(
            path,
            format!("header must start with `{}`", SESSION_HEADER.join(",")),
        ));
    }
    let rows: Vec<SessionRow> = rdr
        .deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| Error::schema(path, format!("row {}: {e}", i + 1))))
        .collect::<Result<_>>()?;
    let placed = rows.iter().filter(|r| r.cc.is_some() && r.cp.is_some()).count();
    if placed != 0 && placed != rows.len() {
        return Err(Error::schema(path, "cc/cp must be given for every session or for none"));
    }
    let mut sessions: Vec<EvSession> = rows
        .into_iter()
        .map(|r| EvSession {
            id: r.id,
            arrival: r.arrival_min,
            departure: r.departure_min,
            capacity_kwh: r.capacity_kwh,
            soc_arrival: r.soc_arrival,
            energy_kwh: r.energy_kwh,
            rated_kw: r
                .rated_kw
                .unwrap_or_else(|| EvSession::default_rated_kw(r.capacity_kwh)),
            column: r.cc.unwrap_or(0),
            plug: r.cp.unwrap_or(0),
            curve: None,
        })
        .collect();
    for s in &sessions {
        s.validate()?;
    }
    if placed == 0 {
        assign_plugs(&mut sessions, &config.station)?;
    }
    Ok(sessions)
}

fn write_sessions(path: &Path, sessions: &[EvSession]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in sessions {
        w.serialize(SessionRow {
            id: s.id,
            arrival_min: s.arrival,
            departure_min: s.departure,
            capacity_kwh: s.capacity_kwh,
            soc_arrival: s.soc_arrival,
            energy_kwh: s.energy_kwh,
            rated_kw: Some(s.rated_kw),
            cc: Some(s.column),
            cp: Some(s.plug),
        })?;
    }
    if sessions.is_empty() {
        w.write_record(SESSION_HEADER.iter().chain(&["rated_kw", "cc", "cp"]))?;
    }
    w.flush()?;
    Ok(())
}

/// Loads a scenario from a JSON bundle or from a directory of CSV files
/// (`pv.csv`, `price_dam.csv`, `price_short.csv`, `price_long.csv`,
/// `tariff_ev.csv`, `sessions.csv`, optional `site.json`), then validates it.
pub fn load_scenario(path: &Path, config: &Config) -> Result<Scenario> {
    let scenario = if path.is_dir() {
        load_dir(path, config)?
    } else {
        let text = fs::read_to_string(path).map_err(|e| Error::schema(path, e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| Error::schema(path, e.to_string()))?
    };
    scenario.validate(&config.station, &config.time)?;
    Ok(scenario)
}

fn load_dir(dir: &Path, config: &Config) -> Result<Scenario> {
    let time = &config.time;
    let (start, pv_real) = read_series(&dir.join("pv.csv"), "kw", time.step_rt_min)?;
    if start.time() != chrono::NaiveTime::MIN {
        return Err(Error::schema(dir.join("pv.csv"), "series must start at midnight"));
    }
    let date = start.date();
    let mut prices = Vec::new();
    for name in ["price_dam", "price_short", "price_long", "tariff_ev"] {
        let path = dir.join(format!("{name}.csv"));
        let (t0, values) = read_series(&path, "price", time.step_da_min)?;
        if t0 != start {
            return Err(Error::schema(&path, format!("starts at {t0}, PV starts at {start}")));
        }
        prices.push(values);
    }
    let site_path = dir.join("site.json");
    let site = if site_path.exists() {
        let text = fs::read_to_string(&site_path)?;
        serde_json::from_str::<Site>(&text).map_err(|e| Error::schema(&site_path, e.to_string()))?
    } else {
        Site::default()
    };
    let sessions = read_sessions(&dir.join("sessions.csv"), config)?;
    let [price_dam, price_short, price_long, tariff_ev]: [Vec<f64>; 4] = prices.try_into().unwrap();
    Ok(Scenario {
        date,
        site,
        pv_real,
        price_dam,
        price_short,
        price_long,
        tariff_ev,
        sessions,
    })
}

pub fn write_scenario_dir(scenario: &Scenario, dir: &Path, config: &Config) -> Result<()> {
    fs::create_dir_all(dir)?;
    let time = &config.time;
    write_series(
        &dir.join("pv.csv"),
        "kw",
        scenario.date,
        time.step_rt_min,
        &scenario.pv_real,
    )?;
    for (name, series) in scenario.price_series() {
        write_series(
            &dir.join(format!("{name}.csv")),
            "price",
            scenario.date,
            time.step_da_min,
            series,
        )?;
    }
    fs::write(dir.join("site.json"), serde_json::to_string_pretty(&scenario.site)?)?;
    write_sessions(&dir.join("sessions.csv"), &scenario.sessions)
}

pub fn write_scenario_json(scenario: &Scenario, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(scenario)?)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct ScheduleRow {
    ts: String,
    c_kw: f64,
    bess_kw: f64,
    d_cap: f64,
    s_min: f64,
    s_max: f64,
    tariff: f64,
    dam: f64,
    short: f64,
    long: f64,
    #[serde(default)]
    dp_kw: Option<f64>,
    #[serde(default)]
    soe_ref_kwh: Option<f64>,
}

const SCHEDULE_HEADER: [&str; 10] = [
    "ts", "c_kw", "bess_kw", "d_cap", "s_min", "s_max", "tariff", "dam", "short", "long",
];

/// Writes a schedule; `dp_kw` and `soe_ref_kwh` follow the ten required columns.
pub fn write_schedule_csv(schedule: &ScheduleSeries, date: NaiveDate, step_min: u32, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (k, (s, soe)) in schedule.slices.iter().zip(&schedule.bess_soe_ref).enumerate() {
        w.serialize(ScheduleRow {
            ts: timestamp(date, k * step_min as usize),
            c_kw: s.c_budget,
            bess_kw: s.p_bess_setpoint,
            d_cap: s.d_cap,
            s_min: s.s_min,
            s_max: s.s_max,
            tariff: s.tariff_ev,
            dam: s.price_dam,
            short: s.price_short,
            long: s.price_long,
            dp_kw: Some(s.p_dp),
            soe_ref_kwh: Some(*soe),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Schedule rows as read; missing optional columns are `None`.
pub(crate) struct RawSchedule {
    pub slices: Vec<ScheduleSlice>,
    pub dp_given: bool,
    pub soe_ref: Option<Vec<f64>>,
}

pub(crate) fn read_schedule_raw(path: &Path, step_min: u32) -> Result<RawSchedule> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() < SCHEDULE_HEADER.len() || headers.iter().zip(SCHEDULE_HEADER).any(|(a, b)| a != b) {
        return Err(Error::schema(
            path,
            format!("header must start with `{}`", SCHEDULE_HEADER.join(",")),
        ));
    }
    let mut slices = Vec::new();
    let mut dp = Vec::new();
    let mut soe = Vec::new();
    let mut start = None;
    for (i, row) in rdr.deserialize::<ScheduleRow>().enumerate() {
        let row = row.map_err(|e| Error::schema(path, format!("row {}: {e}", i + 1)))?;
        let ts = parse_ts(path, i + 1, &row.ts)?;
        let t0 = *start.get_or_insert(ts);
        if ts != t0 + Duration::minutes(i as i64 * step_min as i64) {
            return Err(Error::schema(
                path,
                format!("row {}: timestamp breaks the {step_min}-minute grid", i + 1),
            ));
        }
        let slice = ScheduleSlice {
            c_budget: row.c_kw,
            p_bess_setpoint: row.bess_kw,
            d_cap: row.d_cap,
            s_min: row.s_min,
            s_max: row.s_max,
            tariff_ev: row.tariff,
            price_dam: row.dam,
            price_short: row.short,
            price_long: row.long,
            p_dp: row.dp_kw.unwrap_or(0.0),
        };
        slice
            .validate()
            .map_err(|e| Error::schema(path, format!("row {}: {e}", i + 1)))?;
        slices.push(slice);
        dp.push(row.dp_kw);
        soe.push(row.soe_ref_kwh);
    }
    let dp_given = dp.iter().all(Option::is_some);
    if !dp_given && dp.iter().any(Option::is_some) {
        return Err(Error::schema(path, "dp_kw must be given for every row or for none"));
    }
    let soe_ref = soe.iter().copied().collect::<Option<Vec<f64>>>();
    Ok(RawSchedule {
        slices,
        dp_given,
        soe_ref,
    })
}

/// Reads a schedule written by [`write_schedule_csv`] (all columns present).
pub fn read_schedule_csv(path: &Path, step_min: u32) -> Result<ScheduleSeries> {
    let raw = read_schedule_raw(path, step_min)?;
    if !raw.dp_given {
        return Err(Error::schema(path, "missing dp_kw column"));
    }
    let n = raw.slices.len();
    Ok(ScheduleSeries {
        slices: raw.slices,
        bess_soe_ref: raw.soe_ref.unwrap_or_else(|| vec![0.0; n]),
    })
}
