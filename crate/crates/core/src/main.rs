use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use evcs_core::config::Config;
use evcs_core::controller::Method;
use evcs_core::metrics::{spearman, timing_report, RunMetrics};
use evcs_core::report::{compare, write_csv, write_run};
use evcs_core::scenario::{
    generate_synthetic, load_scenario, schedule_provider, write_scenario_dir, write_scenario_json, Scenario,
    ScheduleMode, SyntheticConfig,
};
use evcs_core::sim::simulate;
use evcs_core::sweep::{run_sweep, SweepConfig};
use evcs_core::Error;

#[derive(Parser)]
#[command(name = "evcs", version, about = "EV charging station controllers and simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one controller over a scenario.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_method)]
        method: Method,
    },
    /// Simulate every controller over the same scenario and schedule.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset of methods.
        #[arg(long, value_delimiter = ',', value_parser = parse_method)]
        methods: Option<Vec<Method>>,
    },
    /// Controller wall-clock against the number of connected vehicles.
    Sweep {
        /// Fleet sizes, `A..B` or a single number.
        #[arg(long, default_value = "1..20", value_parser = parse_range)]
        evs: RangeInclusive<usize>,
        #[arg(long, default_value_t = 15)]
        minutes: usize,
        #[arg(long, default_value_t = 0.6)]
        budget_factor: f64,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a seeded synthetic scenario.
    GenScenario {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        sessions: Option<usize>,
        #[arg(long)]
        days: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory of CSV files, or a `.json` bundle.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Dir)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Dir,
    Json,
}

#[derive(Args)]
struct Overrides {
    /// Power quantum of the centralized solver (kW).
    #[arg(long)]
    quantum: Option<f64>,
    /// Seed of the synthetic scenario when no `--scenario` is given.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Iteration cap of the inner coordination loop.
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(Args)]
struct Common {
    /// Scenario directory or JSON bundle; a synthetic day when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Schedule CSV; the built-in heuristic when omitted.
    #[arg(long)]
    schedule: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
    /// Non-converged steps tolerated per run before exiting with status 3;
    /// defaults to 5 % of the steps with connected vehicles.
    #[arg(long)]
    max_nonconverged: Option<usize>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_range(s: &str) -> Result<RangeInclusive<usize>, String> {
    let (a, b) = s.split_once("..").unwrap_or((s, s));
    let a: usize = a.trim().parse().map_err(|e| format!("bad range `{s}`: {e}"))?;
    let b: usize = b
        .trim_start_matches('=')
        .trim()
        .parse()
        .map_err(|e| format!("bad range `{s}`: {e}"))?;
    if a == 0 || a > b {
        return Err(format!("bad range `{s}`: need 1 <= A <= B"));
    }
    Ok(a..=b)
}

enum Failure {
    Error(Error),
    NonConverged(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn load_config(path: Option<&Path>, ov: &Overrides) -> Result<Config, Error> {
    let mut config = match path {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(q) = ov.quantum {
        config.options.quantum_kw = q;
    }
    if let Some(k) = ov.max_iters {
        config.hyper.admm_max_iter = k;
    }
    config.validated()
}

fn scenario_for(common: &Common, config: &Config) -> Result<Scenario, Error> {
    match &common.scenario {
        Some(p) => load_scenario(p, config),
        None => {
            info!(
                "no scenario given; generating synthetic day with seed {}",
                common.overrides.seed
            );
            generate_synthetic(common.overrides.seed, &SyntheticConfig::default(), config)
        }
    }
}

fn check_convergence(metrics: &RunMetrics, active_steps: usize, limit: Option<usize>) -> Result<(), Failure> {
    let limit = limit.unwrap_or(active_steps / 20);
    if metrics.nonconverged_steps > limit {
        return Err(Failure::NonConverged(format!(
            "{}: {} non-converged steps exceed the limit of {limit}",
            metrics.method, metrics.nonconverged_steps
        )));
    }
    if metrics.nonconverged_steps > 0 {
        warn!("{}: {} non-converged steps", metrics.method, metrics.nonconverged_steps);
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { common, method } => {
            let config = load_config(common.config.as_deref(), &common.overrides)?;
            let scenario = scenario_for(&common, &config)?;
            let mode = common
                .schedule
                .clone()
                .map_or(ScheduleMode::Heuristic, ScheduleMode::File);
            let schedule = schedule_provider(&scenario, &mode, &config)?;
            let trace = simulate(&scenario, &schedule, method, &config)?;
            let metrics = write_run(&common.out, &trace, &schedule, &config)?;
            let timing = timing_report(trace.timing.iter().map(|s| (method, s)));
            write_csv(&common.out.join("timing.csv"), &timing)?;
            info!(
                "{method}: net profit {:.2}, delivered {:.1} kWh",
                metrics.profit.net_profit, metrics.energy_delivered_kwh
            );
            let active = trace.station.iter().filter(|r| r.n_active > 0).count();
            check_convergence(&metrics, active, common.max_nonconverged)
        }
        Command::Compare { common, methods } => {
            let config = load_config(common.config.as_deref(), &common.overrides)?;
            let scenario = scenario_for(&common, &config)?;
            let mode = common
                .schedule
                .clone()
                .map_or(ScheduleMode::Heuristic, ScheduleMode::File);
            let schedule = schedule_provider(&scenario, &mode, &config)?;
            let methods = methods.unwrap_or_else(|| Method::ALL.to_vec());
            let out = compare(&scenario, &schedule, &config, &methods, &common.out)?;
            for (t, m) in out.traces.iter().zip(&out.metrics) {
                let active = t.station.iter().filter(|r| r.n_active > 0).count();
                check_convergence(m, active, common.max_nonconverged)?;
            }
            Ok(())
        }
        Command::Sweep {
            evs,
            minutes,
            budget_factor,
            overrides,
            config,
            out,
        } => {
            let config = load_config(config.as_deref(), &overrides)?;
            let sweep = SweepConfig {
                min_evs: *evs.start(),
                max_evs: *evs.end(),
                minutes,
                budget_factor,
                seed: overrides.seed,
                ..SweepConfig::default()
            };
            let result = run_sweep(&config, &sweep)?;
            std::fs::create_dir_all(&out).map_err(Error::from)?;
            write_csv(&out.join("timing.csv"), &result.table)?;
            for m in &sweep.methods {
                let rows: Vec<_> = result.table.iter().filter(|r| r.method == *m).collect();
                if rows.len() >= 2 {
                    let n: Vec<f64> = rows.iter().map(|r| r.n_ev as f64).collect();
                    let t: Vec<f64> = rows.iter().map(|r| r.mean_ms).collect();
                    info!("{m}: spearman(n_ev, mean_ms) = {:.3}", spearman(&n, &t)?);
                }
            }
            Ok(())
        }
        Command::GenScenario {
            seed,
            sessions,
            days,
            config,
            out,
            format,
        } => {
            let config = load_config(
                config.as_deref(),
                &Overrides {
                    quantum: None,
                    seed,
                    max_iters: None,
                },
            )?;
            let defaults = SyntheticConfig::default();
            let syn = SyntheticConfig {
                n_sessions: sessions.unwrap_or(defaults.n_sessions),
                days: days.unwrap_or(defaults.days),
                ..defaults
            };
            let scenario = generate_synthetic(seed, &syn, &config)?;
            match format {
                Format::Dir => write_scenario_dir(&scenario, &out, &config)?,
                Format::Json => write_scenario_json(&scenario, &out)?,
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::NonConverged(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else if matches!(e, Error::Solver(_)) {
                ExitCode::from(3)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
