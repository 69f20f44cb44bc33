//! Reference controllers: the centralized leader problem solved exactly on a
//! power grid, plain coordination without incentives, and greedy charging.

use serde::{Deserialize, Serialize};

use crate::admm::{admm_solve, AdmmState, Coupling};
use crate::config::Hyperparams;
use crate::error::{Error, Result};
use crate::follower::FollowerProblem;
use crate::types::{Allocation, ScheduleSlice};

/// Incentive the leader pays at power `p`, substituted from the gradient.
pub fn incentive_at(f: &FollowerProblem, p: f64, d_cap: f64, delta: f64) -> f64 {
    (delta * f.penalty_slope(p)).abs().min(d_cap)
}

/// Per-vehicle part of the leader objective: lost tariff revenue, the
/// follower penalty and the incentive paid.
pub fn vehicle_term(f: &FollowerProblem, p: f64, slice: &ScheduleSlice, hp: &Hyperparams) -> f64 {
    let h = f.dt_min / 60.0;
    let theta = incentive_at(f, p, slice.d_cap, hp.incentive_gain);
    -slice.tariff_ev * p * h + f.penalty(p) + theta * p * h
}

pub fn slack_cost(slack: f64, dt_min: f64, hp: &Hyperparams) -> f64 {
    hp.slack_cost * slack.abs() * dt_min / 60.0
}

/// Leader objective of an allocation and slack.
pub fn leader_objective(
    followers: &[FollowerProblem],
    p: &[f64],
    slack: f64,
    slice: &ScheduleSlice,
    hp: &Hyperparams,
) -> f64 {
    let dt = followers.first().map_or(1.0, |f| f.dt_min);
    followers
        .iter()
        .zip(p)
        .map(|(f, &pi)| vehicle_term(f, pi, slice, hp))
        .sum::<f64>()
        + slack_cost(slack, dt, hp)
}

#[derive(Debug, Clone, Copy)]
pub struct CentralizedProblem<'a> {
    pub followers: &'a [FollowerProblem],
    pub coupling: &'a Coupling,
    pub slice: &'a ScheduleSlice,
    pub hp: &'a Hyperparams,
    /// Power step (kW).
    pub quantum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralizedSolution {
    pub allocation: Allocation,
    pub objective: f64,
    /// Power level of each vehicle in quanta.
    pub levels: Vec<usize>,
}

/// Min-plus table with the argmin of the last stage for each total.
struct Stage {
    best: Vec<f64>,
    pick: Vec<usize>,
}

fn add_stage(prev: &[f64], options: &[f64], cap: usize) -> Stage {
    let len = (prev.len() + options.len() - 1).min(cap + 1);
    let mut best = vec![f64::INFINITY; len];
    let mut pick = vec![0; len];
    for (t, &base) in prev.iter().enumerate() {
        if !base.is_finite() {
            continue;
        }
        for (k, &c) in options.iter().enumerate() {
            let total = t + k;
            if total >= len {
                break;
            }
            let v = base + c;
            if v < best[total] {
                best[total] = v;
                pick[total] = k;
            }
        }
    }
    Stage { best, pick }
}

impl CentralizedProblem<'_> {
    fn validate(&self) -> Result<()> {
        if self.followers.is_empty() {
            return Err(Error::invalid("followers", "need at least one follower"));
        }
        if !(self.quantum > 0.0) {
            return Err(Error::invalid("quantum", "must be > 0"));
        }
        self.slice.validate()?;
        for f in self.followers {
            f.validate()?;
            if f.column >= self.coupling.n_columns {
                return Err(Error::invalid("follower.column", "column index out of range"));
            }
        }
        Ok(())
    }

    fn levels(&self, f: &FollowerProblem) -> usize {
        (f.p_max / self.quantum + 1e-9).floor() as usize
    }

    /// Solves by dynamic programming: vehicles within each column under the
    /// column cap, then columns by total power, then the slack per total.
    pub fn solve(&self) -> Result<CentralizedSolution> {
        self.validate()?;
        let q = self.quantum;
        let hp = self.hp;
        let slice = self.slice;
        let col_cap = (self.coupling.column_limit / q + 1e-9).floor() as usize;

        let mut members: Vec<Vec<usize>> = vec![Vec::new(); self.coupling.n_columns];
        for (i, f) in self.followers.iter().enumerate() {
            members[f.column].push(i);
        }
        let used: Vec<usize> = (0..members.len()).filter(|&c| !members[c].is_empty()).collect();

        // Column tables: cost of each column total and the per-vehicle picks.
        let mut column_tables = Vec::with_capacity(used.len());
        for &c in &used {
            let mut table = vec![0.0];
            let mut stages = Vec::with_capacity(members[c].len());
            for &i in &members[c] {
                let f = &self.followers[i];
                let opts: Vec<f64> = (0..=self.levels(f))
                    .map(|k| vehicle_term(f, k as f64 * q, slice, hp))
                    .collect();
                let st = add_stage(&table, &opts, col_cap);
                table = st.best.clone();
                stages.push(st);
            }
            column_tables.push((table, stages));
        }

        let mut totals = vec![0.0];
        let mut station_stages = Vec::with_capacity(used.len());
        for (table, _) in &column_tables {
            let st = add_stage(&totals, table, usize::MAX - 1);
            totals = st.best.clone();
            station_stages.push(st);
        }

        let dt = self.followers[0].dt_min;
        let eff = self.coupling.eff_cp;
        let slack_of = |t: usize| t as f64 * q / eff - slice.c_budget;
        let mut best: Option<(f64, usize)> = None;
        for positive in [true, false] {
            for (t, &g) in totals.iter().enumerate() {
                let s = slack_of(t);
                let on_branch = if positive { s >= 0.0 } else { s <= 0.0 };
                if !on_branch || !g.is_finite() || s > slice.s_max || s < slice.s_min {
                    continue;
                }
                let v = g + slack_cost(s, dt, hp);
                match best {
                    Some((bv, bt)) if v > bv || (v == bv && t >= bt) => {}
                    _ => best = Some((v, t)),
                }
            }
        }

        let (feasible, total) = match best {
            Some((_, t)) => (true, t),
            None => {
                // Closest reachable total to the admissible slack interval.
                let dist = |t: usize| {
                    let s = slack_of(t);
                    (slice.s_min - s).max(s - slice.s_max).max(0.0)
                };
                let t = (0..totals.len())
                    .filter(|&t| totals[t].is_finite())
                    .min_by(|&a, &b| dist(a).total_cmp(&dist(b)))
                    .unwrap_or(0);
                (false, t)
            }
        };

        // Backtrack station stages, then each column.
        let mut levels = vec![0usize; self.followers.len()];
        let mut t = total;
        for (pos, st) in station_stages.iter().enumerate().rev() {
            let k = st.pick[t];
            let (_, stages) = &column_tables[pos];
            let mut u = k;
            for (j, cst) in stages.iter().enumerate().rev() {
                let kk = cst.pick[u];
                levels[members[used[pos]][j]] = kk;
                u -= kk;
            }
            t -= k;
        }

        let power: Vec<f64> = levels.iter().map(|&k| k as f64 * q).collect();
        let slack = slack_of(total).clamp(slice.s_min, slice.s_max);
        let theta: Vec<f64> = self
            .followers
            .iter()
            .zip(&power)
            .map(|(f, &p)| incentive_at(f, p, slice.d_cap, hp.incentive_gain))
            .collect();
        let objective = leader_objective(self.followers, &power, slack, slice, hp);
        Ok(CentralizedSolution {
            allocation: Allocation {
                power,
                theta,
                slack,
                lambda: 0.0,
                mu_cc: vec![0.0; self.coupling.n_columns],
                admm_iterations: 0,
                sg_iterations: 0,
                converged: true,
                feasible,
            },
            objective,
            levels,
        })
    }
}

pub fn centralized_solve(problem: &CentralizedProblem<'_>) -> Result<Allocation> {
    Ok(problem.solve()?.allocation)
}

/// Coordination without incentives or slack: one inner solve at the budget.
pub fn distributed_solve(
    followers: &[FollowerProblem],
    coupling: &Coupling,
    c_budget: f64,
    hp: &Hyperparams,
    warm: Option<&AdmmState>,
) -> Result<(Allocation, AdmmState)> {
    if !(c_budget >= 0.0) {
        return Err(Error::invalid("c_budget", "must be >= 0"));
    }
    let plain: Vec<FollowerProblem> = followers.iter().map(|f| FollowerProblem { theta: 0.0, ..*f }).collect();
    let st = admm_solve(&plain, coupling, c_budget, hp, warm)?;
    let alloc = Allocation {
        power: st.p.clone(),
        theta: vec![0.0; followers.len()],
        slack: 0.0,
        lambda: st.lambda,
        mu_cc: st.mu_cc.clone(),
        admm_iterations: st.k,
        sg_iterations: 0,
        converged: st.converged || st.saturated,
        feasible: st.converged,
    };
    Ok((alloc, st))
}

/// Every vehicle charges at its request, limited only by its curve.
pub fn uncontrolled_step(followers: &[FollowerProblem]) -> Allocation {
    Allocation {
        power: followers.iter().map(|f| f.p_req.min(f.p_max)).collect(),
        theta: vec![0.0; followers.len()],
        ..Allocation::empty()
    }
}
