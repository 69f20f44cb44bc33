//! Outer leader loop: incentives from follower gradients and a bisection on
//! the leader slack for the smallest slack with admissible incentives.

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::admm::{admm_solve, AdmmState, Coupling};
use crate::config::Hyperparams;
use crate::error::Result;
use crate::follower::FollowerProblem;
use crate::types::{Allocation, ScheduleSlice};

/// `theta_i = min(d_cap, |delta * grad_i(p_i)|)` with the gradient taken
/// without the incentive term.
pub fn compute_incentives(p: &[f64], followers: &[FollowerProblem], d_cap: f64, delta: f64) -> Vec<f64> {
    p.iter()
        .zip(followers)
        .map(|(&pi, f)| (delta * f.penalty_slope(pi)).abs().min(d_cap))
        .collect()
}

/// Largest uncapped incentive `max_i |delta * grad_i(p_i)|`.
pub fn max_incentive_demand(p: &[f64], followers: &[FollowerProblem], delta: f64) -> f64 {
    p.iter()
        .zip(followers)
        .map(|(&pi, f)| (delta * f.penalty_slope(pi)).abs())
        .fold(0.0, f64::max)
}

/// Incentives fit under the cap and the state that produced `p` converged.
pub fn incentive_feasible(state: &AdmmState, followers: &[FollowerProblem], d_cap: f64, delta: f64) -> bool {
    state.converged && max_incentive_demand(&state.p, followers, delta) <= d_cap
}

/// One evaluated slack value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub slack: f64,
    pub feasible: bool,
    pub converged: bool,
    pub max_incentive: f64,
    pub admm_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgResult {
    pub allocation: Vec<f64>,
    pub theta: Vec<f64>,
    pub s_l: f64,
    pub sg_iterations: usize,
    pub admm_iterations_total: usize,
    pub feasible: bool,
    /// Coordination state behind the returned allocation, for warm starts.
    pub state: AdmmState,
    pub probes: Vec<Probe>,
    /// A probe broke the bracket ordering and the linear scan was used.
    pub fallback_scan: bool,
}

impl SgResult {
    pub fn to_allocation(&self) -> Allocation {
        Allocation {
            power: self.allocation.clone(),
            theta: self.theta.clone(),
            slack: self.s_l,
            lambda: self.state.lambda,
            mu_cc: self.state.mu_cc.clone(),
            admm_iterations: self.admm_iterations_total,
            sg_iterations: self.sg_iterations,
            converged: self.state.converged,
            feasible: self.feasible,
        }
    }
}

struct Evaluated {
    slack: f64,
    state: AdmmState,
    feasible: bool,
    max_incentive: f64,
}

struct Search<'a> {
    followers: &'a [FollowerProblem],
    coupling: &'a Coupling,
    slice: &'a ScheduleSlice,
    hp: &'a Hyperparams,
    start: Option<AdmmState>,
    probes: Vec<Probe>,
    admm_total: usize,
}

impl Search<'_> {
    fn probe(&mut self, slack: f64) -> Result<Evaluated> {
        let c_eff = (self.slice.c_budget + slack).max(0.0);
        let state = admm_solve(self.followers, self.coupling, c_eff, self.hp, self.start.as_ref())?;
        let max_incentive = max_incentive_demand(&state.p, self.followers, self.hp.incentive_gain);
        let feasible = state.converged && max_incentive <= self.slice.d_cap;
        self.admm_total += state.k;
        self.probes.push(Probe {
            slack,
            feasible,
            converged: state.converged,
            max_incentive,
            admm_iterations: state.k,
        });
        Ok(Evaluated {
            slack,
            state,
            feasible,
            max_incentive,
        })
    }

    fn finish(self, best: Evaluated, feasible: bool, fallback_scan: bool) -> SgResult {
        let theta = compute_incentives(&best.state.p, self.followers, self.slice.d_cap, self.hp.incentive_gain);
        SgResult {
            allocation: best.state.p.clone(),
            theta,
            s_l: best.slack,
            sg_iterations: self.probes.len(),
            admm_iterations_total: self.admm_total,
            feasible,
            state: best.state,
            probes: self.probes,
            fallback_scan,
        }
    }
}

/// Width of the admissible slack interval.
pub fn slack_range(slice: &ScheduleSlice) -> f64 {
    slice.s_max - slice.s_min
}

/// Slack at which the bisection starts on the side selected by the demand gap:
/// the slack bound, clipped to the gap between ideal demand and budget.
pub fn slack_extreme(followers: &[FollowerProblem], coupling: &Coupling, slice: &ScheduleSlice) -> f64 {
    let gap = coupling.ideal_demand(followers) - slice.c_budget;
    if gap >= 0.0 {
        gap.min(slice.s_max)
    } else {
        gap.max(slice.s_min)
    }
}

/// Leader-follower equilibrium for one control step.
///
/// Probes `s = 0` first, then the extreme of the side indicated by the demand
/// gap, then bisects between the last infeasible and the first feasible slack
/// until the bracket is narrower than `bisect_tol * (s_max - s_min)`.
pub fn sg_equilibrium(
    followers: &[FollowerProblem],
    coupling: &Coupling,
    slice: &ScheduleSlice,
    hp: &Hyperparams,
    warm: Option<&AdmmState>,
) -> Result<SgResult> {
    slice.validate()?;
    let mut search = Search {
        followers,
        coupling,
        slice,
        hp,
        start: warm.cloned(),
        probes: Vec::new(),
        admm_total: 0,
    };

    let zero = search.probe(0.0)?;
    if zero.feasible {
        return Ok(search.finish(zero, true, false));
    }

    let extreme = slack_extreme(followers, coupling, slice);
    if extreme == 0.0 {
        return Ok(search.finish(zero, false, false));
    }
    let far = search.probe(extreme)?;
    if !far.feasible {
        debug!("slack extreme {extreme:.3} kW infeasible");
        return Ok(search.finish(far, false, false));
    }

    let tol = hp.bisect_tol * slack_range(slice);
    let mut low = zero;
    let mut high = far;
    while (high.slack - low.slack).abs() > tol && search.probes.len() < hp.sg_max_iter {
        let mid = search.probe(0.5 * (low.slack + high.slack))?;
        if !ordered(&low, &mid, &high) {
            warn!(
                "slack bisection lost monotonicity at s = {:.4} kW; scanning the bracket",
                mid.slack
            );
            let (lo, hi) = (low.slack, high.slack);
            return scan(search, lo, hi, high, tol);
        }
        if mid.feasible {
            high = mid;
        } else {
            low = mid;
        }
    }
    Ok(search.finish(high, true, false))
}

/// A probe is in order if its incentive demand lies between the bracket ends.
fn ordered(low: &Evaluated, mid: &Evaluated, high: &Evaluated) -> bool {
    if !mid.state.converged || !low.state.converged {
        return true;
    }
    let slack = 1e-6 + 1e-3 * low.max_incentive.max(high.max_incentive);
    mid.max_incentive <= low.max_incentive + slack && mid.max_incentive + slack >= high.max_incentive
}

fn scan(mut search: Search<'_>, lo: f64, hi: f64, fallback: Evaluated, step: f64) -> Result<SgResult> {
    let n = ((hi - lo).abs() / step.max(f64::MIN_POSITIVE)).ceil() as usize;
    for k in 1..n {
        let s = lo + (hi - lo) * k as f64 / n as f64;
        let e = search.probe(s)?;
        if e.feasible {
            return Ok(search.finish(e, true, true));
        }
    }
    Ok(search.finish(fallback, true, true))
}
