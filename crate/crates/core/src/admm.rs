//! Inner coordination loop: Gauss-Seidel follower sweeps, dual updates on the
//! shared power budget and the per-column caps, and residual balancing of the
//! penalty parameter.

use serde::{Deserialize, Serialize};

use crate::config::{Hyperparams, StationParams};
use crate::error::{Error, Result};
use crate::follower::{follower_update, CouplingContext, FollowerProblem};

/// Station-side data of the coupling constraints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub eff_cp: f64,
    pub column_limit: f64,
    pub n_columns: usize,
}

impl Coupling {
    pub fn from_station(station: &StationParams) -> Self {
        Self {
            eff_cp: station.eff_cp,
            column_limit: station.column_limit_kw,
            n_columns: station.n_columns,
        }
    }

    /// Largest total power (at the coupling bus) the followers can absorb.
    pub fn max_absorbable(&self, followers: &[FollowerProblem]) -> f64 {
        let mut cols = vec![0.0; self.n_columns];
        for f in followers {
            cols[f.column] += f.p_max;
        }
        cols.iter().map(|c| c.min(self.column_limit)).sum::<f64>() / self.eff_cp
    }

    /// Demand at the coupling bus if every follower got its request, after
    /// column caps.
    pub fn ideal_demand(&self, followers: &[FollowerProblem]) -> f64 {
        let mut cols = vec![0.0; self.n_columns];
        for f in followers {
            cols[f.column] += f.p_req;
        }
        cols.iter().map(|c| c.min(self.column_limit)).sum::<f64>() / self.eff_cp
    }

    pub(crate) fn column_sums(&self, followers: &[FollowerProblem], p: &[f64]) -> Vec<f64> {
        let mut cols = vec![0.0; self.n_columns];
        for (f, &pi) in followers.iter().zip(p) {
            cols[f.column] += pi;
        }
        cols
    }
}

/// Iterates and diagnostics of the coordination loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmmState {
    pub p: Vec<f64>,
    pub lambda: f64,
    /// Column-cap duals, one per column, never negative.
    pub mu_cc: Vec<f64>,
    pub rho: f64,
    /// Iterations performed by the call that produced this state.
    pub k: usize,
    pub r_norm: f64,
    pub s_norm: f64,
    pub converged: bool,
    /// Budget exceeded what the boxes can absorb; every follower sits at `p_max`.
    #[serde(default)]
    pub saturated: bool,
}

impl AdmmState {
    /// Starting point with every follower at its request.
    pub fn cold(followers: &[FollowerProblem], coupling: &Coupling, hp: &Hyperparams) -> Self {
        Self {
            p: followers.iter().map(|f| f.p_req.clamp(0.0, f.p_max)).collect(),
            lambda: 0.0,
            mu_cc: vec![0.0; coupling.n_columns],
            rho: hp.rho_init,
            k: 0,
            r_norm: f64::INFINITY,
            s_norm: f64::INFINITY,
            converged: false,
            saturated: false,
        }
    }

    /// Absolute equality residual `|sum p / eff_cp - c_eff|`.
    pub fn coupling_residual(&self, coupling: &Coupling, c_eff: f64) -> f64 {
        (self.p.iter().sum::<f64>() / coupling.eff_cp - c_eff).abs()
    }
}

/// Primal and dual stopping thresholds.
pub fn stopping_bounds(p: &[f64], lambda: f64, c_eff: f64, eff_cp: f64, hp: &Hyperparams) -> (f64, f64) {
    let n = p.len() as f64;
    let p_norm = p.iter().map(|x| (x / eff_cp).powi(2)).sum::<f64>().sqrt();
    let primal = n.sqrt() * hp.eps_abs + hp.eps_rel * p_norm.max(c_eff);
    let dual = n.sqrt() * hp.eps_abs + hp.eps_rel * n.sqrt() * (lambda / eff_cp).abs();
    (primal, dual)
}

fn check_inputs(followers: &[FollowerProblem], coupling: &Coupling, c_eff: f64) -> Result<()> {
    if followers.is_empty() {
        return Err(Error::invalid("followers", "need at least one follower"));
    }
    if !(c_eff >= 0.0) || !c_eff.is_finite() {
        return Err(Error::invalid("c_eff", "must be finite and >= 0"));
    }
    for f in followers {
        f.validate()?;
        if f.column >= coupling.n_columns {
            return Err(Error::invalid(
                "follower.column",
                format!("column {} >= {}", f.column, coupling.n_columns),
            ));
        }
    }
    Ok(())
}

/// Runs the coordination loop for a fixed effective budget `c_eff`.
///
/// Stops on the primal/dual residual test or after `hp.admm_max_iter`
/// sweeps; a capped run is returned with `converged == false`.
pub fn admm_solve(
    followers: &[FollowerProblem],
    coupling: &Coupling,
    c_eff: f64,
    hp: &Hyperparams,
    warm: Option<&AdmmState>,
) -> Result<AdmmState> {
    check_inputs(followers, coupling, c_eff)?;
    let n = followers.len();
    let eff = coupling.eff_cp;

    let mut state = match warm {
        Some(w) if w.p.len() == n && w.mu_cc.len() == coupling.n_columns => {
            let mut s = w.clone();
            for (p, f) in s.p.iter_mut().zip(followers) {
                *p = p.clamp(0.0, f.p_max);
            }
            s.k = 0;
            s.converged = false;
            s.saturated = false;
            s
        }
        _ => AdmmState::cold(followers, coupling, hp),
    };

    // Budget beyond what the boxes can absorb while no column cap is active:
    // the dual diverges and every follower saturates, so skip the iterations.
    let cols_max = coupling.column_sums(followers, &followers.iter().map(|f| f.p_max).collect::<Vec<_>>());
    let caps_slack = cols_max.iter().all(|&c| c <= coupling.column_limit);
    let absorbable = coupling.max_absorbable(followers);
    if caps_slack && c_eff > absorbable * (1.0 + 1e-9) + 1e-9 {
        for (p, f) in state.p.iter_mut().zip(followers) {
            *p = f.p_max;
        }
        state.r_norm = c_eff - absorbable;
        state.s_norm = 0.0;
        state.converged = false;
        state.saturated = true;
        return Ok(state);
    }

    let mut cols = coupling.column_sums(followers, &state.p);
    let mut total: f64 = state.p.iter().sum::<f64>() / eff;
    let mut prev = state.p.clone();

    for k in 1..=hp.admm_max_iter {
        prev.copy_from_slice(&state.p);
        for (i, f) in followers.iter().enumerate() {
            let own = state.p[i];
            let ctx = CouplingContext {
                lambda: state.lambda,
                mu_cc: state.mu_cc[f.column],
                rho: state.rho,
                residual_others: total - own / eff - c_eff,
                cc_residual_others: cols[f.column] - own,
                eff_cp: eff,
                column_limit: coupling.column_limit,
            };
            let next = follower_update(f, &ctx)?;
            total += (next - own) / eff;
            cols[f.column] += next - own;
            state.p[i] = next;
        }
        // Resynchronize the running sums to avoid drift.
        total = state.p.iter().sum::<f64>() / eff;
        cols = coupling.column_sums(followers, &state.p);

        let r_eq = total - c_eff;
        state.lambda += state.rho * r_eq;
        let mut r_sq = r_eq * r_eq;
        for (mu, &c) in state.mu_cc.iter_mut().zip(&cols) {
            let excess = c - coupling.column_limit;
            *mu = (*mu + state.rho * excess).max(0.0);
            if excess > 0.0 {
                r_sq += excess * excess;
            }
        }
        state.r_norm = r_sq.sqrt();
        state.s_norm = state.rho
            * state
                .p
                .iter()
                .zip(&prev)
                .map(|(a, b)| ((a - b) / eff).powi(2))
                .sum::<f64>()
                .sqrt();
        state.k = k;

        let (eps_pri, eps_dual) = stopping_bounds(&state.p, state.lambda, c_eff, eff, hp);
        if state.r_norm <= eps_pri && state.s_norm <= eps_dual {
            state.converged = true;
            break;
        }

        if state.r_norm > hp.rho_balance * state.s_norm {
            state.rho *= hp.rho_scale;
        } else if state.s_norm > hp.rho_balance * state.r_norm {
            state.rho /= hp.rho_scale;
        }
        if !state.lambda.is_finite() || !state.rho.is_finite() {
            return Err(Error::Solver("coordination diverged".into()));
        }
    }
    Ok(state)
}
