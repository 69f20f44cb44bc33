//! Uniform per-step interface over the four charging controllers.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::admm::{AdmmState, Coupling};
use crate::benchmarks::{distributed_solve, uncontrolled_step, CentralizedProblem};
use crate::config::{Config, Hyperparams};
use crate::error::{Error, Result};
use crate::follower::FollowerProblem;
use crate::stackelberg::sg_equilibrium;
use crate::types::{Allocation, ScheduleSlice};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    SgAdmm,
    Admm,
    Centralized,
    Uncontrolled,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::SgAdmm, Method::Admm, Method::Centralized, Method::Uncontrolled];

    pub fn name(self) -> &'static str {
        match self {
            Method::SgAdmm => "sg-admm",
            Method::Admm => "admm",
            Method::Centralized => "centralized",
            Method::Uncontrolled => "uncontrolled",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid("method", format!("unknown method `{s}`")))
    }
}

/// Multipliers and per-vehicle iterates carried between control steps.
#[derive(Debug, Clone, Default)]
struct WarmStart {
    p: BTreeMap<u32, f64>,
    theta: BTreeMap<u32, f64>,
    lambda: f64,
    mu_cc: Vec<f64>,
    rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub allocation: Allocation,
    /// The slack bisection fell back to a linear scan.
    pub fallback_scan: bool,
}

/// Stateful controller: one instance per simulated run.
#[derive(Debug, Clone)]
pub struct Controller {
    pub method: Method,
    coupling: Coupling,
    hp: Hyperparams,
    quantum: f64,
    warm: Option<WarmStart>,
}

impl Controller {
    pub fn new(method: Method, config: &Config) -> Self {
        Self {
            method,
            coupling: Coupling::from_station(&config.station),
            hp: config.hyper.clone(),
            quantum: config.options.quantum_kw,
            warm: None,
        }
    }

    pub fn coupling(&self) -> &Coupling {
        &self.coupling
    }

    /// Previous multipliers with the stored power of returning vehicles and
    /// the request of new ones.
    fn warm_state(&self, ids: &[u32], followers: &[FollowerProblem]) -> Option<AdmmState> {
        let w = self.warm.as_ref()?;
        if w.mu_cc.len() != self.coupling.n_columns {
            return None;
        }
        Some(AdmmState {
            p: ids
                .iter()
                .zip(followers)
                .map(|(id, f)| w.p.get(id).copied().unwrap_or(f.p_req))
                .collect(),
            lambda: w.lambda,
            mu_cc: w.mu_cc.clone(),
            rho: w.rho,
            k: 0,
            r_norm: f64::INFINITY,
            s_norm: f64::INFINITY,
            converged: false,
            saturated: false,
        })
    }

    fn remember(&mut self, ids: &[u32], state: &AdmmState, theta: &[f64]) {
        self.warm = Some(WarmStart {
            p: ids.iter().copied().zip(state.p.iter().copied()).collect(),
            theta: ids.iter().copied().zip(theta.iter().copied()).collect(),
            lambda: state.lambda,
            mu_cc: state.mu_cc.clone(),
            rho: state.rho,
        });
    }

    /// Solves one control step. `ids` identifies the vehicle behind each follower.
    pub fn step(&mut self, ids: &[u32], followers: &[FollowerProblem], slice: &ScheduleSlice) -> Result<StepOutput> {
        if ids.len() != followers.len() {
            return Err(Error::invalid("ids", "one id per follower"));
        }
        if followers.is_empty() {
            if let Some(w) = self.warm.as_mut() {
                w.p.clear();
                w.theta.clear();
            }
            return Ok(StepOutput {
                allocation: Allocation::empty(),
                fallback_scan: false,
            });
        }
        match self.method {
            Method::SgAdmm => {
                let with_theta: Vec<FollowerProblem> = match &self.warm {
                    Some(w) => ids
                        .iter()
                        .zip(followers)
                        .map(|(id, f)| FollowerProblem {
                            theta: w.theta.get(id).copied().unwrap_or(0.0),
                            ..*f
                        })
                        .collect(),
                    None => followers.to_vec(),
                };
                let warm = self.warm_state(ids, followers);
                let r = sg_equilibrium(&with_theta, &self.coupling, slice, &self.hp, warm.as_ref())?;
                self.remember(ids, &r.state, &r.theta);
                Ok(StepOutput {
                    allocation: r.to_allocation(),
                    fallback_scan: r.fallback_scan,
                })
            }
            Method::Admm => {
                let warm = self.warm_state(ids, followers);
                let (a, st) = distributed_solve(followers, &self.coupling, slice.c_budget, &self.hp, warm.as_ref())?;
                self.remember(ids, &st, &a.theta);
                Ok(StepOutput {
                    allocation: a,
                    fallback_scan: false,
                })
            }
            Method::Centralized => {
                let problem = CentralizedProblem {
                    followers,
                    coupling: &self.coupling,
                    slice,
                    hp: &self.hp,
                    quantum: self.quantum,
                };
                Ok(StepOutput {
                    allocation: problem.solve()?.allocation,
                    fallback_scan: false,
                })
            }
            Method::Uncontrolled => Ok(StepOutput {
                allocation: uncontrolled_step(followers),
                fallback_scan: false,
            }),
        }
    }
}
