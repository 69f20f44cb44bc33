//! A single vehicle's local problem: penalty for deviating from the requested
//! power, its gradient, and the best response to the coordinator's prices.

use serde::{Deserialize, Serialize};

use crate::config::Hyperparams;
use crate::curve::StressFunction;
use crate::error::{Error, Result};

/// Absolute tolerance of the one-dimensional best-response search (kW).
pub const UPDATE_TOL_KW: f64 = 1e-4;

/// One vehicle's cost data for a control step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FollowerProblem {
    pub p_req: f64,
    /// Upper bound of the admissible power (curve cap at the current SoC).
    pub p_max: f64,
    pub sf: StressFunction,
    pub shortfall_weight: f64,
    pub stress_weight: f64,
    /// Incentive in force ($/kWh).
    pub theta: f64,
    pub dt_min: f64,
    /// Charging column the vehicle is plugged into.
    pub column: usize,
}

/// Prices and residuals seen by a follower during one Gauss-Seidel update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingContext {
    pub lambda: f64,
    pub mu_cc: f64,
    pub rho: f64,
    /// `sum_{j != i} P_j / eff_cp - C_eff` with the current iterates.
    pub residual_others: f64,
    /// `sum_{j != i, same column} P_j`.
    pub cc_residual_others: f64,
    pub eff_cp: f64,
    pub column_limit: f64,
}

impl FollowerProblem {
    /// Builds a follower with the stress function normalized by `p_ref`.
    pub fn new(hp: &Hyperparams, p_req: f64, p_max: f64, p_ref: f64, column: usize, dt_min: f64) -> Self {
        Self {
            p_req,
            p_max,
            sf: StressFunction::new(hp, p_ref.max(f64::MIN_POSITIVE)),
            shortfall_weight: hp.shortfall_weight,
            stress_weight: hp.stress_weight,
            theta: 0.0,
            dt_min,
            column,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_req >= 0.0 && self.p_req <= self.p_max) || !self.p_max.is_finite() {
            return Err(Error::invalid("follower.p_req", "0 <= p_req <= p_max"));
        }
        if self.shortfall_weight < 0.0 || self.stress_weight < 0.0 {
            return Err(Error::invalid("follower.weights", "beta, gamma >= 0"));
        }
        Ok(())
    }

    fn in_box(&self, p: f64) -> Result<()> {
        if p >= 0.0 && p <= self.p_max {
            Ok(())
        } else {
            Err(Error::invalid("p", format!("{p} outside [0, {}]", self.p_max)))
        }
    }

    fn hours(&self) -> f64 {
        self.dt_min / 60.0
    }

    /// Deviation penalty without the incentive term.
    #[inline]
    pub fn penalty(&self, p: f64) -> f64 {
        if p < self.p_req {
            let short = self.p_req - p;
            self.shortfall_weight * short * short
        } else if p > self.p_req {
            self.stress_weight * (self.sf.value(p) / self.sf.value(self.p_req) - 1.0)
        } else {
            0.0
        }
    }

    /// Derivative of [`penalty`](Self::penalty); zero is selected at the kink.
    #[inline]
    pub fn penalty_slope(&self, p: f64) -> f64 {
        if p < self.p_req {
            -2.0 * self.shortfall_weight * (self.p_req - p)
        } else if p > self.p_req {
            self.stress_weight * self.sf.slope(p) / self.sf.value(self.p_req)
        } else {
            0.0
        }
    }

    /// Penalty minus the incentive revenue, unchecked.
    #[inline]
    pub fn cost(&self, p: f64) -> f64 {
        self.penalty(p) - self.theta * p * self.hours()
    }

    #[inline]
    pub fn slope(&self, p: f64) -> f64 {
        self.penalty_slope(p) - self.theta * self.hours()
    }

    pub fn objective(&self, p: f64) -> Result<f64> {
        self.in_box(p)?;
        Ok(self.cost(p))
    }

    pub fn gradient(&self, p: f64) -> Result<f64> {
        self.in_box(p)?;
        Ok(self.slope(p))
    }
}

impl CouplingContext {
    #[inline]
    fn augmentation(&self, p: f64) -> f64 {
        let shared = p / self.eff_cp + self.residual_others;
        let excess = (p + self.cc_residual_others - self.column_limit).max(0.0);
        self.lambda * p / self.eff_cp
            + 0.5 * self.rho * shared * shared
            + self.mu_cc * p
            + 0.5 * self.rho * excess * excess
    }
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
///
/// Returns the best of the final bracket midpoint and both original ends.
pub fn golden_section(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    let mid = 0.5 * (a + b);
    [(mid, f(mid)), (lo, f(lo)), (hi, f(hi))]
        .into_iter()
        .fold(
            (mid, f64::INFINITY),
            |best, cand| {
                if cand.1 < best.1 {
                    cand
                } else {
                    best
                }
            },
        )
}

/// Best response of one follower to the current coordination prices.
///
/// Each side of the request kink is smooth and convex, so both are searched
/// separately and compared against the request itself.
pub fn follower_update(fp: &FollowerProblem, ctx: &CouplingContext) -> Result<f64> {
    // SF is increasing, so its largest value on the box is at p_max.
    if !(fp.sf.value(fp.p_max).is_finite() && fp.sf.value(fp.p_req) > 0.0) {
        return Err(Error::Solver(format!(
            "non-finite follower objective on [0, {}] (check stress function parameters)",
            fp.p_max
        )));
    }
    let total = |p: f64| fp.cost(p) + ctx.augmentation(p);
    let kink = fp.p_req.min(fp.p_max);
    let mut best = (kink, total(kink));
    if kink > 0.0 {
        let cand = golden_section(total, 0.0, kink, UPDATE_TOL_KW);
        if cand.1 < best.1 {
            best = cand;
        }
    }
    if fp.p_max > kink {
        let cand = golden_section(total, kink, fp.p_max, UPDATE_TOL_KW);
        if cand.1 < best.1 {
            best = cand;
        }
    }
    if !best.1.is_finite() || !best.0.is_finite() {
        return Err(Error::Solver(format!(
            "non-finite follower objective at p={} (check stress function parameters)",
            best.0
        )));
    }
    Ok(best.0.clamp(0.0, fp.p_max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn follower(p_req: f64, p_max: f64) -> FollowerProblem {
        FollowerProblem::new(&Hyperparams::default(), p_req, p_max, 150.0, 0, 1.0)
    }

    fn free_ctx(residual_others: f64) -> CouplingContext {
        CouplingContext {
            lambda: 0.0,
            mu_cc: 0.0,
            rho: 10.0,
            residual_others,
            cc_residual_others: 0.0,
            eff_cp: 0.95,
            column_limit: 172.5,
        }
    }

    #[test]
    fn objective_examples() {
        let fp = follower(50.0, 150.0);
        assert_eq!(fp.objective(50.0).unwrap(), 0.0);
        assert!((fp.objective(40.0).unwrap() - 1.0).abs() < 1e-12);
        let a = fp.objective(60.0).unwrap();
        let b = fp.objective(70.0).unwrap();
        assert!(a > 0.0 && b > a);
        assert!(fp.objective(151.0).is_err());
        assert!(fp.objective(-0.1).is_err());
    }

    #[test]
    fn incentive_lowers_cost() {
        let mut fp = follower(50.0, 150.0);
        fp.theta = 0.06;
        assert!((fp.objective(60.0).unwrap() - (fp.penalty(60.0) - 0.06)).abs() < 1e-12);
    }

    #[test]
    fn gradient_examples() {
        let fp = follower(50.0, 150.0);
        assert_eq!(fp.gradient(50.0).unwrap(), 0.0);
        assert!(fp.gradient(10.0).unwrap() < 0.0);
        assert!(fp.gradient(90.0).unwrap() > 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut fp = follower(50.0, 150.0);
        fp.theta = 0.03;
        for p in [1.0, 20.0, 49.0, 51.0, 80.0, 140.0] {
            let h = 1e-5;
            let fd = (fp.cost(p + h) - fp.cost(p - h)) / (2.0 * h);
            assert!((fp.slope(p) - fd).abs() < 1e-6, "p={p}: {} vs {fd}", fp.slope(p));
        }
    }

    #[test]
    fn update_reaches_request_when_unconstrained() {
        let fp = follower(50.0, 150.0);
        let p = follower_update(&fp, &free_ctx(-50.0 / 0.95)).unwrap();
        assert!((p - 50.0).abs() < 1e-3, "{p}");
    }

    #[test]
    fn update_large_price_goes_to_zero() {
        let fp = follower(50.0, 150.0);
        let mut ctx = free_ctx(-50.0 / 0.95);
        ctx.lambda = 1e6;
        assert!(follower_update(&fp, &ctx).unwrap() < 1e-3);
    }

    #[test]
    fn update_rejects_non_finite_stress() {
        let mut fp = follower(50.0, 150.0);
        fp.sf.growth = 1e6;
        let err = follower_update(&fp, &free_ctx(0.0));
        assert!(err.is_err());
    }

    fn grid_argmin(fp: &FollowerProblem, ctx: &CouplingContext) -> f64 {
        let n = (fp.p_max / 1e-3).round() as usize;
        let mut best = (0.0, f64::INFINITY);
        for k in 0..=n {
            let p = (k as f64 * 1e-3).min(fp.p_max);
            let v = fp.cost(p) + ctx.augmentation(p);
            if v < best.1 {
                best = (p, v);
            }
        }
        best.0
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn update_matches_dense_grid(
            p_req in 0.0..60.0f64,
            extra in 0.0..40.0f64,
            lambda in -2.0..2.0f64,
            mu in 0.0..0.5f64,
            rho in 0.01..20.0f64,
            residual in -120.0..40.0f64,
            cc_other in 0.0..60.0f64,
            theta in 0.0..0.1f64,
        ) {
            let mut fp = follower(p_req, p_req + extra);
            fp.sf.p_ref = 100.0;
            fp.theta = theta;
            let ctx = CouplingContext {
                lambda, mu_cc: mu, rho, residual_others: residual,
                cc_residual_others: cc_other, eff_cp: 0.95, column_limit: 80.0,
            };
            let got = follower_update(&fp, &ctx).unwrap();
            let oracle = grid_argmin(&fp, &ctx);
            prop_assert!((got - oracle).abs() <= 1e-3, "got {got} oracle {oracle}");
        }

        #[test]
        fn update_stays_in_box(p_req in 0.0..100.0f64, extra in 0.0..50.0f64, lambda in -50.0..50.0f64, residual in -300.0..300.0f64) {
            let fp = follower(p_req, p_req + extra);
            let mut ctx = free_ctx(residual);
            ctx.lambda = lambda;
            let p = follower_update(&fp, &ctx).unwrap();
            prop_assert!(p >= 0.0 && p <= fp.p_max);
        }

        #[test]
        fn incentive_never_reduces_power(p_req in 0.0..100.0f64, extra in 0.0..50.0f64, lambda in -1.0..1.0f64, residual in -150.0..50.0f64, t0 in 0.0..0.1f64, dt in 0.0..5.0f64) {
            let mut lo = follower(p_req, p_req + extra);
            lo.sf.p_ref = p_req + extra + 1.0;
            lo.theta = t0;
            let mut hi = lo;
            hi.theta = t0 + dt;
            let mut ctx = free_ctx(residual);
            ctx.lambda = lambda;
            ctx.rho = 0.05;
            let a = follower_update(&lo, &ctx).unwrap();
            let b = follower_update(&hi, &ctx).unwrap();
            prop_assert!(b + 2e-4 >= a, "{a} -> {b}");
        }

        #[test]
        fn convex_on_each_side(p_req in 10.0..100.0f64, u in 0.0..1.0f64, v in 0.0..1.0f64, above in any::<bool>()) {
            let fp = follower(p_req, 150.0);
            let (lo, hi) = if above { (p_req, 150.0) } else { (0.0, p_req) };
            let x = lo + u * (hi - lo);
            let y = lo + v * (hi - lo);
            let mid = 0.5 * (x + y);
            prop_assert!(fp.cost(mid) <= 0.5 * (fp.cost(x) + fp.cost(y)) + 1e-12);
        }
    }
}
