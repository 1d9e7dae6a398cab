use nalgebra::{SVector, Vector3};
use serde::{Deserialize, Serialize};

use super::{Model, ScenarioConfig, ScenarioKind, TrajectoryLog};
use crate::control::lyapunov_diagnostics;
use crate::dynamics::{TuavState, TUAV_DIM};
use crate::safety::{comparison_bound, CbfMode};

/// Slack on `h >= 0` and on the comparison bound.
pub const BARRIER_TOL: f64 = 1e-6;
/// Final-window tracking tolerance, m.
pub const TRACKING_TOL: f64 = 1e-2;
/// Length of the final tracking window, s.
pub const TRACKING_WINDOW: f64 = 10.0;
/// Allowed growth of `‖u*‖∞` over the initial nominal, without a box.
pub const INPUT_GROWTH: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckOutcome {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub outcome: CheckOutcome,
    pub detail: String,
    /// Safety checks decide the exit status; the others are reported.
    pub safety: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantReport {
    pub checks: Vec<CheckResult>,
}

impl InvariantReport {
    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn safety_ok(&self) -> bool {
        self.checks
            .iter()
            .all(|c| !c.safety || c.outcome != CheckOutcome::Fail)
    }

    pub fn all_ok(&self) -> bool {
        self.checks.iter().all(|c| c.outcome != CheckOutcome::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| c.outcome == CheckOutcome::Fail)
    }
}

fn result(name: &'static str, safety: bool, ok: bool, detail: String) -> CheckResult {
    CheckResult {
        name,
        outcome: if ok { CheckOutcome::Pass } else { CheckOutcome::Fail },
        detail,
        safety,
    }
}

fn not_applicable(name: &'static str, safety: bool, why: &str) -> CheckResult {
    CheckResult {
        name,
        outcome: CheckOutcome::NotApplicable,
        detail: why.to_string(),
        safety,
    }
}

fn barrier_nonnegative(log: &TrajectoryLog) -> CheckResult {
    const NAME: &str = "barrier_nonnegative";
    match log.records.iter().find(|r| !(r.h >= -BARRIER_TOL)) {
        Some(r) => result(NAME, true, false, format!("h = {:.6e} at t = {:.4}", r.h, r.t)),
        None => result(NAME, true, true, format!("min h = {:.6e}", log.summary.min_h)),
    }
}

fn comparison(log: &TrajectoryLog, config: &ScenarioConfig) -> CheckResult {
    const NAME: &str = "comparison_bound";
    if config.model.cbf_mode() != CbfMode::FirstOrder || !config.filter_enabled {
        return not_applicable(NAME, false, "first-order filtered runs only");
    }
    let Some(first) = log.records.first() else {
        return not_applicable(NAME, false, "empty log");
    };
    // The barrier is not differentiable at the anchor, where the constraint
    // is vacuous; the bound only holds from a start outside that ball.
    if first.r < config.cbf.epsilon_origin {
        return not_applicable(NAME, false, "start inside the origin guard radius");
    }
    // Continuous-time rate. The held-over filter rate makes sampled radial
    // motion meet it exactly; tangential input adds |u_t|² dt² / 2r per step.
    let spec = config.cbf;
    let bad = log
        .records
        .iter()
        .find(|r| r.h < comparison_bound(first.h, &spec, r.t - first.t) - BARRIER_TOL);
    match bad {
        Some(r) => result(
            NAME,
            false,
            false,
            format!(
                "h = {:.6e} below bound {:.6e} at t = {:.4}",
                r.h,
                comparison_bound(first.h, &spec, r.t - first.t),
                r.t
            ),
        ),
        None => result(NAME, false, true, "h(t) >= h0 exp(-gamma t)".into()),
    }
}

fn input_bounded(log: &TrajectoryLog, config: &ScenarioConfig) -> CheckResult {
    const NAME: &str = "input_bounded";
    let Some(first) = log.records.first() else {
        return not_applicable(NAME, false, "empty log");
    };
    let inf = |u: &[f64]| u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let limit = match config.input_bound {
        Some(b) => b + 1e-9,
        None => INPUT_GROWTH * inf(&first.u_nom),
    };
    match log
        .records
        .iter()
        .find(|r| !r.u_star.iter().all(|v| v.is_finite()) || inf(&r.u_star) > limit)
    {
        Some(r) => result(
            NAME,
            false,
            false,
            format!("|u*|inf = {:.6e} > {:.6e} at t = {:.4}", inf(&r.u_star), limit, r.t),
        ),
        None => result(NAME, false, true, format!("|u*|inf <= {limit:.6e}")),
    }
}

fn tracking(log: &TrajectoryLog, config: &ScenarioConfig) -> CheckResult {
    const NAME: &str = "tracking_converged";
    let sc = &config.scenario;
    if sc.kind != ScenarioKind::Setpoint || Vector3::from(sc.target).norm() >= config.cbf.l_max {
        return not_applicable(NAME, false, "in-sphere setpoint runs only");
    }
    let Some(last) = log.records.last() else {
        return not_applicable(NAME, false, "empty log");
    };
    let from = last.t - TRACKING_WINDOW.min(config.duration);
    let target = Vector3::from(sc.target);
    let worst = log
        .records
        .iter()
        .filter(|r| r.t >= from - 1e-9)
        .map(|r| (Vector3::from(r.position) - target).norm())
        .fold(0.0f64, f64::max);
    result(
        NAME,
        false,
        worst < TRACKING_TOL,
        format!("max error {worst:.6e} over t >= {from:.4}"),
    )
}

fn lyapunov(log: &TrajectoryLog, config: &ScenarioConfig) -> CheckResult {
    const NAME: &str = "lyapunov_monotone";
    let sc = &config.scenario;
    let altitude_only = sc.kind == ScenarioKind::Setpoint
        && sc.target[0] == sc.start[0]
        && sc.target[1] == sc.start[1];
    if config.model != Model::FullTuav || !altitude_only {
        return not_applicable(NAME, false, "full_tuav altitude setpoint runs only");
    }
    if log.records.iter().any(|r| r.state.len() != TUAV_DIM) {
        return not_applicable(NAME, false, "log has no full state");
    }
    let values: Vec<(f64, f64)> = log
        .records
        .iter()
        .map(|r| {
            let s = TuavState::from_vector(&SVector::<f64, TUAV_DIM>::from_column_slice(&r.state));
            (r.t, lyapunov_diagnostics(&s, sc.target[2], &config.gains).value)
        })
        .collect();
    let tol = 1e-9 * values.first().map_or(1.0, |v| v.1.max(1.0));
    match values.windows(2).find(|w| w[1].1 > w[0].1 + tol) {
        Some(w) => result(
            NAME,
            false,
            false,
            format!("V rose from {:.6e} to {:.6e} at t = {:.4}", w[0].1, w[1].1, w[1].0),
        ),
        None => result(NAME, false, true, "V non-increasing".into()),
    }
}

/// Re-checks a finished log against the safety and convergence invariants.
pub fn verify_log(log: &TrajectoryLog, config: &ScenarioConfig) -> InvariantReport {
    InvariantReport {
        checks: vec![
            barrier_nonnegative(log),
            comparison(log, config),
            input_bounded(log, config),
            tracking(log, config),
            lyapunov(log, config),
        ],
    }
}
