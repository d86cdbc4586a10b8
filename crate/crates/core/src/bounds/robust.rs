//! Margin by which the safe band widens under bounded measurement and
//! damping errors.

use serde::{Deserialize, Serialize};

use crate::controller::{ControlledBusSpec, UncertaintyBounds};

const GRID_POINTS: usize = 200;
const BISECTION_TOL: f64 = 1e-6;

/// Left-hand sides of the upper and lower robustness inequalities at margin
/// `delta` (rad/s). Both must be nonpositive.
pub fn robust_lhs(spec: &ControlledBusSpec, unc: &UncertaintyBounds, delta: f64) -> (f64, f64) {
    lhs_at_slack(spec, unc, delta, unc.eps_omega + delta)
}

/// Same inequalities with the barrier term taken at the measurement error
/// that weakens it most, `omega_hat = omega_hi + delta - eps_omega`. Unlike
/// [`robust_lhs`] this is a sufficient condition for the widened band.
/// Needs `delta > eps_omega` to have any chance of passing.
pub fn robust_lhs_worst_case(spec: &ControlledBusSpec, unc: &UncertaintyBounds, delta: f64) -> (f64, f64) {
    lhs_at_slack(spec, unc, delta, delta - unc.eps_omega)
}

fn lhs_at_slack(spec: &ControlledBusSpec, unc: &UncertaintyBounds, delta: f64, slack: f64) -> (f64, f64) {
    let (hi, lo) = (spec.effective_hi(), spec.effective_lo());
    let common = unc.e_hat * unc.eps_omega + unc.eps_lambda + unc.eps_p;
    let upper = -spec.kappa_upper.eval(slack) / (hi - spec.omega_hi_th + slack)
        + unc.eps_e * (delta + hi)
        + common;
    let lower = -spec.kappa_lower.eval(slack) / (spec.omega_lo_th - lo + slack)
        + unc.eps_e * (delta - lo)
        + common;
    (upper, lower)
}

fn both_nonpositive((a, b): (f64, f64)) -> bool {
    a <= 0.0 && b <= 0.0
}

/// True iff both robustness inequalities hold at `delta`.
pub fn robust_delta_check(spec: &ControlledBusSpec, unc: &UncertaintyBounds, delta: f64) -> bool {
    both_nonpositive(robust_lhs(spec, unc, delta))
}

pub fn robust_delta_check_worst_case(spec: &ControlledBusSpec, unc: &UncertaintyBounds, delta: f64) -> bool {
    delta > unc.eps_omega && both_nonpositive(robust_lhs_worst_case(spec, unc, delta))
}

/// Smallest passing margin on `(0, hi - hi_th]`.
///
/// A 200-point grid picks the smallest point whose whole tail up to the
/// largest passing grid point passes; the gap to the failing point below is
/// then closed by bisection.
pub fn find_min_delta(spec: &ControlledBusSpec, unc: &UncertaintyBounds) -> Option<f64> {
    let max = spec.omega_hi - spec.omega_hi_th;
    find_min_delta_in(spec, unc, max)
}

pub fn find_min_delta_in(spec: &ControlledBusSpec, unc: &UncertaintyBounds, max: f64) -> Option<f64> {
    search(max, |d| robust_delta_check(spec, unc, d))
}

/// [`find_min_delta`] against the worst-case inequalities.
pub fn find_min_delta_worst_case(spec: &ControlledBusSpec, unc: &UncertaintyBounds) -> Option<f64> {
    let max = spec.omega_hi - spec.omega_hi_th;
    search(max, |d| robust_delta_check_worst_case(spec, unc, d))
}

/// Which form of the robustness inequalities a margin search uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginRule {
    /// Barrier term at `delta + eps_omega`, as the inequalities are usually
    /// stated.
    #[default]
    Literal,
    /// Barrier term at `delta - eps_omega`.
    WorstCase,
}

impl MarginRule {
    pub fn min_delta(self, spec: &ControlledBusSpec, unc: &UncertaintyBounds) -> Option<f64> {
        match self {
            MarginRule::Literal => find_min_delta(spec, unc),
            MarginRule::WorstCase => find_min_delta_worst_case(spec, unc),
        }
    }

    pub fn lhs(self, spec: &ControlledBusSpec, unc: &UncertaintyBounds, delta: f64) -> (f64, f64) {
        match self {
            MarginRule::Literal => robust_lhs(spec, unc, delta),
            MarginRule::WorstCase => robust_lhs_worst_case(spec, unc, delta),
        }
    }
}

fn search(max: f64, check: impl Fn(f64) -> bool) -> Option<f64> {
    if !(max > 0.0) {
        return None;
    }
    let grid: Vec<f64> = (1..=GRID_POINTS).map(|k| max * k as f64 / GRID_POINTS as f64).collect();
    let pass: Vec<bool> = grid.iter().map(|&d| check(d)).collect();
    let last = pass.iter().rposition(|&p| p)?;
    let mut first = last;
    while first > 0 && pass[first - 1] {
        first -= 1;
    }
    let mut hi = grid[first];
    let mut lo = if first == 0 { 0.0 } else { grid[first - 1] };
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if check(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}
