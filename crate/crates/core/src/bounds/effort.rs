//! Worst-case control effort over an energy sublevel set.
//!
//! The controlled input satisfies `u_i >= min(0, g_i)` on `{V <= eta}`,
//! where `g_i = -kappa(w - hi) / (w - hi_th) + q_i`. The minimum of `g_i`
//! is non-convex in the line angles; it is bracketed by an inner convex
//! problem (upper bound) and a family of outer convex problems indexed by a
//! sign pattern of the incident lines (lower bound).

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::solver::{find_feasible, minimize, strictly_feasible, BarrierSettings, Program, Second};
use crate::energy::{line_potential, EnergyContext};
use crate::error::{Error, Result};
use crate::network::PowerNetwork;
use crate::state::SystemState;

/// Closed offset standing in for the strict constraint `w > hi_th`.
pub const THRESHOLD_OFFSET: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffortSettings {
    /// Random starts for the non-convex problem (on top of the relaxation
    /// argmins and the anchor point).
    pub starts: usize,
    pub seed: u64,
    /// Half-width of the random angle perturbation around equilibrium (rad).
    pub spread: f64,
    /// Largest incident-line count accepted by the sign-pattern enumeration.
    pub degree_limit: usize,
    pub barrier: BarrierSettings,
}

impl Default for EffortSettings {
    fn default() -> Self {
        Self {
            starts: 16,
            seed: 0,
            spread: 0.5,
            degree_limit: 20,
            barrier: BarrierSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffortBoundProblem {
    pub bus_id: u32,
    pub index: usize,
    pub eta: f64,
    /// Kinetic energy of bus i alone sitting at its upper threshold.
    pub d_i: f64,
    /// Incident lines whose flow enters `q_i` with positive coefficient.
    pub d_plus: Vec<usize>,
    pub d_minus: Vec<usize>,
    pub settings: EffortSettings,
    gamma: f64,
    hi: f64,
    hi_th: f64,
    inertia: f64,
    damping: f64,
    injection: f64,
    omega_inf: f64,
    lambda_inf: DVector<f64>,
    theta_red: DVector<f64>,
    /// (line, incidence sign * susceptance) for lines touching bus i.
    incident: Vec<(usize, f64)>,
    susceptance: Vec<f64>,
    ends: Vec<(usize, usize)>,
}

/// Optimal value of one of the programs with its minimizer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundValue {
    pub value: f64,
    /// Frequency of bus i at the minimizer (rad/s).
    pub omega_i: f64,
    /// Minimizer with every other bus at `omega_inf`.
    pub state: SystemState,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LowerBound {
    pub best: BoundValue,
    /// Sign pattern of the best subproblem (bit k refers to the k-th incident line).
    pub pattern: u64,
    pub subproblems: usize,
    pub feasible: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffortReport {
    pub bus: u32,
    pub eta: f64,
    pub d_i: f64,
    pub u_min: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// Multi-start optimum of the non-convex problem.
    pub q_value: Option<f64>,
    pub argmin_state: Option<SystemState>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum EdgeModel {
    Sin,
    /// Lower hull: `sin` left of zero, identity right of it.
    HullPlus,
    /// Upper hull: identity left of zero, `sin` right of it.
    HullMinus,
    /// Chord `2 a / pi`.
    Chord,
}

impl EdgeModel {
    /// Value, first and second derivative.
    fn eval(self, a: f64) -> (f64, f64, f64) {
        let sin = (a.sin(), a.cos(), -a.sin());
        match self {
            EdgeModel::Sin => sin,
            EdgeModel::HullPlus if a < 0.0 => sin,
            EdgeModel::HullMinus if a >= 0.0 => sin,
            EdgeModel::HullPlus | EdgeModel::HullMinus => (a, 1.0, 0.0),
            EdgeModel::Chord => (2.0 * a / PI, 2.0 / PI, 0.0),
        }
    }
}

impl EffortBoundProblem {
    /// Sets up the problem for controlled bus `bus_id` at level `eta`, using
    /// the injections the equilibrium in `ctx` was computed for.
    pub fn new(
        net: &PowerNetwork,
        ctx: &EnergyContext,
        bus_id: u32,
        eta: f64,
        settings: EffortSettings,
    ) -> Result<Self> {
        let spec = net
            .controlled_spec(bus_id)
            .ok_or_else(|| Error::Validation(format!("bus {bus_id} is not controlled")))?;
        let gamma = spec.kappa_upper.gamma().ok_or_else(|| {
            Error::Validation("effort bounds need a linear class-K function".into())
        })?;
        if !(eta >= 0.0 && eta < ctx.c_level) {
            return Err(Error::Validation(format!(
                "eta must lie in [0, {}), got {eta}",
                ctx.c_level
            )));
        }
        let eq = &ctx.equilibrium;
        let i = spec.index;
        let bus = &net.buses()[i];
        let n = net.n();
        let pin = eq.theta_inf[n - 1];
        let theta_red = DVector::from_iterator(n - 1, (0..n - 1).map(|k| eq.theta_inf[k] - pin));
        let incident: Vec<(usize, f64)> = net
            .incident(i)
            .iter()
            .map(|&(k, s)| (k, s * net.lines()[k].susceptance))
            .collect();
        let d_plus = incident.iter().filter(|(_, c)| *c > 0.0).map(|(k, _)| *k).collect();
        let d_minus = incident.iter().filter(|(_, c)| *c < 0.0).map(|(k, _)| *k).collect();
        Ok(Self {
            bus_id,
            index: i,
            eta,
            d_i: 0.5 * bus.inertia * (spec.omega_hi_th - eq.omega_inf).powi(2),
            d_plus,
            d_minus,
            settings,
            gamma,
            hi: spec.effective_hi(),
            hi_th: spec.omega_hi_th,
            inertia: bus.inertia,
            damping: bus.damping,
            injection: eq.p_tilde[i] + eq.omega_inf * bus.damping,
            omega_inf: eq.omega_inf,
            lambda_inf: eq.lambda_inf.clone(),
            theta_red,
            incident,
            susceptance: net.lines().iter().map(|l| l.susceptance).collect(),
            ends: net.line_ends().to_vec(),
        })
    }

    pub fn degree(&self) -> usize {
        self.incident.len()
    }

    /// Whether `{V <= eta}` reaches past the threshold at all.
    pub fn is_trivial(&self) -> bool {
        self.eta <= self.d_i
    }

    fn w_max(&self) -> f64 {
        self.omega_inf + (2.0 * self.eta / self.inertia).sqrt()
    }

    fn anchor(&self) -> DVector<f64> {
        let n = self.theta_red.len() + 1;
        let mut x = DVector::zeros(n);
        x.rows_mut(0, n - 1).copy_from(&self.theta_red);
        x[n - 1] = 0.5 * (self.hi_th + THRESHOLD_OFFSET + self.w_max());
        x
    }

    fn lambda(&self, x: &DVector<f64>) -> DVector<f64> {
        let pinned = x.len() - 1;
        let theta = |k: usize| if k == pinned { 0.0 } else { x[k] };
        DVector::from_iterator(self.ends.len(), self.ends.iter().map(|&(a, b)| theta(a) - theta(b)))
    }

    fn state_at(&self, x: &DVector<f64>) -> SystemState {
        let n = x.len();
        let mut omega = DVector::from_element(n, self.omega_inf);
        omega[self.index] = x[n - 1];
        SystemState::new(self.lambda(x), omega, 0.0)
    }

    /// `g_i` at a state (any admissible state, not only minimizers).
    pub fn g_value(&self, state: &SystemState) -> f64 {
        let w = state.omega[self.index];
        let flow: f64 = self.incident.iter().map(|&(k, c)| c * state.lambda[k].sin()).sum();
        self.gamma * (self.hi - w) / (w - self.hi_th) + self.damping * w + flow - self.injection
    }

    fn program(&self, models: Vec<EdgeModel>, signs: Vec<(usize, f64)>) -> EffortProgram<'_> {
        EffortProgram {
            prob: self,
            models,
            signs,
        }
    }

    fn solve_from(&self, prog: &EffortProgram<'_>, x0: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
        let sol = minimize(prog, x0, &self.settings.barrier)?;
        Some((sol.value, sol.x))
    }

    fn value(&self, x: DVector<f64>, value: f64) -> BoundValue {
        BoundValue {
            value,
            omega_i: x[x.len() - 1],
            state: self.state_at(&x),
        }
    }

    fn check_nontrivial(&self) -> Result<()> {
        if self.is_trivial() {
            return Err(Error::Infeasible(format!(
                "level {} does not exceed the threshold energy {}",
                self.eta, self.d_i
            )));
        }
        Ok(())
    }

    /// Pulls `x` toward the anchor until strictly feasible.
    fn pull_inside(&self, prog: &EffortProgram<'_>, x: &DVector<f64>) -> Option<DVector<f64>> {
        let anchor = self.anchor();
        let mut s = 1.0 - 1e-9;
        for _ in 0..80 {
            let y = &anchor + (x - &anchor) * s;
            if strictly_feasible(prog, &y) {
                return Some(y);
            }
            s *= 0.5;
        }
        None
    }
}

struct EffortProgram<'a> {
    prob: &'a EffortBoundProblem,
    /// One model per incident line, same order as `prob.incident`.
    models: Vec<EdgeModel>,
    /// (line, s): constraint `s * lambda_line <= 0`.
    signs: Vec<(usize, f64)>,
}

impl EffortProgram<'_> {
    /// Gradient of `lambda_k` with respect to the reduced variables.
    fn edge_grad(&self, k: usize, n: usize) -> DVector<f64> {
        let (a, b) = self.prob.ends[k];
        let mut g = DVector::zeros(n);
        if a < n - 1 {
            g[a] += 1.0;
        }
        if b < n - 1 {
            g[b] -= 1.0;
        }
        g
    }

    fn add_edge_curvature(&self, h: &mut DMatrix<f64>, k: usize, coef: f64) {
        let n = h.nrows();
        let (a, b) = self.prob.ends[k];
        let (a, b) = ((a < n - 1).then_some(a), (b < n - 1).then_some(b));
        if let Some(a) = a {
            h[(a, a)] += coef;
        }
        if let Some(b) = b {
            h[(b, b)] += coef;
        }
        if let (Some(a), Some(b)) = (a, b) {
            h[(a, b)] -= coef;
            h[(b, a)] -= coef;
        }
    }

    fn energy(&self, x: &DVector<f64>, lam: &DVector<f64>) -> f64 {
        let p = self.prob;
        let w = x[x.len() - 1];
        let pot: f64 = (0..lam.len())
            .map(|k| p.susceptance[k] * line_potential(lam[k], p.lambda_inf[k]))
            .sum();
        0.5 * p.inertia * (w - p.omega_inf).powi(2) + pot
    }
}

impl Program for EffortProgram<'_> {
    fn dim(&self) -> usize {
        self.prob.theta_red.len() + 1
    }

    fn objective(&self, x: &DVector<f64>) -> Second {
        let p = self.prob;
        let n = x.len();
        let w = x[n - 1];
        let lam = p.lambda(x);
        let gap = w - p.hi_th;
        let span = p.hi - p.hi_th;
        let mut value = p.gamma * (p.hi - w) / gap + p.damping * w - p.injection;
        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        grad[n - 1] = -p.gamma * span / (gap * gap) + p.damping;
        hess[(n - 1, n - 1)] = 2.0 * p.gamma * span / (gap * gap * gap);
        for (&(k, c), model) in p.incident.iter().zip(&self.models) {
            let (f, df, ddf) = model.eval(lam[k]);
            value += c * f;
            grad.axpy(c * df, &self.edge_grad(k, n), 1.0);
            self.add_edge_curvature(&mut hess, k, c * ddf);
        }
        Second {
            value,
            grad,
            hess: Some(hess),
        }
    }

    fn objective_value(&self, x: &DVector<f64>) -> f64 {
        let p = self.prob;
        let w = x[x.len() - 1];
        let lam = p.lambda(x);
        let mut value = p.gamma * (p.hi - w) / (w - p.hi_th) + p.damping * w - p.injection;
        for (&(k, c), model) in p.incident.iter().zip(&self.models) {
            value += c * model.eval(lam[k]).0;
        }
        value
    }

    fn constraints(&self, x: &DVector<f64>) -> Vec<Second> {
        let p = self.prob;
        let n = x.len();
        let w = x[n - 1];
        let lam = p.lambda(x);
        let mut out = Vec::with_capacity(2 * lam.len() + self.signs.len() + 2);

        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        grad[n - 1] = p.inertia * (w - p.omega_inf);
        hess[(n - 1, n - 1)] = p.inertia;
        for k in 0..lam.len() {
            let b = p.susceptance[k];
            grad.axpy(b * (lam[k].sin() - p.lambda_inf[k].sin()), &self.edge_grad(k, n), 1.0);
            self.add_edge_curvature(&mut hess, k, b * lam[k].cos());
        }
        out.push(Second {
            value: self.energy(x, &lam) - p.eta,
            grad,
            hess: Some(hess),
        });

        for k in 0..lam.len() {
            let g = self.edge_grad(k, n);
            out.push(Second::affine(lam[k] - FRAC_PI_2, g.clone()));
            out.push(Second::affine(-lam[k] - FRAC_PI_2, -g));
        }
        let mut g = DVector::zeros(n);
        g[n - 1] = -1.0;
        out.push(Second::affine(p.hi_th + THRESHOLD_OFFSET - w, g));
        for &(k, s) in &self.signs {
            out.push(Second::affine(s * lam[k], self.edge_grad(k, n) * s));
        }
        out
    }

    fn constraint_values(&self, x: &DVector<f64>) -> Vec<f64> {
        let p = self.prob;
        let w = x[x.len() - 1];
        let lam = p.lambda(x);
        let mut out = Vec::with_capacity(2 * lam.len() + self.signs.len() + 2);
        out.push(self.energy(x, &lam) - p.eta);
        for &l in lam.iter() {
            out.push(l - FRAC_PI_2);
            out.push(-l - FRAC_PI_2);
        }
        out.push(p.hi_th + THRESHOLD_OFFSET - w);
        out.extend(self.signs.iter().map(|&(k, s)| s * lam[k]));
        out
    }
}

/// Inner convex problem: an upper bound on the minimum of `g_i`.
pub fn solve_r_upper(problem: &EffortBoundProblem) -> Result<BoundValue> {
    problem.check_nontrivial()?;
    let models = problem
        .incident
        .iter()
        .map(|&(_, c)| if c > 0.0 { EdgeModel::HullPlus } else { EdgeModel::HullMinus })
        .collect();
    let prog = problem.program(models, Vec::new());
    let (value, x) = problem
        .solve_from(&prog, &problem.anchor())
        .ok_or_else(|| Error::Infeasible("inner relaxation has no strictly feasible start".into()))?;
    Ok(problem.value(x, value))
}

/// Sign-pattern subproblem `pattern`: bit k fixes the k-th incident line to
/// nonnegative angles (bit set) or nonpositive angles (bit clear).
fn lower_subproblem(problem: &EffortBoundProblem, pattern: u64) -> EffortProgram<'_> {
    let mut models = Vec::with_capacity(problem.degree());
    let mut signs = Vec::with_capacity(problem.degree());
    for (bit, &(k, c)) in problem.incident.iter().enumerate() {
        let nonneg = pattern >> bit & 1 == 1;
        // sin stays where it is convex in the objective, the chord replaces it
        // where it is not
        let model = match (c > 0.0, nonneg) {
            (true, false) | (false, true) => EdgeModel::Sin,
            (true, true) | (false, false) => EdgeModel::Chord,
        };
        models.push(model);
        signs.push((k, if nonneg { -1.0 } else { 1.0 }));
    }
    problem.program(models, signs)
}

/// Outer convex problems over every sign pattern of the incident lines: a
/// lower bound on the minimum of `g_i`.
pub fn solve_r_lower(problem: &EffortBoundProblem) -> Result<LowerBound> {
    problem.check_nontrivial()?;
    let deg = problem.degree();
    if deg > problem.settings.degree_limit || deg >= 64 {
        return Err(Error::Degree {
            degree: deg,
            limit: problem.settings.degree_limit,
        });
    }
    let count = 1u64 << deg;
    let anchor = problem.anchor();
    let results: Vec<(u64, Option<(f64, DVector<f64>)>)> = (0..count)
        .into_par_iter()
        .map(|pattern| {
            let prog = lower_subproblem(problem, pattern);
            let solved = find_feasible(&prog, &anchor, &problem.settings.barrier)
                .and_then(|x0| problem.solve_from(&prog, &x0));
            (pattern, solved)
        })
        .collect();
    let feasible = results.iter().filter(|(_, r)| r.is_some()).count();
    let (pattern, (value, x)) = results
        .into_iter()
        .filter_map(|(p, r)| r.map(|r| (p, r)))
        .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
        .ok_or_else(|| Error::Infeasible("no sign-pattern subproblem is feasible".into()))?;
    Ok(LowerBound {
        best: problem.value(x, value),
        pattern,
        subproblems: count as usize,
        feasible,
    })
}

/// Multi-start local minimization of `g_i` itself. Starts are the anchor,
/// seeded random points and the minimizers of both relaxations.
pub fn solve_q(problem: &EffortBoundProblem) -> Result<BoundValue> {
    problem.check_nontrivial()?;
    let prog = problem.program(vec![EdgeModel::Sin; problem.degree()], Vec::new());
    let anchor = problem.anchor();
    let mut starts = vec![anchor.clone()];
    let mut rng = ChaCha8Rng::seed_from_u64(problem.settings.seed);
    let lo = problem.hi_th + THRESHOLD_OFFSET;
    let span = problem.w_max() - lo;
    for _ in 0..problem.settings.starts {
        let mut x = anchor.clone();
        let n = x.len();
        for k in 0..n - 1 {
            x[k] += rng.gen_range(-problem.settings.spread..=problem.settings.spread);
        }
        x[n - 1] = lo + span * rng.gen_range(0.0..1.0);
        starts.push(x);
    }
    if let Ok(up) = solve_r_upper(problem) {
        starts.push(problem_x(&up, problem));
    }
    if let Ok(low) = solve_r_lower(problem) {
        starts.push(problem_x(&low.best, problem));
    }
    let best = starts
        .par_iter()
        .filter_map(|x| problem.pull_inside(&prog, x))
        .filter_map(|x0| problem.solve_from(&prog, &x0))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .ok_or(Error::Convergence {
            iterations: starts.len(),
            residual: f64::NAN,
        })?;
    Ok(problem.value(best.1, best.0))
}

/// Recovers reduced variables from a minimizer state.
fn problem_x(v: &BoundValue, problem: &EffortBoundProblem) -> DVector<f64> {
    let n = problem.theta_red.len() + 1;
    let mut x = DVector::zeros(n);
    let mut theta = vec![None; n];
    theta[n - 1] = Some(0.0);
    // walk lines until every angle is fixed (the network is connected)
    let mut changed = true;
    while changed {
        changed = false;
        for (k, &(a, b)) in problem.ends.iter().enumerate() {
            match (theta[a], theta[b]) {
                (Some(ta), None) => {
                    theta[b] = Some(ta - v.state.lambda[k]);
                    changed = true;
                }
                (None, Some(tb)) => {
                    theta[a] = Some(tb + v.state.lambda[k]);
                    changed = true;
                }
                _ => {}
            }
        }
    }
    for k in 0..n - 1 {
        x[k] = theta[k].unwrap_or(0.0);
    }
    x[n - 1] = v.omega_i;
    x
}

/// Lower bound on the controlled input over `{V <= eta}` with the
/// relaxation sandwich reported alongside.
pub fn u_min(problem: &EffortBoundProblem) -> Result<EffortReport> {
    let mut report = EffortReport {
        bus: problem.bus_id,
        eta: problem.eta,
        d_i: problem.d_i,
        u_min: 0.0,
        lower: None,
        upper: None,
        q_value: None,
        argmin_state: None,
    };
    if problem.is_trivial() {
        return Ok(report);
    }
    let (q, (upper, lower)) = rayon::join(
        || solve_q(problem),
        || rayon::join(|| solve_r_upper(problem), || solve_r_lower(problem)),
    );
    let q = q?;
    report.u_min = q.value.min(0.0);
    report.q_value = Some(q.value);
    report.argmin_state = Some(q.state);
    report.upper = Some(upper?.value);
    report.lower = Some(lower?.best.value);
    Ok(report)
}
