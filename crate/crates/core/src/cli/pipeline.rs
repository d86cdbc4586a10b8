//! Library-level pipelines behind the subcommands.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::presets::{sinusoid_schedule, Job, NOISE_AMPLITUDE_HZ};
use crate::bounds::{u_min, MarginRule, EffortBoundProblem, EffortReport, EffortSettings};
use crate::controller::UncertaintyBounds;
use crate::energy::{energy_v, in_phi, EnergyContext};
use crate::equilibrium::{solve_equilibrium, EquilibriumInfo};
use crate::error::{Error, Result};
use crate::network::{ieee39, two_bus, PowerNetwork};
use crate::simulator::{integrate, ControllerMode, ErrorSignalSpec, InitialState, RobustBus, Scenario, SignalShape, Trajectory};
use crate::state::SystemState;

/// Loads a network from a path; `builtin:ieee39` and `builtin:two_bus` name
/// the bundled cases.
pub fn resolve_network(spec: &str) -> Result<PowerNetwork> {
    match spec {
        "builtin:ieee39" => Ok(ieee39()),
        "builtin:two_bus" => Ok(two_bus()),
        path => PowerNetwork::load(Path::new(path)),
    }
}

/// Runs jobs concurrently; results keep the job order.
pub fn run_jobs(jobs: &[Job]) -> Vec<Result<Trajectory>> {
    jobs.par_iter().map(|j| integrate(&j.network, &j.scenario)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certificate {
    pub t: f64,
    pub sync_holds: bool,
    pub sync_margin: f64,
    pub omega_inf: f64,
    pub converged: bool,
    pub residual: f64,
    pub iterations: usize,
    pub max_abs_lambda: f64,
    pub c: Option<f64>,
    pub beta: f64,
    pub phi_level: Option<f64>,
    /// Membership of a supplied state in the region of attraction estimate.
    pub state_in_phi: Option<bool>,
    pub state_energy: Option<f64>,
}

pub fn certify(net: &PowerNetwork, t: f64, beta: f64, state: Option<&SystemState>) -> Result<Certificate> {
    let eq = solve_equilibrium(net, t)?;
    let ctx = if eq.converged {
        Some(EnergyContext::new(net, eq.clone(), beta)?)
    } else {
        None
    };
    let (state_in_phi, state_energy) = match (state, &ctx) {
        (Some(s), Some(ctx)) => {
            if s.lambda.len() != net.m() || s.omega.len() != net.n() {
                return Err(Error::Validation("state does not match the network size".into()));
            }
            (Some(in_phi(net, ctx, s)), Some(energy_v(net, &eq, s)))
        }
        _ => (None, None),
    };
    Ok(Certificate {
        t,
        sync_holds: eq.sync_holds(),
        sync_margin: eq.sync_margin,
        omega_inf: eq.omega_inf,
        converged: eq.converged,
        residual: eq.residual,
        iterations: eq.iterations,
        max_abs_lambda: eq.lambda_inf.amax(),
        c: ctx.as_ref().map(|c| c.c_level),
        beta,
        phi_level: ctx.as_ref().map(|c| c.phi_level()),
        state_in_phi,
        state_energy,
    })
}

fn energy_context(net: &PowerNetwork, beta: f64) -> Result<EnergyContext> {
    let eq = solve_equilibrium(net, 0.0)?;
    if !eq.converged {
        return Err(Error::Validation("no synchronized equilibrium at t = 0".into()));
    }
    EnergyContext::new(net, eq, beta)
}

/// Effort bound at level `eta` for `bus`, using the injections at t = 0.
pub fn bound(net: &PowerNetwork, bus: u32, eta: f64, beta: f64, settings: EffortSettings) -> Result<EffortReport> {
    let ctx = energy_context(net, beta)?;
    let problem = EffortBoundProblem::new(net, &ctx, bus, eta, settings)?;
    u_min(&problem)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RealizationRun {
    pub seed: u64,
    pub initial_energy: f64,
    pub min_input: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Realization {
    pub report: EffortReport,
    pub t_end: f64,
    pub runs: Vec<RealizationRun>,
}

impl Realization {
    pub fn min_input(&self) -> f64 {
        self.runs.iter().map(|r| r.min_input).fold(f64::INFINITY, f64::min)
    }

    /// Every trajectory stays above the bound up to `tol`.
    pub fn pass(&self, tol: f64) -> bool {
        self.runs.iter().all(|r| r.min_input >= self.report.u_min - tol)
    }
}

/// Random states near `center` (reduced angles and frequencies). States
/// outside `{V <= eta}` are pulled toward the equilibrium onto its boundary.
fn sample_level_set(
    net: &PowerNetwork,
    eq: &EquilibriumInfo,
    eta: f64,
    center: &SystemState,
    rng: &mut ChaCha8Rng,
) -> SystemState {
    const SPREAD: f64 = 0.02;
    let theta_c = net.angles_from_edges(&center.lambda);
    let theta_e = net.angles_from_edges(&eq.lambda_inf);
    let theta = theta_c.map(|x| x + rng.gen_range(-SPREAD..=SPREAD));
    let omega = center.omega.map(|x| x + rng.gen_range(-SPREAD..=SPREAD));
    let omega_e = DVector::from_element(net.n(), eq.omega_inf);
    let at = |s: f64| {
        let th = &theta_e + (&theta - &theta_e) * s;
        SystemState::from_angles(net, &th, &omega_e + (&omega - &omega_e) * s, 0.0)
    };
    let inside = |st: &SystemState| energy_v(net, eq, st) <= eta && st.lambda.amax() < PI / 2.0;
    let first = at(1.0);
    if inside(&first) {
        return first;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if inside(&at(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(lo)
}

/// Effort bound followed by `count` closed-loop runs from random states in
/// the level set around the bound's minimizer; records the smallest input
/// of `bus` along each run.
pub fn bound_realization(
    net: &PowerNetwork,
    bus: u32,
    eta: f64,
    count: usize,
    seed: u64,
    t_end: f64,
    dt: f64,
) -> Result<Realization> {
    let ctx = energy_context(net, crate::energy::DEFAULT_BETA)?;
    let problem = EffortBoundProblem::new(net, &ctx, bus, eta, EffortSettings::default())?;
    let report = u_min(&problem)?;
    let eq = &ctx.equilibrium;
    let center = report.argmin_state.clone().unwrap_or_else(|| {
        SystemState::new(eq.lambda_inf.clone(), DVector::from_element(net.n(), eq.omega_inf), 0.0)
    });
    let pos = net.controlled().iter().position(|s| s.bus_id == bus).expect("checked by the problem");
    let runs = (0..count as u64)
        .into_par_iter()
        .map(|k| {
            let run_seed = seed.wrapping_add(k);
            let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
            let start = sample_level_set(net, eq, eta, &center, &mut rng);
            let mut sc = Scenario::new(t_end);
            sc.dt = dt;
            sc.record_energy = false;
            sc.initial_state = InitialState::State {
                lambda: start.lambda.iter().copied().collect(),
                omega: start.omega.iter().copied().collect(),
            };
            let traj = integrate(net, &sc)?;
            let min_input = traj.inputs.iter().map(|u| u[pos]).fold(f64::INFINITY, f64::min);
            Ok(RealizationRun {
                seed: run_seed,
                initial_energy: energy_v(net, eq, &start),
                min_input,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Realization { report, t_end, runs })
}

/// Uncertainty used in the robustness runs for one bus: believed damping
/// doubled, injections overestimated by 10 percent and a small frequency
/// measurement error.
pub fn standard_uncertainty(net: &PowerNetwork, bus: u32) -> Result<(UncertaintyBounds, ErrorSignalSpec)> {
    let idx = net
        .index_of(bus)
        .ok_or_else(|| Error::Validation(format!("unknown bus {bus}")))?;
    let b = &net.buses()[idx];
    let eps_omega = NOISE_AMPLITUDE_HZ * 2.0 * PI;
    let p_rel = 0.1;
    let p_peak = sinusoid_peak(net, idx);
    let bounds = UncertaintyBounds {
        eps_omega,
        eps_lambda: 0.0,
        eps_p: p_rel * p_peak,
        eps_e: b.damping,
        e_hat: 2.0 * b.damping,
    };
    let errors = ErrorSignalSpec {
        shape: SignalShape::SeededUniform { hold: 0.01 },
        omega_amp: eps_omega,
        lambda_amp: 0.0,
        p_amp: 0.0,
        p_rel,
    };
    Ok((bounds, errors))
}

/// Peak injection magnitude of a bus under the sinusoid schedule.
fn sinusoid_peak(net: &PowerNetwork, idx: usize) -> f64 {
    let sc = Scenario {
        injection_schedule: sinusoid_schedule(net),
        ..Scenario::new(60.0)
    };
    sc.scheduled_network(net)
        .map(|n| n.buses()[idx].injection.max_abs())
        .unwrap_or_else(|_| net.buses()[idx].injection.max_abs())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustBusMargin {
    pub bus: u32,
    pub bounds: UncertaintyBounds,
    /// Smallest margin under the selected rule (rad/s).
    pub delta: Option<f64>,
    /// Left-hand sides at that margin.
    pub lhs: Option<(f64, f64)>,
    pub literal_delta: Option<f64>,
    pub worst_case_delta: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustRun {
    pub seed: u64,
    pub pass: bool,
    /// Largest distance outside the widened band over all controlled buses
    /// (rad/s, nonpositive when inside).
    pub worst_excess: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustOutcome {
    pub rule: MarginRule,
    pub margins: Vec<RobustBusMargin>,
    pub delta: Option<f64>,
    pub runs: Vec<RobustRun>,
}

/// Margin search on every controlled bus followed by `runs` seeded noisy
/// runs of the sinusoid scenario with the band widened by the margin.
pub fn robust(net: &PowerNetwork, rule: MarginRule, runs: usize, seed: u64, t_end: f64, dt: f64) -> Result<RobustOutcome> {
    let mut margins = Vec::new();
    let mut buses = Vec::new();
    for spec in net.controlled() {
        let (bounds, errors) = standard_uncertainty(net, spec.bus_id)?;
        let literal_delta = MarginRule::Literal.min_delta(spec, &bounds);
        let worst_case_delta = MarginRule::WorstCase.min_delta(spec, &bounds);
        let delta = match rule {
            MarginRule::Literal => literal_delta,
            MarginRule::WorstCase => worst_case_delta,
        };
        margins.push(RobustBusMargin {
            bus: spec.bus_id,
            bounds,
            delta,
            lhs: delta.map(|d| rule.lhs(spec, &bounds, d)),
            literal_delta,
            worst_case_delta,
        });
        buses.push(RobustBus {
            bus: spec.bus_id,
            bounds,
            errors,
            delta: delta.unwrap_or(0.0),
        });
    }
    let delta = margins
        .iter()
        .map(|m| m.delta)
        .try_fold(0.0f64, |acc, d| d.map(|d| acc.max(d)));
    if delta.is_none() {
        return Ok(RobustOutcome {
            rule,
            margins,
            delta,
            runs: Vec::new(),
        });
    }
    let results = (0..runs as u64)
        .into_par_iter()
        .map(|k| {
            let mut sc = Scenario::new(t_end);
            sc.dt = dt;
            sc.seed = seed.wrapping_add(k);
            sc.record_energy = false;
            sc.injection_schedule = sinusoid_schedule(net);
            sc.controller_mode = ControllerMode::Robust { buses: buses.clone() };
            let traj = integrate(net, &sc)?;
            let worst_excess = traj
                .audit
                .buses
                .iter()
                .map(|b| {
                    let spec = net.controlled_spec(b.bus).expect("monitor of a controlled bus");
                    let d = buses.iter().find(|r| r.bus == b.bus).map_or(0.0, |r| r.delta);
                    (b.max_omega - spec.omega_hi - d).max(spec.omega_lo - d - b.min_omega)
                })
                .fold(f64::NEG_INFINITY, f64::max);
            Ok(RobustRun {
                seed: sc.seed,
                pass: traj.audit.invariance_pass(),
                worst_excess,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RobustOutcome {
        rule,
        margins,
        delta,
        runs: results,
    })
}
