//! Closed-loop swing dynamics, scenarios and trajectories.
//!
//! Integration is classical fixed-step RK4. The controller is evaluated at
//! every stage, so the min/max kinks of the barrier law are only resolved to
//! the step size; there is no event location inside a step.

mod errors;
mod monitor;
mod output;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::controller::{u_hat_from_measurements, ControlLaw, ControlledBusSpec, UncertaintyBounds};
use crate::energy::{energy_v, in_phi, EnergyContext, DEFAULT_BETA};
use crate::equilibrium::{solve_equilibrium_for, EquilibriumInfo};
use crate::error::{Error, Result};
use crate::network::{Injection, PowerNetwork, ScheduleSegment};
use crate::state::SystemState;

pub use errors::{make_measurement_errors, ErrorSample, ErrorSignalSpec, MeasurementErrors, SignalShape};
pub use monitor::{AuditSummary, BusAudit, EnergyAudit, Event, MonitorConfig};
pub use output::{write_audit_json, write_csv};

use monitor::BusMonitor;

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_GUARD: f64 = 1e3;
/// Steps between re-projections of lambda onto range(D).
pub const REPROJECT_EVERY: usize = 1000;

/// Uncertainty description of one bus in a robustness run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustBus {
    pub bus: u32,
    pub bounds: UncertaintyBounds,
    #[serde(default = "ErrorSignalSpec::zero")]
    pub errors: ErrorSignalSpec,
    /// Band widening used by the monitors (rad/s).
    #[serde(default)]
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ControllerMode {
    Off,
    /// Each bus runs the law in its spec.
    #[default]
    On,
    /// Controllers switch on at `t_on`.
    Delayed { t_on: f64 },
    /// Every controlled bus runs the infinite-gain law.
    Discontinuous,
    /// Controllers act on corrupted measurements.
    Robust { buses: Vec<RobustBus> },
}

impl ControllerMode {
    pub fn activation_time(&self) -> f64 {
        match self {
            ControllerMode::Delayed { t_on } => *t_on,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// Equilibrium of the injections at t = 0.
    #[default]
    Equilibrium,
    /// Explicit state in rad and rad/s; lambda must lie in range(D).
    State { lambda: Vec<f64>, omega: Vec<f64> },
}

/// Injection override for one bus. A missing `base` keeps the network value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub bus: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<f64>,
    pub segments: Vec<ScheduleSegment>,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}
fn default_stride() -> usize {
    1
}
fn default_guard() -> f64 {
    DEFAULT_GUARD
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Network file the scenario was written for (informational for the
    /// library; the CLI resolves it).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<String>,
    pub t_end: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub initial_state: InitialState,
    #[serde(default)]
    pub injection_schedule: Vec<ScheduleEntry>,
    #[serde(default)]
    pub controller_mode: ControllerMode,
    #[serde(default)]
    pub seed: u64,
    /// Keep every `record_stride`-th step in the trajectory.
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    /// Whether to evaluate V at recorded samples.
    #[serde(default = "default_true")]
    pub record_energy: bool,
    #[serde(default = "default_guard")]
    pub frequency_guard: f64,
    #[serde(default)]
    pub monitor: Option<MonitorConfig>,
}

impl Scenario {
    pub fn new(t_end: f64) -> Self {
        Self {
            name: None,
            network: None,
            t_end,
            dt: DEFAULT_DT,
            initial_state: InitialState::Equilibrium,
            injection_schedule: Vec::new(),
            controller_mode: ControllerMode::On,
            seed: 0,
            record_stride: 1,
            record_energy: true,
            frequency_guard: DEFAULT_GUARD,
            monitor: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt + 1e-9).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Validation(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Validation(format!("t_end must be positive, got {}", self.t_end)));
        }
        if self.record_stride == 0 {
            return Err(Error::Validation("record_stride must be at least 1".into()));
        }
        for entry in &self.injection_schedule {
            for seg in &entry.segments {
                if !(seg.start >= 0.0 && seg.end > seg.start) {
                    return Err(Error::Validation(format!(
                        "bus {}: schedule window [{}, {}) must be nonempty and start at t >= 0",
                        entry.bus, seg.start, seg.end
                    )));
                }
            }
        }
        if let ControllerMode::Delayed { t_on } = self.controller_mode {
            if !(0.0..=self.t_end).contains(&t_on) {
                return Err(Error::Validation(format!("t_on = {t_on} outside [0, t_end]")));
            }
        }
        Ok(())
    }

    /// Network with the scenario's injection overrides applied.
    pub fn scheduled_network(&self, net: &PowerNetwork) -> Result<PowerNetwork> {
        let mut overrides = Vec::with_capacity(self.injection_schedule.len());
        for entry in &self.injection_schedule {
            let idx = net
                .index_of(entry.bus)
                .ok_or_else(|| Error::Validation(format!("schedule references unknown bus {}", entry.bus)))?;
            let base = entry.base.unwrap_or(net.buses()[idx].injection.base);
            overrides.push((
                entry.bus,
                Injection {
                    base,
                    segments: entry.segments.clone(),
                },
            ));
        }
        net.with_injections(overrides)
    }
}

struct BusController {
    spec: ControlledBusSpec,
    active_from: f64,
    e_hat: f64,
    errors: Option<MeasurementErrors>,
}

/// Closed-loop vector field for a fixed network and controller mode.
pub struct ClosedLoop<'a> {
    net: &'a PowerNetwork,
    controllers: Vec<BusController>,
    dampings: DVector<f64>,
    inertias: DVector<f64>,
}

impl<'a> ClosedLoop<'a> {
    pub fn new(net: &'a PowerNetwork, mode: &ControllerMode, seed: u64) -> Result<Self> {
        let mut controllers = Vec::with_capacity(net.controlled().len());
        for (k, spec) in net.controlled().iter().enumerate() {
            let mut spec = spec.clone();
            let active_from = match mode {
                ControllerMode::Off => f64::INFINITY,
                ControllerMode::Delayed { t_on } => *t_on,
                _ => 0.0,
            };
            if matches!(mode, ControllerMode::Discontinuous) {
                spec.law = ControlLaw::Discontinuous;
            }
            let mut e_hat = net.buses()[spec.index].damping;
            let mut errors = None;
            if let ControllerMode::Robust { buses } = mode {
                if let Some(rb) = buses.iter().find(|b| b.bus == spec.bus_id) {
                    e_hat = rb.bounds.e_hat;
                    let bus_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k as u64);
                    let peak = net.buses()[spec.index].injection.max_abs();
                    errors = Some(make_measurement_errors(&rb.bounds, &rb.errors, peak, bus_seed)?);
                }
            }
            controllers.push(BusController {
                spec,
                active_from,
                e_hat,
                errors,
            });
        }
        if let ControllerMode::Robust { buses } = mode {
            for rb in buses {
                if net.controlled_spec(rb.bus).is_none() {
                    return Err(Error::Validation(format!(
                        "robust settings given for uncontrolled bus {}",
                        rb.bus
                    )));
                }
            }
        }
        Ok(Self {
            net,
            controllers,
            dampings: net.dampings(),
            inertias: net.inertias(),
        })
    }

    pub fn network(&self) -> &PowerNetwork {
        self.net
    }

    /// Controller inputs given the nodal outflows `flows = D^T Y_b sin(lambda)`.
    fn inputs_with(&self, state: &SystemState, flows: &DVector<f64>, p: &DVector<f64>, t: f64) -> Vec<f64> {
        self.controllers
            .iter()
            .map(|c| {
                if t < c.active_from {
                    return 0.0;
                }
                let i = c.spec.index;
                match &c.errors {
                    None => u_hat_from_measurements(&c.spec, c.e_hat, state.omega[i], flows[i], p[i]),
                    Some(m) => {
                        let e = m.at(t);
                        u_hat_from_measurements(
                            &c.spec,
                            c.e_hat,
                            state.omega[i] + e.omega,
                            flows[i] + e.flow,
                            m.measured_p(t, p[i]),
                        )
                    }
                }
            })
            .collect()
    }

    /// Inputs of the controlled buses (in bus-id order) at `state`.
    pub fn inputs(&self, state: &SystemState, t: f64) -> Vec<f64> {
        let flows = self.net.nodal_sum(&state.lambda.map(f64::sin));
        self.inputs_with(state, &flows, &self.net.injections_at(t), t)
    }

    /// `(d lambda / dt, d omega / dt)` at `state` and time `t`.
    pub fn derivative(&self, state: &SystemState, t: f64) -> (DVector<f64>, DVector<f64>) {
        let flows = self.net.nodal_sum(&state.lambda.map(f64::sin));
        let p = self.net.injections_at(t);
        let u = self.inputs_with(state, &flows, &p, t);
        let mut rhs = &p - &flows - self.dampings.component_mul(&state.omega);
        for (c, ui) in self.controllers.iter().zip(u) {
            rhs[c.spec.index] += ui;
        }
        (self.net.edge_differences(&state.omega), rhs.component_div(&self.inertias))
    }

    fn rk4_step(&self, s: &SystemState, dt: f64) -> SystemState {
        let t = s.t;
        let shifted = |dl: &DVector<f64>, dw: &DVector<f64>, h: f64| {
            SystemState::new(&s.lambda + dl * h, &s.omega + dw * h, t + h)
        };
        let (l1, w1) = self.derivative(s, t);
        let (l2, w2) = self.derivative(&shifted(&l1, &w1, 0.5 * dt), t + 0.5 * dt);
        let (l3, w3) = self.derivative(&shifted(&l2, &w2, 0.5 * dt), t + 0.5 * dt);
        let (l4, w4) = self.derivative(&shifted(&l3, &w3, dt), t + dt);
        let h6 = dt / 6.0;
        SystemState::new(
            &s.lambda + (l1 + l2 * 2.0 + l3 * 2.0 + l4) * h6,
            &s.omega + (w1 + w2 * 2.0 + w3 * 2.0 + w4) * h6,
            t + dt,
        )
    }
}

/// Closed-loop right-hand side for a one-off evaluation.
pub fn closed_loop_rhs(
    net: &PowerNetwork,
    mode: &ControllerMode,
    state: &SystemState,
    t: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    Ok(ClosedLoop::new(net, mode, 0)?.derivative(state, t))
}

/// Equilibrium cache keyed on the exact injection vector, warm-started from
/// the previous solution.
struct EquilibriumCache {
    p: Option<DVector<f64>>,
    eq: Option<EquilibriumInfo>,
    warm: Option<DVector<f64>>,
}

impl EquilibriumCache {
    fn new() -> Self {
        Self {
            p: None,
            eq: None,
            warm: None,
        }
    }

    fn get(&mut self, net: &PowerNetwork, p: &DVector<f64>) -> Option<&EquilibriumInfo> {
        if self.p.as_ref() != Some(p) {
            self.eq = solve_equilibrium_for(net, p, self.warm.as_ref())
                .ok()
                .filter(|e| e.converged);
            if let Some(eq) = &self.eq {
                self.warm = Some(eq.theta_inf.clone());
            }
            self.p = Some(p.clone());
        }
        self.eq.as_ref()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub network_name: Option<String>,
    pub controlled_ids: Vec<u32>,
    pub bus_ids: Vec<u32>,
    pub dt: f64,
    pub t_end: f64,
    pub record_stride: usize,
    pub states: Vec<SystemState>,
    /// Inputs per recorded sample, one entry per controlled bus.
    pub inputs: Vec<Vec<f64>>,
    /// V against the equilibrium of the instantaneous injections; NaN when
    /// not recorded or when that equilibrium does not exist.
    pub energy: Vec<f64>,
    pub events: Vec<Event>,
    pub audit: AuditSummary,
}

impl Trajectory {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(|s| s.t)
    }

    pub fn omega_series(&self, bus_id: u32) -> Option<Vec<f64>> {
        let k = self.bus_ids.iter().position(|&b| b == bus_id)?;
        Some(self.states.iter().map(|s| s.omega[k]).collect())
    }

    pub fn input_series(&self, bus_id: u32) -> Option<Vec<f64>> {
        let k = self.controlled_ids.iter().position(|&b| b == bus_id)?;
        Some(self.inputs.iter().map(|u| u[k]).collect())
    }

    pub fn final_state(&self) -> &SystemState {
        self.states.last().expect("trajectory has at least one sample")
    }
}

/// Initial state of a scenario on the scheduled network.
pub fn initial_state(net: &PowerNetwork, scenario: &Scenario) -> Result<SystemState> {
    match &scenario.initial_state {
        InitialState::Equilibrium => {
            let eq = solve_equilibrium_for(net, &net.injections_at(0.0), None)?;
            if !eq.converged {
                return Err(Error::Validation(
                    "no synchronized equilibrium for the initial injections".into(),
                ));
            }
            Ok(SystemState::new(
                eq.lambda_inf,
                DVector::from_element(net.n(), eq.omega_inf),
                0.0,
            ))
        }
        InitialState::State { lambda, omega } => {
            let s = SystemState::new(DVector::from_column_slice(lambda), DVector::from_column_slice(omega), 0.0);
            if s.lambda.len() != net.m() || s.omega.len() != net.n() {
                return Err(Error::Validation(format!(
                    "initial state has {} angles and {} frequencies, network has {} lines and {} buses",
                    s.lambda.len(),
                    s.omega.len(),
                    net.m(),
                    net.n()
                )));
            }
            if !s.is_admissible(net) {
                return Err(Error::Validation("initial lambda is not in range(D)".into()));
            }
            Ok(s)
        }
    }
}

/// Integrates a scenario and audits the trajectory on the fly.
pub fn integrate(net: &PowerNetwork, scenario: &Scenario) -> Result<Trajectory> {
    scenario.validate()?;
    let net = scenario.scheduled_network(net)?;
    let mode = &scenario.controller_mode;
    let cfg = scenario.monitor.unwrap_or_default();
    let plant = ClosedLoop::new(&net, mode, scenario.seed)?;
    let mut state = initial_state(&net, scenario)?;

    let mut cache = EquilibriumCache::new();
    let p0 = net.injections_at(0.0);
    let started_in_phi = cache.get(&net, &p0).cloned().and_then(|eq| {
        EnergyContext::new(&net, eq, DEFAULT_BETA)
            .ok()
            .map(|ctx| in_phi(&net, &ctx, &state))
    });
    if let ControllerMode::Robust { buses } = mode {
        let w_inf = crate::equilibrium::omega_inf_for(&net, &p0);
        for rb in buses {
            let spec = net.controlled_spec(rb.bus).expect("checked by ClosedLoop");
            rb.bounds.check(spec, w_inf, net.buses()[spec.index].damping)?;
        }
    }

    let t_act = mode.activation_time();
    let mut monitors: Vec<BusMonitor> = net
        .controlled()
        .iter()
        .map(|s| {
            let widen = match mode {
                ControllerMode::Robust { buses } => {
                    buses.iter().find(|b| b.bus == s.bus_id).map_or(0.0, |b| b.delta)
                }
                _ => 0.0,
            };
            let tol = cfg.band_tol + widen;
            BusMonitor::new(s.bus_id, [s.omega_lo - tol, s.omega_hi + tol])
        })
        .collect();

    let steps = scenario.steps();
    let dt = scenario.dt;
    let stride = scenario.record_stride;
    let mut events = Vec::new();
    if let ControllerMode::Delayed { t_on } = mode {
        events.push(Event::ControllerActivated { t: *t_on });
    }
    let mut traj_states = Vec::with_capacity(steps / stride + 2);
    let mut traj_inputs = Vec::with_capacity(steps / stride + 2);
    let mut traj_energy = Vec::with_capacity(steps / stride + 2);
    let mut energy_audit = EnergyAudit {
        checked_steps: 0,
        skipped_steps: 0,
        max_increase: f64::NEG_INFINITY,
        violations: 0,
        tolerance: cfg.energy_tol,
    };
    // (injections, V) at the previous step
    let mut prev: Option<(DVector<f64>, f64)> = None;

    for k in 0..=steps {
        let t = k as f64 * dt;
        state.t = t;
        let p = net.injections_at(t);
        let u = plant.inputs(&state, t);
        let monitoring = t >= t_act;
        for (m, (spec, &ui)) in monitors.iter_mut().zip(net.controlled().iter().zip(&u)) {
            m.observe(t, state.omega[spec.index], ui, monitoring, &cfg, &mut events);
        }

        let constant_since_prev = prev
            .as_ref()
            .is_some_and(|(pp, _)| *pp == p && net.injections_at(t - 0.5 * dt) == p);
        let record = k % stride == 0 || k == steps;
        let mut v_now = None;
        if constant_since_prev || record && scenario.record_energy {
            v_now = cache.get(&net, &p).map(|eq| energy_v(&net, eq, &state));
        }
        let controlled_now = !matches!(mode, ControllerMode::Off) && t - dt >= t_act;
        let in_deadbands = |w: f64| net.controlled().iter().all(|s| s.omega_lo_th <= w && w <= s.omega_hi_th);
        if constant_since_prev && controlled_now && !in_deadbands(crate::equilibrium::omega_inf_for(&net, &p)) {
            energy_audit.skipped_steps += 1;
        } else if constant_since_prev {
            if let (Some((_, v_prev)), Some(v)) = (&prev, v_now) {
                let inc = v - v_prev;
                energy_audit.checked_steps += 1;
                energy_audit.max_increase = energy_audit.max_increase.max(inc);
                if inc > cfg.energy_tol {
                    energy_audit.violations += 1;
                }
            }
        }
        if record {
            traj_states.push(state.clone());
            traj_inputs.push(u);
            traj_energy.push(if scenario.record_energy { v_now.unwrap_or(f64::NAN) } else { f64::NAN });
        }
        // V for the next comparison: only needed if the injections stay put
        let v_for_next = match v_now {
            Some(v) => Some(v),
            None if net.injections_at(t + 0.5 * dt) == p => cache.get(&net, &p).map(|eq| energy_v(&net, eq, &state)),
            None => None,
        };
        prev = v_for_next.map(|v| (p.clone(), v));

        if k == steps {
            break;
        }
        state = plant.rk4_step(&state, dt);
        if (k + 1) % REPROJECT_EVERY == 0 {
            state.lambda = net.project_to_range(&state.lambda);
        }
        if let Some((i, &w)) = state
            .omega
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.abs() <= scenario.frequency_guard))
        {
            return Err(Error::Blowup {
                t: state.t,
                bus: net.buses()[i].id as usize,
                value: w,
            });
        }
    }

    let p_end = net.injections_at(state.t);
    let final_frequency_error = cache
        .get(&net, &p_end)
        .map(|eq| state.omega.add_scalar(-eq.omega_inf).amax());
    let buses: Vec<BusAudit> = monitors.into_iter().map(BusMonitor::finish).collect();
    let last_nonzero_u = buses.iter().filter_map(|b| b.last_nonzero_u).fold(None, |acc: Option<f64>, t| {
        Some(acc.map_or(t, |a| a.max(t)))
    });
    if energy_audit.checked_steps == 0 {
        energy_audit.max_increase = 0.0;
    }

    Ok(Trajectory {
        network_name: net.name().map(str::to_owned),
        controlled_ids: net.controlled().iter().map(|s| s.bus_id).collect(),
        bus_ids: net.buses().iter().map(|b| b.id).collect(),
        dt,
        t_end: scenario.t_end,
        record_stride: stride,
        states: traj_states,
        inputs: traj_inputs,
        energy: traj_energy,
        events,
        audit: AuditSummary {
            activation_time: t_act,
            started_in_phi,
            energy: energy_audit,
            buses,
            last_nonzero_u,
            final_frequency_error,
            steps,
        },
    })
}

/// Audit summary of a finished trajectory.
pub fn monitor_report(traj: &Trajectory) -> AuditSummary {
    traj.audit.clone()
}
