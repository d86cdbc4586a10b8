//! Named scenarios reproducing the standard experiments on a network.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bounds::MarginRule;
use crate::controller::{ControlLaw, UncertaintyBounds};
use crate::error::{Error, Result};
use crate::network::{BusKind, PowerNetwork, Profile, ScheduleSegment};
use crate::simulator::{ControllerMode, ErrorSignalSpec, RobustBus, Scenario, ScheduleEntry, SignalShape};

/// Bus whose supply is cut in the outage scenario.
pub const OUTAGE_BUS: u32 = 38;
/// Bus singled out by the gain sweeps and the effort bound.
pub const FOCUS_BUS: u32 = 30;
pub const DEFAULT_GAMMAS: [f64; 4] = [0.1, 2.0, 10.0, f64::INFINITY];
pub const NOISY_GAMMAS: [f64; 2] = [2.0, f64::INFINITY];
/// Frequency measurement error amplitude (Hz) and frequency (Hz).
pub const NOISE_AMPLITUDE_HZ: f64 = 0.001;
pub const NOISE_FREQUENCY: f64 = 100.0;
pub const DEFAULT_ETA: f64 = 0.5;
pub const BOUND_TRAJECTORIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    OutageG9,
    Sinusoid30pct,
    Delayed12s,
    GammaSweep,
    NoisyMeasurement,
    BoundSweep100,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::OutageG9,
        Preset::Sinusoid30pct,
        Preset::Delayed12s,
        Preset::GammaSweep,
        Preset::NoisyMeasurement,
        Preset::BoundSweep100,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::OutageG9 => "outage_g9",
            Preset::Sinusoid30pct => "sinusoid_30pct",
            Preset::Delayed12s => "delayed_12s",
            Preset::GammaSweep => "gamma_sweep",
            Preset::NoisyMeasurement => "noisy_measurement",
            Preset::BoundSweep100 => "bound_sweep_100",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Preset::ALL.iter().map(|p| p.name()).collect();
                Error::Validation(format!("unknown preset {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

/// Caller overrides applied on top of a preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub seed: Option<u64>,
    pub gammas: Option<Vec<f64>>,
    pub eta: Option<f64>,
    pub beta: Option<f64>,
    pub record_stride: Option<usize>,
}

/// One simulation: a label (used for file names), the network it runs on
/// and the scenario.
#[derive(Debug, Clone)]
pub struct Job {
    pub label: String,
    pub network: PowerNetwork,
    pub scenario: Scenario,
}

/// Sinusoidal perturbation of every uncontrolled load bus over `[0, 30)`:
/// `(1 + 0.3 sin(pi t / 30)) p_i(0)`.
pub fn sinusoid_schedule(net: &PowerNetwork) -> Vec<ScheduleEntry> {
    net.buses()
        .iter()
        .filter(|b| b.kind == BusKind::Load && net.controlled_spec(b.id).is_none())
        .map(|b| ScheduleEntry {
            bus: b.id,
            base: None,
            segments: vec![ScheduleSegment {
                start: 0.0,
                end: 30.0,
                profile: Profile::Sinusoid {
                    amplitude_frac: 0.3,
                    period: 60.0,
                },
            }],
        })
        .collect()
}

fn outage_schedule(net: &PowerNetwork) -> Result<Vec<ScheduleEntry>> {
    if net.index_of(OUTAGE_BUS).is_none() {
        return Err(Error::Validation(format!("outage preset needs bus {OUTAGE_BUS}")));
    }
    Ok(vec![ScheduleEntry {
        bus: OUTAGE_BUS,
        base: None,
        segments: vec![ScheduleSegment {
            start: 10.0,
            end: 40.0,
            profile: Profile::Constant(0.0),
        }],
    }])
}

/// The bus used by single-bus presets: the focus bus when controlled, else
/// the first controlled bus.
pub fn focus_bus(net: &PowerNetwork) -> Result<u32> {
    if net.controlled_spec(FOCUS_BUS).is_some() {
        return Ok(FOCUS_BUS);
    }
    net.controlled()
        .first()
        .map(|s| s.bus_id)
        .ok_or_else(|| Error::Validation("network has no controlled bus".into()))
}

/// Network with the gain of `bus` replaced; an infinite gain selects the
/// discontinuous law.
pub fn with_bus_gain(net: &PowerNetwork, bus: u32, gamma: f64) -> Result<PowerNetwork> {
    if !(gamma > 0.0) {
        return Err(Error::Validation(format!("gain must be positive, got {gamma}")));
    }
    let specs = net
        .controlled()
        .iter()
        .map(|s| {
            if s.bus_id != bus {
                return s.clone();
            }
            if gamma.is_infinite() {
                let mut s = s.clone();
                s.law = ControlLaw::Discontinuous;
                s
            } else {
                let mut s = s.clone().with_gamma(gamma);
                s.law = ControlLaw::Barrier;
                s
            }
        })
        .collect();
    net.with_controlled(specs)
}

pub fn gamma_label(gamma: f64) -> String {
    if gamma.is_infinite() {
        "inf".to_owned()
    } else {
        format!("{gamma}")
    }
}

fn scenario(name: String, t_end: f64, schedule: Vec<ScheduleEntry>, mode: ControllerMode, ov: &Overrides) -> Scenario {
    let mut sc = Scenario::new(ov.t_end.unwrap_or(t_end));
    sc.name = Some(name);
    sc.injection_schedule = schedule;
    sc.controller_mode = mode;
    if let Some(dt) = ov.dt {
        sc.dt = dt;
    }
    if let Some(seed) = ov.seed {
        sc.seed = seed;
    }
    if let Some(stride) = ov.record_stride {
        sc.record_stride = stride;
    }
    sc
}

/// Frequency error bounds used by the noisy preset for bus `bus` (rad/s).
pub fn noise_bounds(net: &PowerNetwork, bus: u32) -> (UncertaintyBounds, ErrorSignalSpec) {
    let amp = NOISE_AMPLITUDE_HZ * 2.0 * PI;
    let idx = net.index_of(bus).expect("controlled bus exists");
    let bounds = UncertaintyBounds {
        eps_omega: amp,
        ..UncertaintyBounds::exact(net.buses()[idx].damping)
    };
    let errors = ErrorSignalSpec {
        shape: SignalShape::Sinusoid {
            frequency: NOISE_FREQUENCY,
        },
        omega_amp: amp,
        ..ErrorSignalSpec::zero()
    };
    (bounds, errors)
}

/// Expands a simulation preset into jobs. The bound preset has no
/// simulation jobs of its own and returns an empty list.
pub fn preset_jobs(preset: Preset, net: &PowerNetwork, ov: &Overrides) -> Result<Vec<Job>> {
    let job = |label: &str, network: PowerNetwork, scenario: Scenario| Job {
        label: label.to_owned(),
        network,
        scenario,
    };
    let tag = |suffix: &str| format!("{}_{suffix}", preset.name());
    let jobs = match preset {
        Preset::OutageG9 => {
            let sched = outage_schedule(net)?;
            vec![
                job(&tag("off"), net.clone(), scenario(tag("off"), 60.0, sched.clone(), ControllerMode::Off, ov)),
                job(&tag("on"), net.clone(), scenario(tag("on"), 60.0, sched, ControllerMode::On, ov)),
            ]
        }
        Preset::Sinusoid30pct => {
            let sched = sinusoid_schedule(net);
            vec![
                job(&tag("off"), net.clone(), scenario(tag("off"), 60.0, sched.clone(), ControllerMode::Off, ov)),
                job(&tag("on"), net.clone(), scenario(tag("on"), 60.0, sched, ControllerMode::On, ov)),
            ]
        }
        Preset::Delayed12s => {
            let sched = sinusoid_schedule(net);
            vec![job(
                &tag("on"),
                net.clone(),
                scenario(tag("on"), 60.0, sched, ControllerMode::Delayed { t_on: 12.0 }, ov),
            )]
        }
        Preset::GammaSweep => {
            let bus = focus_bus(net)?;
            let gammas = ov.gammas.clone().unwrap_or_else(|| DEFAULT_GAMMAS.to_vec());
            gammas
                .iter()
                .map(|&g| {
                    let label = tag(&format!("gamma_{}", gamma_label(g)));
                    let sc = scenario(label.clone(), 30.0, sinusoid_schedule(net), ControllerMode::On, ov);
                    Ok(job(&label, with_bus_gain(net, bus, g)?, sc))
                })
                .collect::<Result<_>>()?
        }
        Preset::NoisyMeasurement => {
            let bus = focus_bus(net)?;
            let gammas = ov.gammas.clone().unwrap_or_else(|| NOISY_GAMMAS.to_vec());
            let (bounds, errors) = noise_bounds(net, bus);
            gammas
                .iter()
                .map(|&g| {
                    let label = tag(&format!("gamma_{}", gamma_label(g)));
                    let gained = with_bus_gain(net, bus, g)?;
                    // the margin only has meaning for the Lipschitz law
                    let delta = if g.is_finite() {
                        let spec = gained.controlled_spec(bus).expect("controlled bus exists");
                        MarginRule::WorstCase.min_delta(spec, &bounds).unwrap_or(0.0)
                    } else {
                        0.0
                    };
                    let mode = ControllerMode::Robust {
                        buses: vec![RobustBus {
                            bus,
                            bounds,
                            errors,
                            delta,
                        }],
                    };
                    let sc = scenario(label.clone(), 30.0, sinusoid_schedule(net), mode, ov);
                    Ok(job(&label, gained, sc))
                })
                .collect::<Result<_>>()?
        }
        Preset::BoundSweep100 => Vec::new(),
    };
    Ok(jobs)
}
