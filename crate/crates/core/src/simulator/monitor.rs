//! Online invariant audits evaluated at every integration step.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

/// Tolerances used by the monitors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorConfig {
    /// Slack on the safe band (rad/s).
    pub band_tol: f64,
    /// Allowed per-step regress while approaching the band from outside.
    pub monotone_tol: f64,
    /// Allowed single-step increase of V on steps with constant injections.
    pub energy_tol: f64,
    /// Window length for counting input switches (s).
    pub switch_window: f64,
    /// Inputs with magnitude at or below this count as zero when counting
    /// switches.
    pub switch_tol: f64,
    /// Per-step input change above which a step counts as a jump. A
    /// Lipschitz law moves u by O(dt) per step; a discontinuous law does not.
    pub jump_tol: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            band_tol: 1e-6,
            monotone_tol: 1e-8,
            energy_tol: 1e-6,
            switch_window: 0.1,
            switch_tol: 1e-6,
            jump_tol: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    ControllerActivated { t: f64 },
    BandExit { bus: u32, t: f64 },
    BandEntry { bus: u32, t: f64 },
    Blowup { bus: u32, t: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyAudit {
    pub checked_steps: usize,
    /// Constant-injection steps left unchecked because the sync frequency
    /// sat outside a controlled deadband, where decay of V is not implied.
    #[serde(default)]
    pub skipped_steps: usize,
    pub max_increase: f64,
    pub violations: usize,
    pub tolerance: f64,
}

impl EnergyAudit {
    pub fn pass(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusAudit {
    pub bus: u32,
    /// Audited band including tolerances and any robustness widening (rad/s).
    pub band: [f64; 2],
    /// Whether the bus was inside the band when monitoring began.
    pub started_inside: Option<bool>,
    /// First entry time for buses that started outside.
    pub first_entry: Option<f64>,
    /// Exit times after the bus had been inside.
    pub exits: Vec<f64>,
    pub monotone_violations: usize,
    pub max_regress: f64,
    pub min_omega: f64,
    pub max_omega: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub last_nonzero_u: Option<f64>,
    /// Changes of sign(u) over the whole run.
    pub switch_count: usize,
    /// Largest number of sign(u) changes inside one switch window.
    pub max_switches_in_window: usize,
    /// Steps with |du| above the jump tolerance.
    #[serde(default)]
    pub jump_count: usize,
    /// Largest number of direction reversals between consecutive jumps
    /// inside one switch window.
    #[serde(default)]
    pub max_reversals_in_window: usize,
}

impl BusAudit {
    pub fn invariance_pass(&self) -> bool {
        self.exits.is_empty()
    }

    pub fn attractivity_pass(&self) -> bool {
        self.monotone_violations == 0 && self.exits.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub activation_time: f64,
    pub started_in_phi: Option<bool>,
    pub energy: EnergyAudit,
    pub buses: Vec<BusAudit>,
    pub last_nonzero_u: Option<f64>,
    /// `||omega(t_end) - omega_inf||_inf` against the final injections.
    pub final_frequency_error: Option<f64>,
    pub steps: usize,
}

impl AuditSummary {
    pub fn invariance_pass(&self) -> bool {
        self.buses.iter().all(BusAudit::invariance_pass)
    }

    pub fn attractivity_pass(&self) -> bool {
        self.buses.iter().all(BusAudit::attractivity_pass)
    }

    pub fn bus(&self, id: u32) -> Option<&BusAudit> {
        self.buses.iter().find(|b| b.bus == id)
    }
}

/// Appends `t` and drops entries older than `window`; returns the count left.
fn push_windowed(times: &mut VecDeque<f64>, t: f64, window: f64) -> usize {
    times.push_back(t);
    while times.front().is_some_and(|&f| t - f > window) {
        times.pop_front();
    }
    times.len()
}

/// Linear interpolation of the time `omega` crosses `level` between two
/// samples.
fn crossing(t0: f64, w0: f64, t1: f64, w1: f64, level: f64) -> f64 {
    let d = w0 - w1;
    if d == 0.0 {
        return t1;
    }
    t0 + (t1 - t0) * (w0 - level) / d
}

pub(crate) struct BusMonitor {
    audit: BusAudit,
    inside: Option<bool>,
    prev_omega: f64,
    prev_t: f64,
    prev_sign: i8,
    switches: VecDeque<f64>,
    prev_u: f64,
    last_jump_sign: i8,
    reversals: VecDeque<f64>,
}

impl BusMonitor {
    pub(crate) fn new(bus: u32, band: [f64; 2]) -> Self {
        Self {
            audit: BusAudit {
                bus,
                band,
                started_inside: None,
                first_entry: None,
                exits: Vec::new(),
                monotone_violations: 0,
                max_regress: 0.0,
                min_omega: f64::INFINITY,
                max_omega: f64::NEG_INFINITY,
                min_u: f64::INFINITY,
                max_u: f64::NEG_INFINITY,
                last_nonzero_u: None,
                switch_count: 0,
                max_switches_in_window: 0,
                jump_count: 0,
                max_reversals_in_window: 0,
            },
            inside: None,
            prev_omega: f64::NAN,
            prev_t: f64::NAN,
            prev_sign: 0,
            switches: VecDeque::new(),
            prev_u: f64::NAN,
            last_jump_sign: 0,
            reversals: VecDeque::new(),
        }
    }

    pub(crate) fn observe(
        &mut self,
        t: f64,
        omega: f64,
        u: f64,
        monitoring: bool,
        cfg: &MonitorConfig,
        events: &mut Vec<Event>,
    ) {
        let a = &mut self.audit;
        a.min_omega = a.min_omega.min(omega);
        a.max_omega = a.max_omega.max(omega);
        a.min_u = a.min_u.min(u);
        a.max_u = a.max_u.max(u);
        if u != 0.0 {
            a.last_nonzero_u = Some(t);
        }

        let sign = if u > cfg.switch_tol {
            1
        } else if u < -cfg.switch_tol {
            -1
        } else {
            0
        };
        if sign != self.prev_sign && !self.prev_t.is_nan() {
            a.switch_count += 1;
            a.max_switches_in_window = a.max_switches_in_window.max(push_windowed(&mut self.switches, t, cfg.switch_window));
        }
        self.prev_sign = sign;

        let du = u - self.prev_u;
        if du.abs() > cfg.jump_tol {
            a.jump_count += 1;
            let s = if du > 0.0 { 1 } else { -1 };
            if self.last_jump_sign == -s {
                a.max_reversals_in_window = a
                    .max_reversals_in_window
                    .max(push_windowed(&mut self.reversals, t, cfg.switch_window));
            }
            self.last_jump_sign = s;
        }
        self.prev_u = u;

        if monitoring {
            let [lo, hi] = a.band;
            let now_inside = omega >= lo && omega <= hi;
            match self.inside {
                None => {
                    a.started_inside = Some(now_inside);
                }
                Some(was) => {
                    if a.started_inside == Some(false) && a.first_entry.is_none() {
                        let regress = if self.prev_omega > hi {
                            omega - self.prev_omega
                        } else {
                            self.prev_omega - omega
                        };
                        a.max_regress = a.max_regress.max(regress);
                        if regress > cfg.monotone_tol {
                            a.monotone_violations += 1;
                        }
                    }
                    if was && !now_inside {
                        let level = if omega > hi { hi } else { lo };
                        let tc = crossing(self.prev_t, self.prev_omega, t, omega, level);
                        a.exits.push(tc);
                        events.push(Event::BandExit { bus: a.bus, t: tc });
                    } else if !was && now_inside {
                        let level = if self.prev_omega > hi { hi } else { lo };
                        let tc = crossing(self.prev_t, self.prev_omega, t, omega, level);
                        a.first_entry.get_or_insert(tc);
                        events.push(Event::BandEntry { bus: a.bus, t: tc });
                    }
                }
            }
            self.inside = Some(now_inside);
        }
        self.prev_omega = omega;
        self.prev_t = t;
    }

    pub(crate) fn finish(self) -> BusAudit {
        self.audit
    }
}
