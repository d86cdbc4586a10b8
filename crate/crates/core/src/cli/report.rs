//! Plain-text summaries. Frequencies are shown as deviations in Hz.

use std::f64::consts::PI;
use std::fmt::Write;

use super::pipeline::{Certificate, Realization, RobustOutcome};
use crate::bounds::{EffortReport, EnvelopeResult};
use crate::simulator::Trajectory;

/// Six significant digits, switching to exponent form for very large or
/// small magnitudes.
pub fn sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_owned();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&mag) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - mag).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_owned()
    } else {
        s
    }
}

pub fn hz(rad_s: f64) -> String {
    format!("{} Hz", sig(rad_s / (2.0 * PI)))
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn trajectory_report(label: &str, traj: &Trajectory) -> String {
    let a = &traj.audit;
    let mut out = String::new();
    let _ = writeln!(out, "== {label} ==");
    let _ = writeln!(
        out,
        "network: {}  steps: {}  dt: {} s  t_end: {} s",
        traj.network_name.as_deref().unwrap_or("(unnamed)"),
        a.steps,
        sig(traj.dt),
        sig(traj.t_end)
    );
    if let Some(inside) = a.started_in_phi {
        let _ = writeln!(out, "initial state in region estimate: {}", if inside { "yes" } else { "no" });
    }
    let max_inc = if a.energy.checked_steps == 0 { 0.0 } else { a.energy.max_increase.max(0.0) };
    let _ = write!(
        out,
        "V monotone: {} (max increase {}, {} steps checked",
        verdict(a.energy.pass()),
        sig(max_inc),
        a.energy.checked_steps
    );
    if a.energy.skipped_steps > 0 {
        let _ = write!(out, ", {} skipped with omega_inf outside a deadband", a.energy.skipped_steps);
    }
    out.push_str(")\n");
    match a.buses.iter().find_map(|b| b.exits.first().map(|t| (b.bus, *t))) {
        None => {
            let _ = writeln!(out, "safe-band invariance: PASS");
        }
        Some((bus, t)) => {
            let _ = writeln!(out, "safe-band invariance: FAIL (bus {bus} exit at t≈{})", sig(t));
        }
    }
    let outside: Vec<_> = a.buses.iter().filter(|b| b.started_inside == Some(false)).collect();
    if !outside.is_empty() {
        let ok = outside.iter().all(|b| b.attractivity_pass());
        let _ = writeln!(out, "attractivity: {}", verdict(ok));
        for b in outside {
            let entry = b.first_entry.map_or("never".to_owned(), |t| format!("t≈{}", sig(t)));
            let _ = writeln!(
                out,
                "  bus {}: entry {entry}, monotone violations {}, max regress {}",
                b.bus,
                b.monotone_violations,
                hz(b.max_regress)
            );
        }
    }
    for b in &a.buses {
        let last = b.last_nonzero_u.map_or("never active".to_owned(), |t| format!("last nonzero u at t≈{}", sig(t)));
        let _ = writeln!(
            out,
            "bus {}: omega in [{}, {}], u in [{}, {}], {last}, per {} s: max sign changes {}, max jump reversals {}",
            b.bus,
            hz(b.min_omega),
            hz(b.max_omega),
            sig(b.min_u),
            sig(b.max_u),
            sig(0.1),
            b.max_switches_in_window,
            b.max_reversals_in_window
        );
    }
    if let Some(err) = a.final_frequency_error {
        let _ = writeln!(out, "final frequency error: {}", hz(err));
    }
    out
}

pub fn certificate_report(c: &Certificate) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "== certificate at t = {} s ==", sig(c.t));
    let _ = writeln!(out, "synchronization condition: {} (margin {})", verdict(c.sync_holds), sig(c.sync_margin));
    let _ = writeln!(out, "omega_inf: {}", hz(c.omega_inf));
    let _ = writeln!(
        out,
        "equilibrium: {} (residual {}, {} iterations, max |lambda| {})",
        if c.converged { "converged" } else { "not found" },
        sig(c.residual),
        c.iterations,
        sig(c.max_abs_lambda)
    );
    if let (Some(cl), Some(phi)) = (c.c, c.phi_level) {
        let _ = writeln!(out, "c: {}  beta: {}  level c/beta: {}", sig(cl), sig(c.beta), sig(phi));
    }
    if let (Some(inside), Some(v)) = (c.state_in_phi, c.state_energy) {
        let _ = writeln!(out, "state: V = {}, in region estimate: {}", sig(v), if inside { "yes" } else { "no" });
    }
    out
}

pub fn bound_report(r: &EffortReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "== effort bound, bus {}, eta = {} ==", r.bus, sig(r.eta));
    let _ = writeln!(out, "d_i: {}", sig(r.d_i));
    match (r.lower, r.upper, r.q_value) {
        (Some(lo), Some(up), Some(q)) => {
            let _ = writeln!(out, "sandwich: [{}, {}]  width {}", sig(lo), sig(up), sig(up - lo));
            let _ = writeln!(out, "non-convex optimum: {}", sig(q));
            let ok = lo <= q + 1e-6 && q <= up + 1e-6;
            let _ = writeln!(out, "sandwich order: {}", verdict(ok));
        }
        _ => {
            let _ = writeln!(out, "level does not reach the threshold; no input needed");
        }
    }
    let _ = writeln!(out, "u_min: {}", sig(r.u_min));
    out
}

pub fn realization_report(r: &Realization) -> String {
    let mut out = bound_report(&r.report);
    let _ = writeln!(
        out,
        "trajectories: {} over {} s, smallest input {}",
        r.runs.len(),
        sig(r.t_end),
        sig(r.min_input())
    );
    let _ = writeln!(out, "input lower bound: {}", verdict(r.pass(1e-6)));
    out
}

pub fn robust_report(r: &RobustOutcome) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "== robustness ==");
    let rule = match r.rule {
        crate::bounds::MarginRule::Literal => "literal",
        crate::bounds::MarginRule::WorstCase => "worst-case",
    };
    let _ = writeln!(out, "simulated margin rule: {rule}");
    let opt_hz = |d: Option<f64>| d.map_or("none".to_owned(), hz);
    for m in &r.margins {
        let _ = writeln!(
            out,
            "bus {}: margin literal {}, worst-case {} (E_hat {}, eps_p {})",
            m.bus,
            opt_hz(m.literal_delta),
            opt_hz(m.worst_case_delta),
            sig(m.bounds.e_hat),
            sig(m.bounds.eps_p)
        );
    }
    if !r.runs.is_empty() {
        let ok = r.runs.iter().all(|x| x.pass);
        let worst = r.runs.iter().map(|x| x.worst_excess).fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(
            out,
            "widened-band invariance over {} runs: {} (worst excess {})",
            r.runs.len(),
            verdict(ok),
            hz(worst)
        );
    }
    out
}

pub fn envelope_report(bus: u32, env: &EnvelopeResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "== envelope, bus {bus} ==");
    let (Some(first), Some(last)) = (env.z.first(), env.z.last()) else {
        return out;
    };
    let _ = writeln!(out, "z(0) = {}, z(end) = {}", hz(*first), hz(*last));
    if let Some(r) = env.max_implicit_residual() {
        let _ = writeln!(out, "implicit relation residual: {} ({})", sig(r), verdict(r <= 1e-6));
    }
    if let Some(e) = env.exponential {
        let ok = env.times.iter().zip(&env.z).all(|(&t, &z)| match env.side {
            crate::bounds::Side::Upper => z <= e.at(t) + 1e-12,
            crate::bounds::Side::Lower => z >= e.at(t) - 1e-12,
        });
        let _ = writeln!(out, "exponential bound dominates: {}", verdict(ok));
    }
    out
}
