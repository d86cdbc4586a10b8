//! C ABI over the swingguard library.
//!
//! Networks and trajectories are opaque handles created by `sg_*` calls and
//! released with the matching `_free`. Every fallible call returns an
//! [`SgStatus`]; on failure a message for the calling thread is available
//! from [`sg_last_error`] until the next failing call on that thread.
//! Frequencies are rad/s, times seconds, powers per unit.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use swingguard::bounds::{u_min, EffortBoundProblem, EffortSettings};
use swingguard::cli::pipeline::resolve_network;
use swingguard::energy::compute_c;
use swingguard::equilibrium::solve_equilibrium;
use swingguard::simulator::{integrate, Scenario, Trajectory};
use swingguard::{EnergyContext, Error, PowerNetwork};

/// Result of an FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Validation = 5,
    Convergence = 6,
    Blowup = 7,
    /// Caller buffer too small or index out of range.
    OutOfRange = 8,
    Panic = 9,
}

/// Loaded power network.
pub struct SgNetwork(PowerNetwork);

/// Simulated trajectory with its audit summary.
pub struct SgTrajectory(Trajectory);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> SgStatus {
    match err {
        Error::Io { .. } => SgStatus::Io,
        Error::Parse(_) => SgStatus::Parse,
        Error::Convergence { .. } | Error::OutsideGamma { .. } | Error::NotReached { .. } | Error::Infeasible(_) => {
            SgStatus::Convergence
        }
        Error::Blowup { .. } => SgStatus::Blowup,
        _ => SgStatus::Validation,
    }
}

/// Runs `f`, converting library errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (SgStatus, String)>) -> SgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SgStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SgStatus::Panic
        }
    }
}

fn lib(err: Error) -> (SgStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (SgStatus, String) {
    (SgStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (SgStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (SgStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, (SgStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), (SgStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Copies `values` into a caller buffer of `capacity` entries and stores the
/// full length in `out_len`. Passing a null buffer queries the length.
unsafe fn write_series(values: &[f64], buf: *mut f64, capacity: usize, out_len: *mut usize) -> Result<(), (SgStatus, String)> {
    write_out(out_len, values.len(), "out_len")?;
    if buf.is_null() {
        return Ok(());
    }
    if capacity < values.len() {
        return Err((
            SgStatus::OutOfRange,
            format!("buffer holds {capacity} values, {} needed", values.len()),
        ));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a network from a JSON file path, or `builtin:ieee39` /
/// `builtin:two_bus`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sg_network_load(path: *const c_char, out: *mut *mut SgNetwork) -> SgStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let net = resolve_network(path).map_err(lib)?;
        write_out(out, Box::into_raw(Box::new(SgNetwork(net))), "out")
    })
}

/// Parses a network from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sg_network_from_json(json: *const c_char, out: *mut *mut SgNetwork) -> SgStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let net = PowerNetwork::from_json(text).map_err(lib)?;
        write_out(out, Box::into_raw(Box::new(SgNetwork(net))), "out")
    })
}

/// Releases a network. Null is ignored.
///
/// # Safety
/// `net` must come from `sg_network_load` or `sg_network_from_json` and not
/// be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sg_network_free(net: *mut SgNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Number of buses and lines.
///
/// # Safety
/// `net` must be a live handle; the outputs valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sg_network_size(net: *const SgNetwork, out_buses: *mut usize, out_lines: *mut usize) -> SgStatus {
    guard(|| {
        let net = &handle(net, "net")?.0;
        write_out(out_buses, net.n(), "out_buses")?;
        write_out(out_lines, net.m(), "out_lines")
    })
}

/// Synchronized equilibrium of the injections at time `t`: common frequency,
/// synchronization margin (the condition holds below 1) and line angle
/// differences. `lambda` may be null to query only the scalars; otherwise it
/// must hold one entry per line.
///
/// # Safety
/// `net` must be a live handle; pointers valid or null as described.
#[no_mangle]
pub unsafe extern "C" fn sg_equilibrium(
    net: *const SgNetwork,
    t: f64,
    out_omega_inf: *mut f64,
    out_sync_margin: *mut f64,
    lambda: *mut f64,
    lambda_capacity: usize,
) -> SgStatus {
    guard(|| {
        let net = &handle(net, "net")?.0;
        let eq = solve_equilibrium(net, t).map_err(lib)?;
        if !eq.converged {
            return Err((SgStatus::Convergence, format!("no equilibrium (residual {:.3e})", eq.residual)));
        }
        write_out(out_omega_inf, eq.omega_inf, "out_omega_inf")?;
        write_out(out_sync_margin, eq.sync_margin, "out_sync_margin")?;
        let mut len = 0;
        write_series(eq.lambda_inf.as_slice(), lambda, lambda_capacity, &mut len)
    })
}

/// Region-of-attraction level `c` at the equilibrium of time 0.
///
/// # Safety
/// `net` must be a live handle and `out_c` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sg_region_level(net: *const SgNetwork, out_c: *mut f64) -> SgStatus {
    guard(|| {
        let net = &handle(net, "net")?.0;
        let eq = solve_equilibrium(net, 0.0).map_err(lib)?;
        if !eq.converged {
            return Err((SgStatus::Convergence, "no equilibrium".into()));
        }
        write_out(out_c, compute_c(net, &eq), "out_c")
    })
}

/// Worst-case input of controlled bus `bus` over the level set `V <= eta`,
/// with its relaxation bounds.
///
/// # Safety
/// `net` must be a live handle and the outputs valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sg_effort_bound(
    net: *const SgNetwork,
    bus: u32,
    eta: f64,
    beta: f64,
    out_u_min: *mut f64,
    out_lower: *mut f64,
    out_upper: *mut f64,
) -> SgStatus {
    guard(|| {
        let net = &handle(net, "net")?.0;
        let eq = solve_equilibrium(net, 0.0).map_err(lib)?;
        let ctx = EnergyContext::new(net, eq, beta).map_err(lib)?;
        let problem = EffortBoundProblem::new(net, &ctx, bus, eta, EffortSettings::default()).map_err(lib)?;
        let r = u_min(&problem).map_err(lib)?;
        write_out(out_u_min, r.u_min, "out_u_min")?;
        write_out(out_lower, r.lower.unwrap_or(0.0), "out_lower")?;
        write_out(out_upper, r.upper.unwrap_or(0.0), "out_upper")
    })
}

/// Integrates a scenario given as JSON text.
///
/// # Safety
/// `net` must be a live handle, `scenario_json` NUL-terminated and `out` a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sg_simulate(
    net: *const SgNetwork,
    scenario_json: *const c_char,
    out: *mut *mut SgTrajectory,
) -> SgStatus {
    guard(|| {
        let net = &handle(net, "net")?.0;
        let scenario = Scenario::from_json(str_arg(scenario_json, "scenario_json")?).map_err(lib)?;
        let traj = integrate(net, &scenario).map_err(lib)?;
        write_out(out, Box::into_raw(Box::new(SgTrajectory(traj))), "out")
    })
}

/// Releases a trajectory. Null is ignored.
///
/// # Safety
/// `traj` must come from `sg_simulate` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sg_trajectory_free(traj: *mut SgTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Sample times. Pass a null buffer to query the length.
///
/// # Safety
/// `traj` must be a live handle; `buf` null or `capacity` entries long.
#[no_mangle]
pub unsafe extern "C" fn sg_trajectory_times(
    traj: *const SgTrajectory,
    buf: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> SgStatus {
    guard(|| {
        let times: Vec<f64> = handle(traj, "traj")?.0.times().collect();
        write_series(&times, buf, capacity, out_len)
    })
}

/// Frequency samples of bus `bus_id`.
///
/// # Safety
/// As [`sg_trajectory_times`].
#[no_mangle]
pub unsafe extern "C" fn sg_trajectory_omega(
    traj: *const SgTrajectory,
    bus_id: u32,
    buf: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> SgStatus {
    guard(|| {
        let traj = &handle(traj, "traj")?.0;
        let series = traj
            .omega_series(bus_id)
            .ok_or_else(|| (SgStatus::OutOfRange, format!("no bus {bus_id}")))?;
        write_series(&series, buf, capacity, out_len)
    })
}

/// Input samples of controlled bus `bus_id`.
///
/// # Safety
/// As [`sg_trajectory_times`].
#[no_mangle]
pub unsafe extern "C" fn sg_trajectory_input(
    traj: *const SgTrajectory,
    bus_id: u32,
    buf: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> SgStatus {
    guard(|| {
        let traj = &handle(traj, "traj")?.0;
        let series = traj
            .input_series(bus_id)
            .ok_or_else(|| (SgStatus::OutOfRange, format!("bus {bus_id} is not controlled")))?;
        write_series(&series, buf, capacity, out_len)
    })
}

/// Audit verdicts: energy monotonicity and safe-band invariance.
///
/// # Safety
/// `traj` must be a live handle and the outputs valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sg_trajectory_verdicts(
    traj: *const SgTrajectory,
    out_energy_monotone: *mut bool,
    out_band_invariant: *mut bool,
) -> SgStatus {
    guard(|| {
        let audit = &handle(traj, "traj")?.0.audit;
        write_out(out_energy_monotone, audit.energy.pass(), "out_energy_monotone")?;
        write_out(out_band_invariant, audit.invariance_pass(), "out_band_invariant")
    })
}

/// Full audit summary as JSON. Release with [`sg_string_free`].
///
/// # Safety
/// `traj` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sg_trajectory_audit_json(traj: *const SgTrajectory, out: *mut *mut c_char) -> SgStatus {
    guard(|| {
        let audit = &handle(traj, "traj")?.0.audit;
        let text = serde_json::to_string(audit).map_err(|e| (SgStatus::Parse, e.to_string()))?;
        let c = CString::new(text).map_err(|e| (SgStatus::Parse, e.to_string()))?;
        write_out(out, c.into_raw(), "out")
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
