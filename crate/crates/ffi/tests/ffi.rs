use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use swingguard_ffi::*;

fn last_error() -> String {
    let p = sg_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn load(name: &str) -> *mut SgNetwork {
    let path = CString::new(name).unwrap();
    let mut net = ptr::null_mut();
    assert_eq!(unsafe { sg_network_load(path.as_ptr(), &mut net) }, SgStatus::Ok);
    assert!(!net.is_null());
    net
}

#[test]
fn two_bus_equilibrium() {
    let net = load("builtin:two_bus");
    let (mut n, mut m) = (0, 0);
    assert_eq!(unsafe { sg_network_size(net, &mut n, &mut m) }, SgStatus::Ok);
    assert_eq!((n, m), (2, 1));
    let (mut w, mut margin) = (f64::NAN, f64::NAN);
    let mut lambda = [0.0f64; 1];
    let status = unsafe { sg_equilibrium(net, 0.0, &mut w, &mut margin, lambda.as_mut_ptr(), 1) };
    assert_eq!(status, SgStatus::Ok);
    assert!(w.abs() < 1e-15);
    assert!((margin - 0.5).abs() < 1e-10);
    assert!((lambda[0] - 0.5f64.asin()).abs() < 1e-8);
    let mut c = 0.0;
    assert_eq!(unsafe { sg_region_level(net, &mut c) }, SgStatus::Ok);
    assert!((c - 0.3424).abs() < 1e-4);
    unsafe { sg_network_free(net) };
}

#[test]
fn short_buffer_is_out_of_range() {
    let net = load("builtin:ieee39");
    let (mut w, mut margin) = (0.0, 0.0);
    let mut lambda = [0.0f64; 3];
    let status = unsafe { sg_equilibrium(net, 0.0, &mut w, &mut margin, lambda.as_mut_ptr(), 3) };
    assert_eq!(status, SgStatus::OutOfRange);
    assert!(last_error().contains("needed"));
    unsafe { sg_network_free(net) };
}

#[test]
fn null_and_bad_input() {
    let mut net = ptr::null_mut();
    assert_eq!(unsafe { sg_network_load(ptr::null(), &mut net) }, SgStatus::NullPointer);
    assert!(last_error().contains("path"));
    let missing = CString::new("/nonexistent/net.json").unwrap();
    assert_eq!(unsafe { sg_network_load(missing.as_ptr(), &mut net) }, SgStatus::Io);
    let bad = CString::new("{\"buses\": 3}").unwrap();
    assert_eq!(unsafe { sg_network_from_json(bad.as_ptr(), &mut net) }, SgStatus::Parse);
    assert!(net.is_null());
    let mut c = 0.0;
    assert_eq!(unsafe { sg_region_level(ptr::null(), &mut c) }, SgStatus::NullPointer);
    unsafe {
        sg_network_free(ptr::null_mut());
        sg_trajectory_free(ptr::null_mut());
        sg_string_free(ptr::null_mut());
    }
}

#[test]
fn simulate_and_read_back() {
    let net = load("builtin:two_bus");
    let scenario = CString::new(
        r#"{"t_end": 1.0, "initial_state": {"state": {"lambda": [0.5235987755982988], "omega": [0.3, 0.0]}}}"#,
    )
    .unwrap();
    let mut traj = ptr::null_mut();
    assert_eq!(unsafe { sg_simulate(net, scenario.as_ptr(), &mut traj) }, SgStatus::Ok);

    let mut len = 0;
    assert_eq!(unsafe { sg_trajectory_times(traj, ptr::null_mut(), 0, &mut len) }, SgStatus::Ok);
    assert_eq!(len, 1001);
    let mut omega = vec![0.0; len];
    assert_eq!(unsafe { sg_trajectory_omega(traj, 1, omega.as_mut_ptr(), len, &mut len) }, SgStatus::Ok);
    assert_eq!(omega[0], 0.3);
    let mut u = vec![0.0; len];
    assert_eq!(unsafe { sg_trajectory_input(traj, 1, u.as_mut_ptr(), len, &mut len) }, SgStatus::Ok);
    assert_eq!(unsafe { sg_trajectory_input(traj, 2, u.as_mut_ptr(), len, &mut len) }, SgStatus::OutOfRange);

    let (mut mono, mut inv) = (false, false);
    assert_eq!(unsafe { sg_trajectory_verdicts(traj, &mut mono, &mut inv) }, SgStatus::Ok);
    assert!(mono && inv);

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { sg_trajectory_audit_json(traj, &mut json) }, SgStatus::Ok);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    assert!(text.contains("\"energy\""));
    unsafe {
        sg_string_free(json);
        sg_trajectory_free(traj);
        sg_network_free(net);
    }
}

#[test]
fn invalid_scenario_is_validation() {
    let net = load("builtin:two_bus");
    let scenario = CString::new(r#"{"t_end": -1.0}"#).unwrap();
    let mut traj = ptr::null_mut();
    assert_eq!(unsafe { sg_simulate(net, scenario.as_ptr(), &mut traj) }, SgStatus::Validation);
    assert!(traj.is_null());
    unsafe { sg_network_free(net) };
}

#[test]
fn effort_bound_sandwich() {
    let net = load("builtin:two_bus");
    let (mut u, mut lo, mut up) = (0.0, 0.0, 0.0);
    assert_eq!(unsafe { sg_effort_bound(net, 1, 0.3, 1.01, &mut u, &mut lo, &mut up) }, SgStatus::Ok);
    assert!(lo <= u + 1e-6 && u <= up + 1e-6);
    assert_eq!(unsafe { sg_effort_bound(net, 2, 0.3, 1.01, &mut u, &mut lo, &mut up) }, SgStatus::Validation);
    unsafe { sg_network_free(net) };
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(sg_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

/// Compiles a small C program against the generated header and the shared
/// library. Skipped when no C compiler is on the path.
#[test]
fn c_program_links_against_header() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found, skipping");
        return;
    };
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().and_then(|d| d.parent()).unwrap().to_path_buf();
    if !lib_dir.join("libswingguard_ffi.so").exists() {
        eprintln!("shared library not built, skipping");
        return;
    }
    let tmp = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let src = tmp.join("smoke.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "swingguard.h"
int main(void) {
    SgNetwork *net = NULL;
    if (sg_network_load("builtin:two_bus", &net) != SG_STATUS_OK) return 1;
    double w, margin, lambda[1];
    if (sg_equilibrium(net, 0.0, &w, &margin, lambda, 1) != SG_STATUS_OK) return 2;
    SgNetwork *bad = NULL;
    if (sg_network_load("/nonexistent.json", &bad) != SG_STATUS_IO || sg_last_error() == NULL) return 3;
    printf("%.6f\n", margin);
    sg_network_free(net);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = tmp.join("smoke");
    let status = Command::new(cc)
        .arg(&src)
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg("-L")
        .arg(&lib_dir)
        .arg("-lswingguard_ffi")
        .arg(format!("-Wl,-rpath,{}", lib_dir.display()))
        .arg("-o")
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "0.500000");
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}
