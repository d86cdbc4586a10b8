//! Test-side oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DVector;
use swingguard::energy::energy_v;
use swingguard::equilibrium::solve_equilibrium;
use swingguard::PowerNetwork;

/// Triangle network with a brute-force grid over both free angles; the
/// frequency is minimized exactly for each angle pair.
pub fn triangle(p1: f64, p2: f64, b: [f64; 3]) -> PowerNetwork {
    PowerNetwork::from_json(&format!(
        r#"{{"buses":[{{"id":1,"M":1.0,"E":1.0,"p":{p1}}},{{"id":2,"M":2.0,"E":0.5,"p":{p2}}},{{"id":3,"M":1.5,"E":1.0,"p":{}}}],
            "lines":[{{"from":1,"to":2,"b":{}}},{{"from":1,"to":3,"b":{}}},{{"from":2,"to":3,"b":{}}}],
            "controlled":[{{"id":1,"omega_lo":-0.4,"omega_hi":0.4,"omega_lo_th":-0.2,"omega_hi_th":0.2,"gamma":1.0}}]}}"#,
        -p1 - p2,
        b[0],
        b[1],
        b[2]
    ))
    .unwrap()
}

pub fn grid_oracle(net: &PowerNetwork, eta: f64) -> f64 {
    let eq = solve_equilibrium(net, 0.0).unwrap();
    let spec = net.controlled_spec(1).unwrap();
    let bus = &net.buses()[0];
    let (hi, th, gamma) = (spec.omega_hi, spec.omega_hi_th, 1.0);
    let p1 = bus.injection.at(0.0);
    let eval = |t1: f64, t2: f64| -> f64 {
        let theta = DVector::from_vec(vec![t1, t2, 0.0]);
        let lam = net.edge_differences(&theta);
        if lam.iter().any(|l| l.abs() > std::f64::consts::FRAC_PI_2) {
            return f64::INFINITY;
        }
        let mut omega = DVector::from_element(3, eq.omega_inf);
        let st = swingguard::SystemState::new(lam.clone(), omega.clone(), 0.0);
        let room = eta - energy_v(net, &eq, &st);
        if room < 0.0 {
            return f64::INFINITY;
        }
        let w_hi = eq.omega_inf + (2.0 * room / bus.inertia).sqrt();
        let lo = th + 1e-9;
        if w_hi < lo {
            return f64::INFINITY;
        }
        let w = (th + (gamma * (hi - th) / bus.damping).sqrt()).clamp(lo, w_hi);
        omega[0] = w;
        gamma * (hi - w) / (w - th) + bus.damping * w + net.outflow(0, &lam) - p1
    };
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let h = 1e-2;
    let range = |c: f64, r: f64, h: f64| {
        let n = (2.0 * r / h).round() as i64;
        (0..=n).map(move |k| c - r + k as f64 * h)
    };
    for t1 in range(0.0, 3.2, h) {
        for t2 in range(0.0, 3.2, h) {
            let v = eval(t1, t2);
            if v < best.0 {
                best = (v, t1, t2);
            }
        }
    }
    let (c1, c2) = (best.1, best.2);
    let h2 = 1e-4;
    for t1 in range(c1, 2e-2, h2) {
        for t2 in range(c2, 2e-2, h2) {
            best.0 = best.0.min(eval(t1, t2));
        }
    }
    best.0
}

/// Line potential `b (cos l_inf - cos l - sin l_inf (l - l_inf))`, written
/// out independently of the library.
fn line_energy(b: f64, l: f64, l_inf: f64) -> f64 {
    b * (l_inf.cos() - l.cos() - l_inf.sin() * (l - l_inf))
}

fn face_min(b: &[f64], l_inf: &[f64], pinned: usize, value: f64, centre: &[f64], half: f64, h: f64) -> (f64, Vec<f64>) {
    let m = b.len();
    let free: Vec<usize> = (0..m).filter(|&k| k != pinned).collect();
    let n_pts = (2.0 * half / h).round() as usize + 1;
    let axis = |k: usize, idx: usize| {
        (centre[k] - half + idx as f64 * h).clamp(-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2)
    };
    let mut best = (f64::INFINITY, centre.to_vec());
    let total = n_pts.pow(free.len() as u32);
    let mut lam = centre.to_vec();
    lam[pinned] = value;
    for flat in 0..total {
        let mut r = flat;
        for &k in &free {
            lam[k] = axis(k, r % n_pts);
            r /= n_pts;
        }
        let v: f64 = (0..m).map(|k| line_energy(b[k], lam[k], l_inf[k])).sum();
        if v < best.0 {
            best = (v, lam.clone());
        }
    }
    best
}

/// Minimum of the potential over the boundary of the angle box by a coarse
/// grid on every face followed by a fine grid around the best point.
pub fn c_grid_oracle(b: &[f64], l_inf: &[f64]) -> f64 {
    use std::f64::consts::FRAC_PI_2;
    let m = b.len();
    let zero = vec![0.0; m];
    let mut best = f64::INFINITY;
    for j in 0..m {
        for value in [FRAC_PI_2, -FRAC_PI_2] {
            let (_, arg) = face_min(b, l_inf, j, value, &zero, FRAC_PI_2, 0.02);
            let (v, _) = face_min(b, l_inf, j, value, &arg, 0.02, 2e-4);
            best = best.min(v);
        }
    }
    best
}

/// Connected random network with `n` buses and at most four lines; the
/// injections are balanced and small enough for a synchronized equilibrium.
pub fn random_small_network(seed: u64) -> PowerNetwork {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=4usize);
    let mut lines: Vec<(usize, usize)> = (1..n).map(|k| (rng.gen_range(0..k), k)).collect();
    let mut candidates: Vec<(usize, usize)> =
        (0..n).flat_map(|a| (a + 1..n).map(move |c| (a, c))).filter(|e| !lines.contains(e)).collect();
    while lines.len() < 4 && !candidates.is_empty() && rng.gen_bool(0.6) {
        lines.push(candidates.swap_remove(rng.gen_range(0..candidates.len())));
    }
    let mut p: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.4..0.4)).collect();
    let mean = p.iter().sum::<f64>() / n as f64;
    p.iter_mut().for_each(|x| *x -= mean);
    let buses: Vec<String> = (0..n)
        .map(|k| {
            format!(
                r#"{{"id":{},"M":{},"E":{},"p":{}}}"#,
                k + 1,
                rng.gen_range(0.5..2.0),
                rng.gen_range(0.5..1.5),
                p[k]
            )
        })
        .collect();
    let lines: Vec<String> = lines
        .iter()
        .map(|(a, c)| format!(r#"{{"from":{},"to":{},"b":{}}}"#, a + 1, c + 1, rng.gen_range(0.8..2.5)))
        .collect();
    PowerNetwork::from_json(&format!(
        r#"{{"buses":[{}],"lines":[{}],"controlled":[{{"id":1,"omega_lo":-0.4,"omega_hi":0.4,"omega_lo_th":-0.2,"omega_hi_th":0.2,"gamma":1.0}}]}}"#,
        buses.join(","),
        lines.join(",")
    ))
    .unwrap()
}
