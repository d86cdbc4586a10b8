mod common;

use proptest::prelude::*;
use swingguard::bounds::{solve_q, solve_r_lower, solve_r_upper, u_min, EffortBoundProblem, EffortSettings};
use swingguard::energy::{energy_v, DEFAULT_BETA};
use swingguard::equilibrium::solve_equilibrium;
use swingguard::network::ieee39;
use swingguard::{EnergyContext, PowerNetwork};

use common::{grid_oracle, triangle};

fn problem(net: &PowerNetwork, bus: u32, eta: f64) -> EffortBoundProblem {
    let eq = solve_equilibrium(net, 0.0).unwrap();
    let ctx = EnergyContext::new(net, eq, DEFAULT_BETA).unwrap();
    EffortBoundProblem::new(net, &ctx, bus, eta, EffortSettings::default()).unwrap()
}

#[test]
fn ieee39_bus30_sandwich_is_tight() {
    let net = ieee39();
    let p = problem(&net, 30, 0.5);
    let r = u_min(&p).unwrap();
    let (lo, up, q) = (r.lower.unwrap(), r.upper.unwrap(), r.q_value.unwrap());
    eprintln!("ieee39 bus 30: lower {lo:.6} q {q:.6} upper {up:.6} d_i {:.6}", r.d_i);
    assert!(lo <= q + 1e-6 && q <= up + 1e-6);
    assert!((up - lo).abs() <= 1e-3);
    assert!(r.u_min < 0.0);
    let eq = solve_equilibrium(&net, 0.0).unwrap();
    assert!(energy_v(&net, &eq, r.argmin_state.as_ref().unwrap()) <= 0.5 + 1e-9);
}

#[test]
fn triangle_matches_grid_oracle() {
    for (p1, p2, b, eta) in [
        (0.3, -0.1, [1.5, 1.0, 1.2], 0.15),
        (-0.2, 0.4, [1.0, 2.0, 0.8], 0.25),
        (0.5, -0.6, [2.0, 1.5, 1.0], 0.3),
    ] {
        let net = triangle(p1, p2, b);
        let p = problem(&net, 1, eta);
        let q = solve_q(&p).unwrap();
        let oracle = grid_oracle(&net, eta);
        assert!((q.value - oracle).abs() < 1e-3, "{} vs oracle {oracle}", q.value);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn sandwich_holds_on_triangles(
        p1 in -0.5f64..0.5,
        p2 in -0.5f64..0.5,
        b0 in 0.8f64..2.5,
        b1 in 0.8f64..2.5,
        b2 in 0.8f64..2.5,
        frac in 0.1f64..0.9,
    ) {
        let net = triangle(p1, p2, [b0, b1, b2]);
        let eq = solve_equilibrium(&net, 0.0).unwrap();
        prop_assume!(eq.converged);
        let ctx = EnergyContext::new(&net, eq, DEFAULT_BETA).unwrap();
        let eta = frac * ctx.c_level;
        let p = EffortBoundProblem::new(&net, &ctx, 1, eta, EffortSettings::default()).unwrap();
        prop_assume!(!p.is_trivial());
        let q = solve_q(&p).unwrap().value;
        let up = solve_r_upper(&p).unwrap().value;
        let low = solve_r_lower(&p).unwrap().best.value;
        prop_assert!(low <= q + 1e-6, "lower {} > q {}", low, q);
        prop_assert!(q <= up + 1e-6, "q {} > upper {}", q, up);
    }
}
