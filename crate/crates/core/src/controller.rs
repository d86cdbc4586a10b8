//! Distributed transient frequency controller.
//!
//! Each controlled bus computes its input from its own frequency, its own
//! injection and the aggregate power flowing out through its incident lines.
//! Outside the deadband `[omega_lo_th, omega_hi_th]` the input cancels just
//! enough of the local deceleration term `q_i` to keep
//! `M_i d(omega_i)/dt` below the class-K barrier rate, which makes the safe
//! band `[omega_lo, omega_hi]` forward invariant.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::PowerNetwork;
use crate::state::SystemState;

/// Class-K function used in the barrier condition.
///
/// Tables are interpreted as piecewise-linear through the origin and the
/// given samples, extended with the last slope, and extended to negative
/// arguments as an odd function.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassK {
    Linear { gamma: f64 },
    Table { points: Vec<(f64, f64)> },
}

impl ClassK {
    pub fn linear(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Validation(format!("gamma must be positive, got {gamma}")));
        }
        Ok(ClassK::Linear { gamma })
    }

    pub fn table(mut points: Vec<(f64, f64)>) -> Result<Self> {
        points.retain(|&(s, _)| s != 0.0);
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.is_empty() {
            return Err(Error::Validation("class-K table needs at least one nonzero sample".into()));
        }
        let mut prev = (0.0, 0.0);
        for &(s, a) in &points {
            if !(s > prev.0 && a > prev.1) {
                return Err(Error::Validation(format!(
                    "class-K table must be strictly increasing from (0, 0); bad sample ({s}, {a})"
                )));
            }
            prev = (s, a);
        }
        Ok(ClassK::Table { points })
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            ClassK::Linear { gamma } => gamma * s,
            ClassK::Table { points } => {
                let x = s.abs();
                let mut prev = (0.0, 0.0);
                let mut value = None;
                for &(ps, pa) in points {
                    if x <= ps {
                        value = Some(prev.1 + (pa - prev.1) * (x - prev.0) / (ps - prev.0));
                        break;
                    }
                    prev = (ps, pa);
                }
                let v = value.unwrap_or_else(|| {
                    let n = points.len();
                    let (s1, a1) = points[n - 1];
                    let (s0, a0) = if n > 1 { points[n - 2] } else { (0.0, 0.0) };
                    a1 + (a1 - a0) / (s1 - s0) * (x - s1)
                });
                v.copysign(s)
            }
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match self {
            ClassK::Linear { gamma } => Some(*gamma),
            ClassK::Table { .. } => None,
        }
    }

    pub(crate) fn to_points(&self) -> Vec<[f64; 2]> {
        match self {
            ClassK::Linear { gamma } => vec![[1.0, *gamma]],
            ClassK::Table { points } => points.iter().map(|&(s, a)| [s, a]).collect(),
        }
    }
}

/// Which control law a bus runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ControlLaw {
    /// Lipschitz barrier controller.
    #[default]
    Barrier,
    /// The infinite-gain limit, active only on or outside the band edge.
    Discontinuous,
}

/// Controller parameters for one bus, all frequencies in rad/s.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlledBusSpec {
    pub bus_id: u32,
    /// Bus index inside the network (filled in by the network).
    pub index: usize,
    pub omega_lo: f64,
    pub omega_hi: f64,
    pub omega_lo_th: f64,
    pub omega_hi_th: f64,
    pub kappa_upper: ClassK,
    pub kappa_lower: ClassK,
    /// Tightening of the safe band used for finite entry-time estimates.
    pub epsilon_shrink: f64,
    pub law: ControlLaw,
}

impl ControlledBusSpec {
    /// Symmetric linear spec.
    pub fn linear(bus_id: u32, omega_lo: f64, omega_hi: f64, omega_lo_th: f64, omega_hi_th: f64, gamma: f64) -> Self {
        Self {
            bus_id,
            index: 0,
            omega_lo,
            omega_hi,
            omega_lo_th,
            omega_hi_th,
            kappa_upper: ClassK::Linear { gamma },
            kappa_lower: ClassK::Linear { gamma },
            epsilon_shrink: 0.0,
            law: ControlLaw::Barrier,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = (self.effective_lo(), self.effective_hi());
        if !(self.epsilon_shrink >= 0.0) {
            return Err(Error::Validation(format!(
                "bus {}: epsilon_shrink must be nonnegative",
                self.bus_id
            )));
        }
        if !(lo < self.omega_lo_th && self.omega_lo_th < self.omega_hi_th && self.omega_hi_th < hi) {
            return Err(Error::Validation(format!(
                "bus {}: need omega_lo < omega_lo_th < omega_hi_th < omega_hi (after shrink), got {} {} {} {}",
                self.bus_id, lo, self.omega_lo_th, self.omega_hi_th, hi
            )));
        }
        for k in [&self.kappa_upper, &self.kappa_lower] {
            if let ClassK::Linear { gamma } = k {
                if !(*gamma > 0.0 && gamma.is_finite()) {
                    return Err(Error::Validation(format!("bus {}: gamma must be positive", self.bus_id)));
                }
            }
        }
        Ok(())
    }

    /// Upper safe bound actually enforced (tightened by `epsilon_shrink`).
    pub fn effective_hi(&self) -> f64 {
        self.omega_hi - self.epsilon_shrink
    }

    pub fn effective_lo(&self) -> f64 {
        self.omega_lo + self.epsilon_shrink
    }

    /// Common linear gain, if both class-K functions are linear and equal.
    pub fn linear_gamma(&self) -> Option<f64> {
        match (self.kappa_upper.gamma(), self.kappa_lower.gamma()) {
            (Some(a), Some(b)) if a == b => Some(a),
            _ => None,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.kappa_upper = ClassK::Linear { gamma };
        self.kappa_lower = ClassK::Linear { gamma };
        self
    }

    /// Barrier controller as a function of the local frequency and `q_i`.
    pub fn barrier_input(&self, omega: f64, q: f64) -> f64 {
        if omega > self.omega_hi_th {
            let hi = self.effective_hi();
            (-self.kappa_upper.eval(omega - hi) / (omega - self.omega_hi_th) + q).min(0.0)
        } else if omega < self.omega_lo_th {
            let lo = self.effective_lo();
            (self.kappa_lower.eval(lo - omega) / (self.omega_lo_th - omega) + q).max(0.0)
        } else {
            0.0
        }
    }

    /// Infinite-gain limit. Off the closed band the input is clamped with the
    /// same min/max rule as on its edge.
    pub fn discontinuous_input(&self, omega: f64, q: f64) -> f64 {
        if omega >= self.effective_hi() {
            q.min(0.0)
        } else if omega <= self.effective_lo() {
            q.max(0.0)
        } else {
            0.0
        }
    }

    pub fn input(&self, omega: f64, q: f64) -> f64 {
        match self.law {
            ControlLaw::Barrier => self.barrier_input(omega, q),
            ControlLaw::Discontinuous => self.discontinuous_input(omega, q),
        }
    }
}

/// Bounds on measurement and parameter errors seen by one controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyBounds {
    pub eps_omega: f64,
    pub eps_lambda: f64,
    pub eps_p: f64,
    #[serde(rename = "eps_E")]
    pub eps_e: f64,
    /// Damping value the controller believes in.
    #[serde(rename = "E_hat")]
    pub e_hat: f64,
}

impl UncertaintyBounds {
    /// Exact knowledge of a bus with damping `e`.
    pub fn exact(e: f64) -> Self {
        Self {
            eps_omega: 0.0,
            eps_lambda: 0.0,
            eps_p: 0.0,
            eps_e: 0.0,
            e_hat: e,
        }
    }

    /// Checks the bounded-uncertainty assumptions for `spec` given the
    /// equilibrium frequency and the true damping.
    pub fn check(&self, spec: &ControlledBusSpec, omega_inf: f64, true_damping: f64) -> Result<()> {
        let fail = |msg: String| Err(Error::Validation(format!("bus {}: {msg}", spec.bus_id)));
        for (name, v) in [
            ("eps_omega", self.eps_omega),
            ("eps_lambda", self.eps_lambda),
            ("eps_p", self.eps_p),
            ("eps_E", self.eps_e),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} must be a nonnegative number"));
            }
        }
        if !(self.e_hat > 0.0) {
            return fail("E_hat must be positive".into());
        }
        if (self.e_hat - true_damping).abs() > self.eps_e * (1.0 + 1e-12) + 1e-15 {
            return fail(format!(
                "|E_hat - E| = {} exceeds eps_E = {}",
                (self.e_hat - true_damping).abs(),
                self.eps_e
            ));
        }
        if !(omega_inf > spec.omega_lo_th + self.eps_omega && omega_inf < spec.omega_hi_th - self.eps_omega) {
            return fail(format!(
                "omega_inf = {omega_inf} outside the shrunken deadband ({}, {})",
                spec.omega_lo_th + self.eps_omega,
                spec.omega_hi_th - self.eps_omega
            ));
        }
        let gap = (spec.omega_hi - spec.omega_hi_th).min(spec.omega_lo_th - spec.omega_lo);
        if !(self.eps_omega < gap) {
            return fail(format!("eps_omega = {} must be below {gap}", self.eps_omega));
        }
        Ok(())
    }
}

/// `q_i = E_i omega_i + [D^T Y_b]_i sin(lambda) - p_i`.
pub fn q_i(net: &PowerNetwork, state: &SystemState, p_now: &DVector<f64>, idx: usize) -> f64 {
    net.buses()[idx].damping * state.omega[idx] + net.outflow(idx, &state.lambda) - p_now[idx]
}

/// Barrier controller input of the bus described by `spec`.
pub fn u_i(net: &PowerNetwork, spec: &ControlledBusSpec, state: &SystemState, p_now: &DVector<f64>) -> f64 {
    let i = spec.index;
    spec.barrier_input(state.omega[i], q_i(net, state, p_now, i))
}

/// Infinite-gain controller input.
pub fn u_i_discontinuous(
    net: &PowerNetwork,
    spec: &ControlledBusSpec,
    state: &SystemState,
    p_now: &DVector<f64>,
) -> f64 {
    let i = spec.index;
    spec.discontinuous_input(state.omega[i], q_i(net, state, p_now, i))
}

/// Controller input computed from measured quantities: frequency, aggregate
/// outflow, injection and believed damping.
pub fn u_hat_from_measurements(spec: &ControlledBusSpec, e_hat: f64, omega: f64, outflow: f64, p: f64) -> f64 {
    spec.input(omega, e_hat * omega + outflow - p)
}

/// Barrier controller evaluated on a measured state and injection with the
/// believed damping from `uncertainty`.
pub fn u_hat_i(
    net: &PowerNetwork,
    spec: &ControlledBusSpec,
    uncertainty: &UncertaintyBounds,
    measured_state: &SystemState,
    measured_p: &DVector<f64>,
) -> f64 {
    let i = spec.index;
    u_hat_from_measurements(
        spec,
        uncertainty.e_hat,
        measured_state.omega[i],
        net.outflow(i, &measured_state.lambda),
        measured_p[i],
    )
}

/// Point around which [`lipschitz_probe`] samples.
#[derive(Debug, Clone)]
pub struct ProbeSite {
    pub state: SystemState,
    pub p: DVector<f64>,
}

/// Largest observed `|u(x) - u(y)| / ||x - y||_2` over `sample_count`
/// random pairs in the cube of half-width `radius` around the site.
pub fn lipschitz_probe(
    spec: &ControlledBusSpec,
    net: &PowerNetwork,
    site: &ProbeSite,
    law: ControlLaw,
    sample_count: usize,
    radius: f64,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = site.state.to_vector();
    let m = net.m();
    let mut spec = spec.clone();
    spec.law = law;
    let eval = |x: &DVector<f64>| {
        let s = SystemState::from_vector(x, m, site.state.t);
        spec.input(s.omega[spec.index], q_i(net, &s, &site.p, spec.index))
    };
    let mut best = 0.0f64;
    for _ in 0..sample_count {
        let x = center.map(|c| c + radius * rng.gen_range(-1.0..=1.0));
        let y = center.map(|c| c + radius * rng.gen_range(-1.0..=1.0));
        let dist = (&x - &y).norm();
        if dist > 0.0 {
            best = best.max((eval(&x) - eval(&y)).abs() / dist);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{two_bus, Bus, BusKind, Injection, PowerNetwork, TransmissionLine};
    use proptest::prelude::*;

    fn unit_spec() -> ControlledBusSpec {
        // gamma = 1, upper bound 2, upper threshold 1
        ControlledBusSpec::linear(1, -2.0, 2.0, -1.0, 1.0, 1.0)
    }

    #[test]
    fn deadband_is_zero() {
        let s = unit_spec();
        for w in [-1.0, -0.3, 0.0, 0.999, 1.0] {
            assert_eq!(s.barrier_input(w, 123.0), 0.0);
            assert_eq!(s.barrier_input(w, -123.0), 0.0);
        }
    }

    #[test]
    fn barrier_band_hand_values() {
        let s = unit_spec();
        let u = s.barrier_input(1.9, -0.5);
        assert!((u - (0.1 / 0.9 - 0.5)).abs() < 1e-12);
        assert!((u + 0.388_888_888_888_889).abs() < 1e-12);
        assert_eq!(s.barrier_input(1.9, 0.3), 0.0);
    }

    #[test]
    fn lower_branch_mirrors_upper() {
        let s = unit_spec();
        let u = s.barrier_input(-1.9, 0.5);
        assert!((u - (-0.1 / 0.9 + 0.5)).abs() < 1e-12);
        assert_eq!(s.barrier_input(-1.9, -0.3), 0.0);
    }

    #[test]
    fn discontinuous_cases() {
        let s = unit_spec();
        assert_eq!(s.discontinuous_input(1.5, -7.0), 0.0);
        assert_eq!(s.discontinuous_input(2.0, -0.4), -0.4);
        assert_eq!(s.discontinuous_input(2.0, 0.4), 0.0);
        assert_eq!(s.discontinuous_input(-2.0, 0.4), 0.4);
        // clamping extension off the band
        assert_eq!(s.discontinuous_input(2.5, -0.4), -0.4);
        assert_eq!(s.discontinuous_input(-2.5, -0.4), 0.0);
    }

    #[test]
    fn epsilon_shrink_moves_bound() {
        let mut s = unit_spec();
        s.epsilon_shrink = 0.5;
        // effective bound 1.5: at omega = 1.5 the barrier term vanishes
        assert!((s.barrier_input(1.5, -0.2) + 0.2).abs() < 1e-12);
        assert!(s.validate().is_ok());
        s.epsilon_shrink = 1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn q_at_two_bus_equilibrium_is_zero() {
        let net = two_bus();
        let lambda = DVector::from_element(1, std::f64::consts::FRAC_PI_6);
        let st = SystemState::new(lambda, DVector::zeros(2), 0.0);
        let p = net.injections_at(0.0);
        assert!(q_i(&net, &st, &p, 0).abs() < 1e-15);
        assert!(q_i(&net, &st, &p, 1).abs() < 1e-15);
    }

    #[test]
    fn q_single_term() {
        let net = two_bus();
        let st = SystemState::new(DVector::zeros(1), DVector::from_vec(vec![1.0, 0.0]), 0.0);
        let p = DVector::zeros(2);
        assert_eq!(q_i(&net, &st, &p, 0), 1.0);
    }

    fn triangle() -> PowerNetwork {
        let bus = |id, p| Bus {
            id,
            inertia: 1.0,
            damping: 0.7 + id as f64 * 0.1,
            injection: Injection::constant(p),
            kind: BusKind::Load,
        };
        let line = |from, to, b| TransmissionLine {
            from,
            to,
            susceptance: b,
        };
        PowerNetwork::new(
            None,
            vec![bus(1, 0.3), bus(2, -0.1), bus(3, -0.2)],
            vec![line(1, 2, 1.5), line(2, 3, 2.0), line(1, 3, 0.8)],
            vec![],
        )
        .unwrap()
    }

    proptest! {
        #[test]
        fn q_matches_node_form(t1 in -1.0f64..1.0, t2 in -1.0f64..1.0, w in proptest::collection::vec(-2.0f64..2.0, 3)) {
            let net = triangle();
            let theta = DVector::from_vec(vec![t1, t2, 0.0]);
            let omega = DVector::from_vec(w.clone());
            let st = SystemState::from_angles(&net, &theta, omega, 0.0);
            let p = net.injections_at(0.0);
            let b = |i: usize, j: usize| -> f64 {
                match (i.min(j), i.max(j)) { (0, 1) => 1.5, (1, 2) => 2.0, (0, 2) => 0.8, _ => 0.0 }
            };
            for i in 0..3 {
                let mut brute = net.buses()[i].damping * w[i] - p[i];
                for j in 0..3 {
                    if j != i { brute += b(i, j) * (theta[i] - theta[j]).sin(); }
                }
                prop_assert!((q_i(&net, &st, &p, i) - brute).abs() < 1e-12);
            }
        }

        #[test]
        fn sign_structure(w in -4.0f64..4.0, q in -20.0f64..20.0, winf in -0.99f64..0.99, gamma in 0.05f64..20.0) {
            let s = unit_spec().with_gamma(gamma);
            let u = s.barrier_input(w, q);
            prop_assert!((w - winf) * u <= 0.0);
            prop_assert_eq!(s.barrier_input(winf, q), 0.0);
        }

        #[test]
        fn upper_barrier_inequality(w in 1.0f64..=2.0, q in -20.0f64..20.0, gamma in 0.05f64..20.0) {
            prop_assume!(w > 1.0);
            let s = unit_spec().with_gamma(gamma);
            let u = s.barrier_input(w, q);
            let lhs = (w - 1.0) * (u - q);
            let rhs = -gamma * (w - 2.0);
            prop_assert!(lhs <= rhs + 1e-9 * (1.0 + rhs.abs()));
        }

        #[test]
        fn lower_barrier_inequality(w in -2.0f64..=-1.0, q in -20.0f64..20.0, gamma in 0.05f64..20.0) {
            prop_assume!(w < -1.0);
            let s = unit_spec().with_gamma(gamma);
            let u = s.barrier_input(w, q);
            let lhs = (-1.0 - w) * (-u + q);
            let rhs = -gamma * (-2.0 - w);
            prop_assert!(lhs <= rhs + 1e-9 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn locality_ignores_far_lines() {
        let net = crate::network::ieee39();
        let spec = net.controlled_spec(30).unwrap().clone();
        let theta = DVector::from_fn(net.n(), |i, _| 0.01 * i as f64);
        let mut omega = DVector::zeros(net.n());
        omega[spec.index] = spec.omega_lo_th - 0.3;
        let st = SystemState::from_angles(&net, &theta, omega, 0.0);
        let p = net.injections_at(0.0);
        let base = u_i(&net, &spec, &st, &p);
        assert!(base != 0.0);
        let incident: Vec<usize> = net.incident(spec.index).iter().map(|&(k, _)| k).collect();
        let mut far = st.clone();
        for k in 0..net.m() {
            if !incident.contains(&k) {
                far.lambda[k] += 0.05 * (k as f64).cos();
            }
        }
        far.omega[0] += 0.7;
        assert_eq!(u_i(&net, &spec, &far, &p), base);
    }

    #[test]
    fn u_hat_reduces_to_u_without_error() {
        let net = two_bus();
        let spec = net.controlled()[0].clone();
        let p = net.injections_at(0.0);
        let unc = UncertaintyBounds::exact(net.buses()[0].damping);
        for w in [-1.0, -0.35, 0.0, 0.3, 0.39, 0.6] {
            let st = SystemState::new(DVector::from_element(1, 0.2), DVector::from_vec(vec![w, 0.0]), 0.0);
            assert_eq!(u_hat_i(&net, &spec, &unc, &st, &p), u_i(&net, &spec, &st, &p));
        }
    }

    #[test]
    fn u_hat_acts_on_measurement() {
        let net = two_bus();
        let spec = net.controlled()[0].clone();
        let p = net.injections_at(0.0);
        let unc = UncertaintyBounds::exact(1.0);
        // true frequency near the bound where the controller acts, measurement inside the deadband
        let truth = SystemState::new(DVector::from_element(1, 0.0), DVector::from_vec(vec![0.39, 0.0]), 0.0);
        let mut measured = truth.clone();
        measured.omega[0] = 0.15;
        assert_eq!(u_hat_i(&net, &spec, &unc, &measured, &p), 0.0);
        assert!(u_i(&net, &spec, &truth, &p) < 0.0);
    }

    #[test]
    fn class_k_table() {
        let k = ClassK::table(vec![(1.0, 2.0), (2.0, 3.0)]).unwrap();
        assert_eq!(k.eval(0.0), 0.0);
        assert!((k.eval(0.5) - 1.0).abs() < 1e-15);
        assert!((k.eval(1.5) - 2.5).abs() < 1e-15);
        assert!((k.eval(3.0) - 4.0).abs() < 1e-15);
        assert!((k.eval(-1.5) + 2.5).abs() < 1e-15);
        assert!(ClassK::table(vec![(1.0, 2.0), (2.0, 1.0)]).is_err());
    }

    #[test]
    fn probe_deadband_is_zero() {
        let net = two_bus();
        let spec = net.controlled()[0].clone();
        let site = ProbeSite {
            state: SystemState::new(DVector::from_element(1, 0.3), DVector::zeros(2), 0.0),
            p: net.injections_at(0.0),
        };
        assert_eq!(lipschitz_probe(&spec, &net, &site, ControlLaw::Barrier, 500, 0.05, 1), 0.0);
    }

    #[test]
    fn assumption_checks() {
        let spec = unit_spec();
        let mut unc = UncertaintyBounds::exact(1.0);
        assert!(unc.check(&spec, 0.0, 1.0).is_ok());
        unc.eps_omega = 0.95;
        assert!(unc.check(&spec, 0.0, 1.0).is_ok());
        assert!(unc.check(&spec, 0.5, 1.0).is_err());
        unc.eps_omega = 1.0;
        assert!(unc.check(&spec, 0.0, 1.0).is_err());
        unc.eps_omega = 0.0;
        unc.e_hat = 2.0;
        assert!(unc.check(&spec, 0.0, 1.0).is_err());
        unc.eps_e = 1.0;
        assert!(unc.check(&spec, 0.0, 1.0).is_ok());
    }
}
