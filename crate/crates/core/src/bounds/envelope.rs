//! Scalar comparison envelope for a controlled frequency outside its band.
//!
//! Above the band the envelope solves `M z' = -kappa(z - hi) / (z - hi_th)`
//! and dominates the closed-loop frequency. Below the band the problem is
//! mirrored through zero.

use serde::{Deserialize, Serialize};

use crate::controller::{ClassK, ControlledBusSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Upper,
    Lower,
}

/// Envelope parameters in mirrored coordinates (the upper case is the
/// identity mirror): the envelope decreases towards `bound` from `z0`.
#[derive(Debug, Clone, PartialEq)]
struct Mirrored {
    side: Side,
    bound: f64,
    threshold: f64,
    kappa: ClassK,
    inertia: f64,
    z0: f64,
}

impl Mirrored {
    fn new(spec: &ControlledBusSpec, inertia: f64, omega0: f64) -> Result<Self> {
        if !(inertia > 0.0) {
            return Err(Error::Domain(format!("inertia must be positive, got {inertia}")));
        }
        let (hi, lo) = (spec.effective_hi(), spec.effective_lo());
        if omega0 > hi {
            Ok(Self {
                side: Side::Upper,
                bound: hi,
                threshold: spec.omega_hi_th,
                kappa: spec.kappa_upper.clone(),
                inertia,
                z0: omega0,
            })
        } else if omega0 < lo {
            Ok(Self {
                side: Side::Lower,
                bound: -lo,
                threshold: -spec.omega_lo_th,
                kappa: spec.kappa_lower.clone(),
                inertia,
                z0: -omega0,
            })
        } else {
            Err(Error::Domain(format!(
                "initial frequency {omega0} is inside the band [{lo}, {hi}]"
            )))
        }
    }

    fn rate(&self, z: f64) -> f64 {
        -self.kappa.eval(z - self.bound) / ((z - self.threshold) * self.inertia)
    }

    fn rk4(&self, z: f64, h: f64) -> f64 {
        let k1 = self.rate(z);
        let k2 = self.rate(z + 0.5 * h * k1);
        let k3 = self.rate(z + 0.5 * h * k2);
        let k4 = self.rate(z + h * k3);
        z + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    }

    /// Rate of the deviation `y = z - bound`. Integrating `y` keeps its
    /// relative accuracy once `z` is within rounding of the bound.
    fn deviation_rate(&self, y: f64) -> f64 {
        -self.kappa.eval(y) / ((y + self.bound - self.threshold) * self.inertia)
    }

    fn rk4_deviation(&self, y: f64, h: f64) -> f64 {
        let k1 = self.deviation_rate(y);
        let k2 = self.deviation_rate(y + 0.5 * h * k1);
        let k3 = self.deviation_rate(y + 0.5 * h * k2);
        let k4 = self.deviation_rate(y + h * k3);
        y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    }

    fn unmirror(&self, z: f64) -> f64 {
        match self.side {
            Side::Upper => z,
            Side::Lower => -z,
        }
    }
}

/// Closed-form exponential bound for a linear class-K function:
/// `bound + (z0 - bound) exp((-gamma t / M + z0 - bound) / (bound - threshold))`,
/// mirrored for the lower side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialBound {
    pub side: Side,
    pub bound: f64,
    pub threshold: f64,
    pub gamma: f64,
    pub inertia: f64,
    pub omega0: f64,
}

impl ExponentialBound {
    pub fn at(&self, t: f64) -> f64 {
        let s = match self.side {
            Side::Upper => 1.0,
            Side::Lower => -1.0,
        };
        let (b, th, z0) = (s * self.bound, s * self.threshold, s * self.omega0);
        let v = b + (z0 - b) * ((-self.gamma * t / self.inertia + z0 - b) / (b - th)).exp();
        s * v
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvelopeResult {
    pub side: Side,
    pub times: Vec<f64>,
    /// Envelope in the original frequency coordinates (rad/s).
    pub z: Vec<f64>,
    /// Residual of the implicit solution along the samples (linear class-K
    /// only).
    pub implicit_residuals: Option<Vec<f64>>,
    pub exponential: Option<ExponentialBound>,
}

impl EnvelopeResult {
    pub fn max_implicit_residual(&self) -> Option<f64> {
        self.implicit_residuals
            .as_ref()
            .map(|r| r.iter().fold(0.0f64, |a, &x| a.max(x.abs())))
    }
}

/// Residual of the implicit relation
/// `z + (hi - hi_th) ln((z - hi) / (z0 - hi)) + gamma t / M - z0`.
pub fn implicit_residual(bound: f64, threshold: f64, gamma: f64, inertia: f64, z0: f64, t: f64, z: f64) -> f64 {
    deviation_residual(bound - threshold, gamma, inertia, z0 - bound, t, z - bound)
}

/// The implicit relation written in deviations from the bound.
fn deviation_residual(width: f64, gamma: f64, inertia: f64, y0: f64, t: f64, y: f64) -> f64 {
    y - y0 + width * (y / y0).ln() + gamma * t / inertia
}

/// Integrates the envelope from `omega0` over `[0, horizon]` with step `dt`.
pub fn envelope_z(
    spec: &ControlledBusSpec,
    inertia: f64,
    omega0: f64,
    horizon: f64,
    dt: f64,
) -> Result<EnvelopeResult> {
    if !(dt > 0.0 && horizon >= 0.0) {
        return Err(Error::Domain("need dt > 0 and horizon >= 0".into()));
    }
    let mir = Mirrored::new(spec, inertia, omega0)?;
    let steps = (horizon / dt + 1e-9).floor() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut ys = Vec::with_capacity(steps + 1);
    let y0 = mir.z0 - mir.bound;
    let mut y = y0;
    for k in 0..=steps {
        times.push(k as f64 * dt);
        ys.push(y);
        if k < steps {
            y = mir.rk4_deviation(y, dt);
        }
    }
    let gamma = match &mir.kappa {
        ClassK::Linear { gamma } => Some(*gamma),
        ClassK::Table { .. } => None,
    };
    let width = mir.bound - mir.threshold;
    let implicit_residuals = gamma.map(|g| {
        times
            .iter()
            .zip(&ys)
            .map(|(&t, &y)| deviation_residual(width, g, inertia, y0, t, y))
            .collect()
    });
    let exponential = gamma.map(|g| ExponentialBound {
        side: mir.side,
        bound: mir.unmirror(mir.bound),
        threshold: mir.unmirror(mir.threshold),
        gamma: g,
        inertia,
        omega0,
    });
    Ok(EnvelopeResult {
        side: mir.side,
        times,
        z: ys.into_iter().map(|y| mir.unmirror(mir.bound + y)).collect(),
        implicit_residuals,
        exponential,
    })
}

/// Time at which the envelope of the tightened controller (bound moved
/// inwards by `epsilon_shrink`) reaches the original bound.
pub fn entry_time_estimate(spec: &ControlledBusSpec, inertia: f64, omega0: f64, horizon: f64, dt: f64) -> Result<f64> {
    if !(omega0 > spec.omega_hi || omega0 < spec.omega_lo) {
        return Err(Error::Domain(format!("initial frequency {omega0} is not outside the band")));
    }
    if spec.epsilon_shrink <= 0.0 {
        // the untightened envelope only approaches the bound asymptotically
        return Err(Error::NotReached { horizon });
    }
    let mir = Mirrored::new(spec, inertia, omega0)?;
    let target = match mir.side {
        Side::Upper => spec.omega_hi,
        Side::Lower => -spec.omega_lo,
    };
    let steps = (horizon / dt).ceil() as usize;
    let mut z = mir.z0;
    for k in 0..steps {
        let next = mir.rk4(z, dt);
        if next <= target {
            let (mut lo, mut hi) = (0.0, dt);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mir.rk4(z, mid) > target {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo <= 1e-15 {
                    break;
                }
            }
            return Ok(k as f64 * dt + hi);
        }
        z = next;
    }
    Err(Error::NotReached { horizon })
}

/// Value of the tightened envelope at time `t` (used to validate entry times).
pub fn tightened_envelope_at(spec: &ControlledBusSpec, inertia: f64, omega0: f64, t: f64, dt: f64) -> Result<f64> {
    let mir = Mirrored::new(spec, inertia, omega0)?;
    let n = (t / dt).floor() as usize;
    let mut z = mir.z0;
    for _ in 0..n {
        z = mir.rk4(z, dt);
    }
    let rest = t - n as f64 * dt;
    if rest > 0.0 {
        z = mir.rk4(z, rest);
    }
    Ok(mir.unmirror(z))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> ControlledBusSpec {
        ControlledBusSpec::linear(1, -2.0, 2.0, -1.0, 1.0, 1.0)
    }

    #[test]
    fn starts_at_initial_condition() {
        let env = envelope_z(&unit(), 1.0, 3.0, 0.0, 1e-3).unwrap();
        assert_eq!(env.z, vec![3.0]);
        assert_eq!(env.implicit_residuals.unwrap()[0], 0.0);
    }

    #[test]
    fn exponential_bound_hand_formula() {
        let env = envelope_z(&unit(), 1.0, 3.0, 10.0, 1e-3).unwrap();
        let exp = env.exponential.unwrap();
        for (&t, &z) in env.times.iter().zip(&env.z) {
            let hand = 2.0 + (1.0 - t).exp();
            assert!((exp.at(t) - hand).abs() < 1e-12);
            assert!(z <= hand + 1e-12);
            assert!(z > 2.0);
        }
        assert!(env.max_implicit_residual().unwrap() < 1e-9);
    }

    #[test]
    fn envelope_is_nonincreasing() {
        let env = envelope_z(&unit(), 0.5, 5.0, 5.0, 1e-3).unwrap();
        assert!(env.z.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn residual_stays_small_after_convergence() {
        // decay rate 20 per second: z reaches the bound in floating point
        // long before the horizon
        let env = envelope_z(&unit(), 0.05, 3.0, 10.0, 1e-3).unwrap();
        assert!(env.z.last().unwrap() - 2.0 < 1e-60);
        assert!(env.max_implicit_residual().unwrap() < 1e-6);
    }

    #[test]
    fn lower_side_is_mirrored() {
        let up = envelope_z(&unit(), 1.0, 3.0, 2.0, 1e-3).unwrap();
        let dn = envelope_z(&unit(), 1.0, -3.0, 2.0, 1e-3).unwrap();
        assert_eq!(dn.side, Side::Lower);
        for (a, b) in up.z.iter().zip(&dn.z) {
            assert!((a + b).abs() < 1e-14);
        }
        let e = dn.exponential.unwrap();
        assert!(dn.times.iter().zip(&dn.z).all(|(&t, &z)| z >= e.at(t) - 1e-12));
    }

    #[test]
    fn inside_band_is_domain_error() {
        assert!(matches!(envelope_z(&unit(), 1.0, 1.5, 1.0, 1e-3), Err(Error::Domain(_))));
    }

    #[test]
    fn entry_time_needs_shrink() {
        assert!(matches!(entry_time_estimate(&unit(), 1.0, 3.0, 1e3, 1e-3), Err(Error::NotReached { .. })));
    }

    #[test]
    fn entry_time_with_shrink() {
        let mut s = unit();
        s.epsilon_shrink = 0.5;
        let t1 = entry_time_estimate(&s, 1.0, 3.0, 100.0, 1e-3).unwrap();
        assert!(t1 > 0.0 && t1.is_finite());
        let z = tightened_envelope_at(&s, 1.0, 3.0, t1, 1e-3).unwrap();
        assert!((z - 2.0).abs() < 1e-6, "z(t1) = {z}");
        // larger gain enters sooner
        let faster = entry_time_estimate(&s.clone().with_gamma(2.0), 1.0, 3.0, 100.0, 1e-3).unwrap();
        assert!(faster < t1);
    }
}
