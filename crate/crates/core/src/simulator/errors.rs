//! Deterministic measurement-error signals for robustness runs.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::UncertaintyBounds;
use crate::error::{Error, Result};

/// Waveform shared by all error channels of one bus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum SignalShape {
    /// `amp * sin(2 pi f t)`, `f` in Hz.
    Sinusoid { frequency: f64 },
    /// Piecewise constant, redrawn uniformly in `[-amp, amp]` every `hold`
    /// seconds.
    SeededUniform { hold: f64 },
}

/// Error amplitudes per channel: frequency (rad/s), aggregate line flow and
/// injection (per-unit power). The injection error also carries a
/// proportional part `p_rel * p_i(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSignalSpec {
    #[serde(flatten)]
    pub shape: SignalShape,
    #[serde(default)]
    pub omega_amp: f64,
    #[serde(default)]
    pub lambda_amp: f64,
    #[serde(default)]
    pub p_amp: f64,
    #[serde(default)]
    pub p_rel: f64,
}

impl ErrorSignalSpec {
    pub fn zero() -> Self {
        Self {
            shape: SignalShape::Sinusoid { frequency: 1.0 },
            omega_amp: 0.0,
            lambda_amp: 0.0,
            p_amp: 0.0,
            p_rel: 0.0,
        }
    }
}

/// Error values at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorSample {
    pub omega: f64,
    pub flow: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementErrors {
    spec: ErrorSignalSpec,
    seed: u64,
    /// Damping the controller believes in.
    pub e_hat: f64,
}

impl MeasurementErrors {
    pub fn at(&self, t: f64) -> ErrorSample {
        let s = &self.spec;
        match s.shape {
            SignalShape::Sinusoid { frequency } => {
                let w = (2.0 * PI * frequency * t).sin();
                ErrorSample {
                    omega: s.omega_amp * w,
                    flow: s.lambda_amp * w,
                    p: s.p_amp * w,
                }
            }
            SignalShape::SeededUniform { hold } => {
                let k = (t / hold).floor().max(0.0) as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(k);
                let mut draw = |amp: f64| {
                    let v: f64 = rng.gen_range(-1.0..=1.0);
                    amp * v
                };
                ErrorSample {
                    omega: draw(s.omega_amp),
                    flow: draw(s.lambda_amp),
                    p: draw(s.p_amp),
                }
            }
        }
    }

    pub fn spec(&self) -> &ErrorSignalSpec {
        &self.spec
    }

    /// Injection seen by the controller when the true value is `p`.
    pub fn measured_p(&self, t: f64, p: f64) -> f64 {
        p * (1.0 + self.spec.p_rel) + self.at(t).p
    }
}

/// Builds the error signals for one bus, rejecting amplitudes above the
/// declared bounds. `p_peak` bounds `|p_i(t)|` and sizes the proportional
/// injection error.
pub fn make_measurement_errors(
    uncertainty: &UncertaintyBounds,
    spec: &ErrorSignalSpec,
    p_peak: f64,
    seed: u64,
) -> Result<MeasurementErrors> {
    for (channel, amplitude, bound) in [
        ("omega", spec.omega_amp, uncertainty.eps_omega),
        ("lambda", spec.lambda_amp, uncertainty.eps_lambda),
        ("p", spec.p_amp + spec.p_rel.abs() * p_peak, uncertainty.eps_p),
    ] {
        if !(amplitude >= 0.0) {
            return Err(Error::Validation(format!("{channel} error amplitude must be nonnegative")));
        }
        if amplitude > bound * (1.0 + 1e-12) {
            return Err(Error::Bound {
                channel,
                amplitude,
                bound,
            });
        }
    }
    match spec.shape {
        SignalShape::Sinusoid { frequency } if !(frequency > 0.0) => {
            return Err(Error::Validation("error sinusoid frequency must be positive".into()))
        }
        SignalShape::SeededUniform { hold } if !(hold > 0.0) => {
            return Err(Error::Validation("error hold interval must be positive".into()))
        }
        _ => {}
    }
    Ok(MeasurementErrors {
        spec: *spec,
        seed,
        e_hat: uncertainty.e_hat,
    })
}
