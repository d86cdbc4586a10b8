use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::network::PowerNetwork;

/// Admissibility tolerance on `||(I - D D^+) lambda||_inf`.
pub const ADMISSIBLE_TOL: f64 = 1e-8;

/// Network state in edge/frequency coordinates: line angle differences
/// `lambda` (rad, one per line) and bus frequency deviations `omega`
/// (rad/s, one per bus) at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub lambda: DVector<f64>,
    pub omega: DVector<f64>,
    pub t: f64,
}

impl SystemState {
    pub fn new(lambda: DVector<f64>, omega: DVector<f64>, t: f64) -> Self {
        Self { lambda, omega, t }
    }

    /// State generated by bus angles `theta`, which is admissible by
    /// construction.
    pub fn from_angles(net: &PowerNetwork, theta: &DVector<f64>, omega: DVector<f64>, t: f64) -> Self {
        Self {
            lambda: net.edge_differences(theta),
            omega,
            t,
        }
    }

    pub fn is_admissible(&self, net: &PowerNetwork) -> bool {
        self.lambda.len() == net.m()
            && self.omega.len() == net.n()
            && net.range_residual(&self.lambda) <= ADMISSIBLE_TOL
    }

    /// Flattened `(lambda, omega)`.
    pub fn to_vector(&self) -> DVector<f64> {
        let m = self.lambda.len();
        DVector::from_fn(m + self.omega.len(), |k, _| {
            if k < m {
                self.lambda[k]
            } else {
                self.omega[k - m]
            }
        })
    }

    pub fn from_vector(x: &DVector<f64>, m: usize, t: f64) -> Self {
        Self {
            lambda: x.rows(0, m).into_owned(),
            omega: x.rows(m, x.len() - m).into_owned(),
            t,
        }
    }
}
