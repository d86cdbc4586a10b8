//! Lyapunov energy function, the region-of-attraction level and set
//! membership tests.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::equilibrium::EquilibriumInfo;
use crate::error::{Error, Result};
use crate::network::PowerNetwork;
use crate::state::SystemState;

/// Absolute slack on level-set comparisons.
pub const MEMBERSHIP_SLACK: f64 = 1e-12;

pub const DEFAULT_BETA: f64 = 1.01;

/// Potential of one line relative to its equilibrium angle `lam_inf`.
/// Nonnegative on `[-pi/2, pi/2]`, zero at `lam_inf`.
pub fn line_potential(lam: f64, lam_inf: f64) -> f64 {
    lam_inf.cos() - lam.cos() - lam * lam_inf.sin() + lam_inf * lam_inf.sin()
}

/// d/d(lam) of [`line_potential`].
pub fn line_potential_slope(lam: f64, lam_inf: f64) -> f64 {
    lam.sin() - lam_inf.sin()
}

pub fn kinetic_energy(net: &PowerNetwork, eq: &EquilibriumInfo, state: &SystemState) -> f64 {
    net.buses()
        .iter()
        .zip(state.omega.iter())
        .map(|(b, w)| 0.5 * b.inertia * (w - eq.omega_inf).powi(2))
        .sum()
}

pub fn potential_energy(net: &PowerNetwork, eq: &EquilibriumInfo, state: &SystemState) -> f64 {
    net.lines()
        .iter()
        .enumerate()
        .map(|(k, l)| l.susceptance * line_potential(state.lambda[k], eq.lambda_inf[k]))
        .sum()
}

/// Energy function V(lambda, omega).
pub fn energy_v(net: &PowerNetwork, eq: &EquilibriumInfo, state: &SystemState) -> f64 {
    kinetic_energy(net, eq, state) + potential_energy(net, eq, state)
}

/// Level `c`: minimum of V over the boundary of the angle box at
/// `omega = omega_inf`. Each boundary face pins a single line at `+-pi/2`
/// and the remaining lines sit at their equilibrium values, so every face
/// minimum is closed form.
pub fn compute_c(net: &PowerNetwork, eq: &EquilibriumInfo) -> f64 {
    net.lines()
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let li = eq.lambda_inf[k];
            l.susceptance * line_potential(FRAC_PI_2, li).min(line_potential(-FRAC_PI_2, li))
        })
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyContext {
    pub equilibrium: EquilibriumInfo,
    pub c_level: f64,
    pub beta: f64,
    /// Level of the quadratic ellipsoid; user supplied.
    pub c_bar: Option<f64>,
}

impl EnergyContext {
    pub fn new(net: &PowerNetwork, equilibrium: EquilibriumInfo, beta: f64) -> Result<Self> {
        if !(beta > 1.0) {
            return Err(Error::Validation(format!("beta must exceed 1, got {beta}")));
        }
        if !equilibrium.converged {
            return Err(Error::Validation("equilibrium did not converge".into()));
        }
        let c_level = compute_c(net, &equilibrium);
        Ok(Self {
            equilibrium,
            c_level,
            beta,
            c_bar: None,
        })
    }

    pub fn with_c_bar(mut self, c_bar: f64) -> Self {
        self.c_bar = Some(c_bar);
        self
    }

    pub fn phi_level(&self) -> f64 {
        self.c_level / self.beta
    }
}

pub fn in_angle_box(state: &SystemState) -> bool {
    state.lambda.iter().all(|l| l.abs() <= FRAC_PI_2)
}

/// Membership in `{|lambda| <= pi/2, V <= c / beta}`.
pub fn in_phi(net: &PowerNetwork, ctx: &EnergyContext, state: &SystemState) -> bool {
    in_angle_box(state) && energy_v(net, &ctx.equilibrium, state) <= ctx.phi_level() + MEMBERSHIP_SLACK
}

/// Membership in `{|lambda| <= pi/2, V <= eta}`.
pub fn in_phi_hat(net: &PowerNetwork, eq: &EquilibriumInfo, eta: f64, state: &SystemState) -> bool {
    in_angle_box(state) && energy_v(net, eq, state) <= eta + MEMBERSHIP_SLACK
}

/// Quadratic energy used for the ellipsoidal inner estimate.
pub fn energy_v_bar(net: &PowerNetwork, eq: &EquilibriumInfo, state: &SystemState) -> f64 {
    let pot: f64 = net
        .lines()
        .iter()
        .enumerate()
        .map(|(k, l)| 0.5 * l.susceptance * (state.lambda[k] - eq.lambda_inf[k]).powi(2))
        .sum();
    kinetic_energy(net, eq, state) + pot
}

pub fn in_phi_bar(net: &PowerNetwork, ctx: &EnergyContext, state: &SystemState) -> Result<bool> {
    let c_bar = ctx.c_bar.ok_or(Error::MissingParameter("c_bar"))?;
    Ok(energy_v_bar(net, &ctx.equilibrium, state) <= c_bar + MEMBERSHIP_SLACK)
}
