//! Synchronized equilibrium, the synchronization test and the shifted
//! injection `p_tilde = p - omega_inf * E`.
//!
//! Angles are solved in reduced form: the highest-index bus is pinned to
//! zero, which leaves `lambda = D theta` unchanged.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::PowerNetwork;

pub const NEWTON_TOL: f64 = 1e-10;
pub const NEWTON_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumInfo {
    /// Common frequency deviation (rad/s).
    pub omega_inf: f64,
    pub lambda_inf: DVector<f64>,
    /// Bus angles with the last bus at zero.
    pub theta_inf: DVector<f64>,
    pub p_tilde: DVector<f64>,
    /// `||L^+ p_tilde||_{E,inf}`; the sync test passes when below 1.
    pub sync_margin: f64,
    pub converged: bool,
    /// Residual `||p_tilde - D^T Y_b sin(lambda)||_inf` at the returned point.
    pub residual: f64,
    pub iterations: usize,
}

impl EquilibriumInfo {
    pub fn sync_holds(&self) -> bool {
        self.sync_margin < 1.0
    }
}

/// `sum p(t) / sum E`.
pub fn omega_inf(net: &PowerNetwork, t: f64) -> f64 {
    omega_inf_for(net, &net.injections_at(t))
}

pub fn omega_inf_for(net: &PowerNetwork, p: &DVector<f64>) -> f64 {
    p.sum() / net.dampings().sum()
}

pub fn p_tilde_for(net: &PowerNetwork, p: &DVector<f64>) -> DVector<f64> {
    let w = omega_inf_for(net, p);
    p - net.dampings() * w
}

fn reduced_laplacian(net: &PowerNetwork) -> DMatrix<f64> {
    let n = net.n();
    net.weighted_laplacian().view((0, 0), (n - 1, n - 1)).into_owned()
}

/// Solution of `L x = y` orthogonal to the ones vector, after removing the
/// component of `y` along it.
pub fn laplacian_solve(net: &PowerNetwork, y: &DVector<f64>) -> Result<DVector<f64>> {
    let n = net.n();
    let y = y.add_scalar(-y.mean());
    let chol = Cholesky::new(reduced_laplacian(net)).ok_or(Error::Singularity(2))?;
    let red = chol.solve(&y.rows(0, n - 1).into_owned());
    let mut x = DVector::zeros(n);
    x.rows_mut(0, n - 1).copy_from(&red);
    let shift = x.mean();
    Ok(x.add_scalar(-shift))
}

/// `max over lines |y_a - y_b|`.
pub fn edge_inf_norm(net: &PowerNetwork, y: &DVector<f64>) -> f64 {
    net.edge_differences(y).amax()
}

/// Sufficient synchronization test: returns (holds, margin).
pub fn sync_condition(net: &PowerNetwork, t: f64) -> Result<(bool, f64)> {
    sync_condition_for(net, &net.injections_at(t))
}

pub fn sync_condition_for(net: &PowerNetwork, p: &DVector<f64>) -> Result<(bool, f64)> {
    let x = laplacian_solve(net, &p_tilde_for(net, p))?;
    let margin = edge_inf_norm(net, &x);
    Ok((margin < 1.0, margin))
}

/// Equilibrium for the injections at time `t`, Newton from `theta = 0`.
pub fn solve_equilibrium(net: &PowerNetwork, t: f64) -> Result<EquilibriumInfo> {
    solve_equilibrium_for(net, &net.injections_at(t), None)
}

/// Equilibrium for an explicit injection vector, optionally warm-started
/// from bus angles `theta_guess`.
///
/// If the synchronization test fails and Newton does not converge inside the
/// angle box, returns `converged = false` rather than an error.
pub fn solve_equilibrium_for(
    net: &PowerNetwork,
    p: &DVector<f64>,
    theta_guess: Option<&DVector<f64>>,
) -> Result<EquilibriumInfo> {
    let omega_inf = omega_inf_for(net, p);
    let p_tilde = p - net.dampings() * omega_inf;
    let (holds, sync_margin) = sync_condition_for(net, p)?;
    match newton(net, &p_tilde, theta_guess) {
        Ok((theta, residual, iterations)) => {
            let lambda = net.edge_differences(&theta);
            Ok(EquilibriumInfo {
                omega_inf,
                lambda_inf: lambda,
                theta_inf: theta,
                p_tilde,
                sync_margin,
                converged: true,
                residual,
                iterations,
            })
        }
        Err(e) if holds => Err(e),
        Err(_) => Ok(EquilibriumInfo {
            omega_inf,
            lambda_inf: DVector::zeros(net.m()),
            theta_inf: DVector::zeros(net.n()),
            p_tilde,
            sync_margin,
            converged: false,
            residual: f64::INFINITY,
            iterations: NEWTON_MAX_ITER,
        }),
    }
}

fn mismatch(net: &PowerNetwork, p_tilde: &DVector<f64>, theta: &DVector<f64>) -> DVector<f64> {
    net.nodal_sum(&net.edge_differences(theta).map(f64::sin)) - p_tilde
}

fn newton(
    net: &PowerNetwork,
    p_tilde: &DVector<f64>,
    theta_guess: Option<&DVector<f64>>,
) -> Result<(DVector<f64>, f64, usize)> {
    let n = net.n();
    let b = net.susceptances();
    let mut theta = match theta_guess {
        Some(g) => g.add_scalar(-g[n - 1]),
        None => DVector::zeros(n),
    };
    let mut f = mismatch(net, p_tilde, &theta);
    let mut res = f.rows(0, n - 1).amax();
    for iter in 0..NEWTON_MAX_ITER {
        if res <= NEWTON_TOL {
            return finish(net, theta, res, iter);
        }
        let lambda = net.edge_differences(&theta);
        let mut jac = DMatrix::zeros(n - 1, n - 1);
        for (k, &(a, c)) in net.line_ends().iter().enumerate() {
            let w = b[k] * lambda[k].cos();
            for (r, s, v) in [(a, a, w), (c, c, w), (a, c, -w), (c, a, -w)] {
                if r < n - 1 && s < n - 1 {
                    jac[(r, s)] += v;
                }
            }
        }
        let step = jac
            .lu()
            .solve(&f.rows(0, n - 1).into_owned())
            .ok_or(Error::Convergence {
                iterations: iter,
                residual: res,
            })?;
        let mut scale = 1.0;
        let mut accepted = false;
        let mut left_box = false;
        for _ in 0..40 {
            let mut trial = theta.clone();
            for r in 0..n - 1 {
                trial[r] -= scale * step[r];
            }
            let tf = mismatch(net, p_tilde, &trial);
            let tres = tf.rows(0, n - 1).amax();
            let inside = net.edge_differences(&trial).amax() < FRAC_PI_2;
            if tres < res && inside {
                theta = trial;
                f = tf;
                res = tres;
                accepted = true;
                break;
            }
            left_box |= tres < res && !inside;
            scale *= 0.5;
        }
        if !accepted {
            if left_box {
                return Err(Error::OutsideGamma {
                    max_abs: net.edge_differences(&(&theta - &step.clone().insert_row(n - 1, 0.0))).amax(),
                });
            }
            return Err(Error::Convergence {
                iterations: iter,
                residual: res,
            });
        }
    }
    if res <= NEWTON_TOL {
        return finish(net, theta, res, NEWTON_MAX_ITER);
    }
    Err(Error::Convergence {
        iterations: NEWTON_MAX_ITER,
        residual: res,
    })
}

fn finish(net: &PowerNetwork, theta: DVector<f64>, res: f64, iter: usize) -> Result<(DVector<f64>, f64, usize)> {
    let max_abs = net.edge_differences(&theta).amax();
    if max_abs >= FRAC_PI_2 {
        return Err(Error::OutsideGamma { max_abs });
    }
    Ok((theta, res, iter))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{ieee39, two_bus, Bus, BusKind, Injection, TransmissionLine};

    fn two_bus_with(p: f64) -> PowerNetwork {
        two_bus()
            .with_injections(vec![(1, Injection::constant(p)), (2, Injection::constant(-p))])
            .unwrap()
    }

    #[test]
    fn omega_inf_formula() {
        assert_eq!(omega_inf(&two_bus(), 0.0), 0.0);
        let net = two_bus()
            .with_injections(vec![(1, Injection::constant(2.0)), (2, Injection::constant(0.0))])
            .unwrap();
        assert_eq!(omega_inf(&net, 0.0), 1.0);
    }

    #[test]
    fn omega_inf_ieee39_compensated_sum() {
        let net = ieee39();
        let kahan = |xs: Vec<f64>| {
            let (mut s, mut c) = (0.0f64, 0.0f64);
            for x in xs {
                let y = x - c;
                let t = s + y;
                c = (t - s) - y;
                s = t;
            }
            s
        };
        let p = kahan(net.buses().iter().map(|b| b.injection.at(0.0)).collect());
        let e = kahan(net.buses().iter().map(|b| b.damping).collect());
        assert!((omega_inf(&net, 0.0) - p / e).abs() < 1e-13);
    }

    #[test]
    fn two_bus_margin_hand_pseudoinverse() {
        // L^+ = 1/4 [[1,-1],[-1,1]], so L^+ p = (p, -p)/2 and the edge gap is p
        let (holds, m) = sync_condition(&two_bus_with(0.5), 0.0).unwrap();
        assert!(holds && (m - 0.5).abs() < 1e-12);
        let (holds, m) = sync_condition(&two_bus_with(1.2), 0.0).unwrap();
        assert!(!holds && (m - 1.2).abs() < 1e-12);
        let (holds, m) = sync_condition(&two_bus_with(0.0), 0.0).unwrap();
        assert!(holds && m == 0.0);
    }

    #[test]
    fn two_bus_equilibrium_is_arcsin() {
        let eq = solve_equilibrium(&two_bus(), 0.0).unwrap();
        assert!(eq.converged);
        assert!((eq.lambda_inf[0] - 0.5f64.asin()).abs() < 1e-10);
        assert_eq!(eq.omega_inf, 0.0);
    }

    #[test]
    fn zero_injection_gives_zero_angles() {
        let eq = solve_equilibrium(&two_bus_with(0.0), 0.0).unwrap();
        assert_eq!(eq.lambda_inf[0], 0.0);
        assert_eq!(eq.iterations, 0);
    }

    #[test]
    fn ieee39_residual_and_range() {
        let net = ieee39();
        let eq = solve_equilibrium(&net, 0.0).unwrap();
        let r = (&eq.p_tilde - net.nodal_sum(&eq.lambda_inf.map(f64::sin))).amax();
        assert!(r <= 1e-8, "residual {r}");
        assert!(net.range_residual(&eq.lambda_inf) <= 1e-8);
        assert!(eq.p_tilde.sum().abs() < 1e-10);
        assert!(eq.sync_holds());
    }

    #[test]
    fn unsynchronizable_reports_not_converged() {
        let eq = solve_equilibrium(&two_bus_with(1.2), 0.0).unwrap();
        assert!(!eq.converged);
    }

    #[test]
    fn warm_start_matches_cold() {
        let net = ieee39();
        let cold = solve_equilibrium(&net, 0.0).unwrap();
        let p = net.injections_at(0.0) * 1.05;
        let a = solve_equilibrium_for(&net, &p, None).unwrap();
        let b = solve_equilibrium_for(&net, &p, Some(&cold.theta_inf)).unwrap();
        assert!((a.lambda_inf - b.lambda_inf).amax() < 1e-9);
    }

    #[test]
    fn triangle_unique_in_box() {
        // grid over reduced angles: the only sign change of the mismatch in the box
        // sits at the Newton solution
        let bus = |id, p| Bus {
            id,
            inertia: 1.0,
            damping: 1.0,
            injection: Injection::constant(p),
            kind: BusKind::Load,
        };
        let line = |from, to, b| TransmissionLine {
            from,
            to,
            susceptance: b,
        };
        let net = PowerNetwork::new(
            None,
            vec![bus(1, 0.6), bus(2, -0.2), bus(3, -0.4)],
            vec![line(1, 2, 1.0), line(2, 3, 1.5), line(1, 3, 0.9)],
            vec![],
        )
        .unwrap();
        let eq = solve_equilibrium(&net, 0.0).unwrap();
        let pt = eq.p_tilde.clone();
        let h = 2e-3;
        let steps = (std::f64::consts::PI / h) as i64;
        let mut hits = Vec::new();
        for i in -steps..=steps {
            for j in -steps..=steps {
                let th = DVector::from_vec(vec![i as f64 * h, j as f64 * h, 0.0]);
                let lam = net.edge_differences(&th);
                if lam.amax() > FRAC_PI_2 {
                    continue;
                }
                let f = net.nodal_sum(&lam.map(f64::sin)) - &pt;
                if f.rows(0, 2).amax() < 5e-3 {
                    hits.push(th);
                }
            }
        }
        assert!(!hits.is_empty());
        for th in &hits {
            assert!((th - &eq.theta_inf).amax() < 1e-2);
        }
        // refine the best grid hit with the solver and compare
        let best = hits
            .iter()
            .min_by(|a, b| {
                let fa = (net.nodal_sum(&net.edge_differences(a).map(f64::sin)) - &pt).amax();
                let fb = (net.nodal_sum(&net.edge_differences(b).map(f64::sin)) - &pt).amax();
                fa.total_cmp(&fb)
            })
            .unwrap();
        let refined = solve_equilibrium_for(&net, &net.injections_at(0.0), Some(best)).unwrap();
        assert!((refined.lambda_inf - eq.lambda_inf).amax() < 1e-6);
    }
}
