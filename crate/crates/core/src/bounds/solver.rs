//! Small dense log-barrier Newton method for smooth programs
//! `min f(x) s.t. g_k(x) <= 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Value with first and (optionally) second derivatives. A missing Hessian
/// means the function is affine.
#[derive(Debug, Clone)]
pub struct Second {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: Option<DMatrix<f64>>,
}

impl Second {
    pub fn affine(value: f64, grad: DVector<f64>) -> Self {
        Self { value, grad, hess: None }
    }
}

pub trait Program: Sync {
    fn dim(&self) -> usize;
    fn objective(&self, x: &DVector<f64>) -> Second;
    fn constraints(&self, x: &DVector<f64>) -> Vec<Second>;

    /// Constraint values only; override when cheaper than [`Program::constraints`].
    fn constraint_values(&self, x: &DVector<f64>) -> Vec<f64> {
        self.constraints(x).into_iter().map(|c| c.value).collect()
    }

    fn objective_value(&self, x: &DVector<f64>) -> f64 {
        self.objective(x).value
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierSettings {
    pub t0: f64,
    pub growth: f64,
    /// Stop once `constraints / t` falls below this.
    pub gap_tol: f64,
    /// Stop centering once half the squared Newton decrement is below this.
    pub newton_tol: f64,
    pub max_newton: usize,
}

impl Default for BarrierSettings {
    fn default() -> Self {
        Self {
            t0: 1.0,
            growth: 20.0,
            gap_tol: 1e-9,
            newton_tol: 1e-11,
            max_newton: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: DVector<f64>,
    pub value: f64,
    pub newton_steps: usize,
}

pub fn strictly_feasible<P: Program + ?Sized>(prog: &P, x: &DVector<f64>) -> bool {
    prog.constraint_values(x).iter().all(|&g| g < 0.0)
}

fn barrier_value<P: Program + ?Sized>(prog: &P, t: f64, x: &DVector<f64>) -> Option<f64> {
    let mut v = t * prog.objective_value(x);
    for g in prog.constraint_values(x) {
        if !(g < 0.0) {
            return None;
        }
        v -= (-g).ln();
    }
    v.is_finite().then_some(v)
}

/// Solves `(H + tau I) d = -grad`, raising `tau` until `H + tau I` factors.
fn regularized_step(h: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let n = grad.len();
    let scale = h.diagonal().amax().max(1.0);
    let mut tau = 0.0;
    for _ in 0..60 {
        let mut a = h.clone();
        for i in 0..n {
            a[(i, i)] += tau;
        }
        if let Some(ch) = a.cholesky() {
            let d = ch.solve(&(-grad));
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        tau = if tau == 0.0 { 1e-12 * scale } else { tau * 10.0 };
    }
    None
}

/// Newton centering on `t f - sum log(-g)`. Returns the number of steps.
fn center<P: Program + ?Sized>(
    prog: &P,
    t: f64,
    x: &mut DVector<f64>,
    s: &BarrierSettings,
    stop: &dyn Fn(&DVector<f64>) -> bool,
) -> (usize, bool) {
    let n = prog.dim();
    for step in 0..s.max_newton {
        let f = prog.objective(x);
        let mut grad = f.grad * t;
        let mut hess = f.hess.map_or_else(|| DMatrix::zeros(n, n), |h| h * t);
        for c in prog.constraints(x) {
            let inv = -1.0 / c.value;
            grad.axpy(inv, &c.grad, 1.0);
            hess.ger(inv * inv, &c.grad, &c.grad, 1.0);
            if let Some(h) = c.hess {
                hess += h * inv;
            }
        }
        let Some(d) = regularized_step(&hess, &grad) else {
            return (step, false);
        };
        let slope = grad.dot(&d);
        if -slope / 2.0 <= s.newton_tol {
            return (step, false);
        }
        let Some(phi0) = barrier_value(prog, t, x) else {
            return (step, false);
        };
        let mut a = 1.0;
        let mut moved = false;
        while a > 1e-14 {
            let trial = &*x + &d * a;
            if let Some(phi) = barrier_value(prog, t, &trial) {
                if phi <= phi0 + 1e-4 * a * slope {
                    *x = trial;
                    moved = true;
                    break;
                }
            }
            a *= 0.5;
        }
        if !moved {
            return (step, false);
        }
        if stop(x) {
            return (step + 1, true);
        }
    }
    (s.max_newton, false)
}

fn run<P: Program + ?Sized>(
    prog: &P,
    x0: &DVector<f64>,
    s: &BarrierSettings,
    stop: &dyn Fn(&DVector<f64>) -> bool,
) -> Option<Solution> {
    if !strictly_feasible(prog, x0) {
        return None;
    }
    let m = prog.constraint_values(x0).len().max(1) as f64;
    let mut x = x0.clone();
    let mut t = s.t0;
    let mut total = 0;
    loop {
        let (k, stopped) = center(prog, t, &mut x, s, stop);
        total += k;
        if stopped || m / t < s.gap_tol {
            break;
        }
        t *= s.growth;
    }
    Some(Solution {
        value: prog.objective_value(&x),
        x,
        newton_steps: total,
    })
}

/// Minimizes from a strictly feasible `x0`; `None` if `x0` is not strictly
/// feasible.
pub fn minimize<P: Program + ?Sized>(prog: &P, x0: &DVector<f64>, s: &BarrierSettings) -> Option<Solution> {
    run(prog, x0, s, &|_| false)
}

/// Auxiliary problem `min s s.t. g_k(x) <= s, s >= -1`.
struct PhaseOne<'a, P: ?Sized> {
    inner: &'a P,
}

impl<P: Program + ?Sized> Program for PhaseOne<'_, P> {
    fn dim(&self) -> usize {
        self.inner.dim() + 1
    }

    fn objective(&self, x: &DVector<f64>) -> Second {
        let n = self.dim();
        let mut g = DVector::zeros(n);
        g[n - 1] = 1.0;
        Second::affine(x[n - 1], g)
    }

    fn constraints(&self, x: &DVector<f64>) -> Vec<Second> {
        let n = self.dim();
        let s = x[n - 1];
        let y = x.rows(0, n - 1).into_owned();
        let mut out: Vec<Second> = self
            .inner
            .constraints(&y)
            .into_iter()
            .map(|c| {
                let mut grad = DVector::zeros(n);
                grad.rows_mut(0, n - 1).copy_from(&c.grad);
                grad[n - 1] = -1.0;
                let hess = c.hess.map(|h| {
                    let mut big = DMatrix::zeros(n, n);
                    big.view_mut((0, 0), (n - 1, n - 1)).copy_from(&h);
                    big
                });
                Second {
                    value: c.value - s,
                    grad,
                    hess,
                }
            })
            .collect();
        let mut grad = DVector::zeros(n);
        grad[n - 1] = -1.0;
        out.push(Second::affine(-s - 1.0, grad));
        out
    }

    fn constraint_values(&self, x: &DVector<f64>) -> Vec<f64> {
        let n = self.dim();
        let s = x[n - 1];
        let y = x.rows(0, n - 1).into_owned();
        let mut v: Vec<f64> = self.inner.constraint_values(&y).into_iter().map(|g| g - s).collect();
        v.push(-s - 1.0);
        v
    }
}

/// Searches for a strictly feasible point starting anywhere. Returns `None`
/// when the auxiliary optimum is nonnegative.
pub fn find_feasible<P: Program + ?Sized>(prog: &P, x0: &DVector<f64>, s: &BarrierSettings) -> Option<DVector<f64>> {
    if strictly_feasible(prog, x0) {
        return Some(x0.clone());
    }
    let n = prog.dim();
    let worst = prog.constraint_values(x0).into_iter().fold(f64::NEG_INFINITY, f64::max);
    if !worst.is_finite() {
        return None;
    }
    let aux = PhaseOne { inner: prog };
    let mut z = DVector::zeros(n + 1);
    z.rows_mut(0, n).copy_from(x0);
    z[n] = worst.max(0.0) + 1.0;
    let done = |z: &DVector<f64>| strictly_feasible(prog, &z.rows(0, n).into_owned());
    let sol = run(&aux, &z, s, &done)?;
    let x = sol.x.rows(0, n).into_owned();
    strictly_feasible(prog, &x).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// min (x - a)^2 + (y - b)^2 over the unit disc.
    struct Disc {
        a: f64,
        b: f64,
    }

    impl Program for Disc {
        fn dim(&self) -> usize {
            2
        }
        fn objective(&self, x: &DVector<f64>) -> Second {
            let (dx, dy) = (x[0] - self.a, x[1] - self.b);
            Second {
                value: dx * dx + dy * dy,
                grad: DVector::from_vec(vec![2.0 * dx, 2.0 * dy]),
                hess: Some(DMatrix::identity(2, 2) * 2.0),
            }
        }
        fn constraints(&self, x: &DVector<f64>) -> Vec<Second> {
            vec![Second {
                value: x.norm_squared() - 1.0,
                grad: x * 2.0,
                hess: Some(DMatrix::identity(2, 2) * 2.0),
            }]
        }
    }

    #[test]
    fn projection_onto_disc() {
        let p = Disc { a: 3.0, b: 4.0 };
        let sol = minimize(&p, &DVector::zeros(2), &BarrierSettings::default()).unwrap();
        assert!((sol.x[0] - 0.6).abs() < 1e-7 && (sol.x[1] - 0.8).abs() < 1e-7, "{}", sol.x);
        assert!((sol.value - 16.0).abs() < 1e-6);
    }

    #[test]
    fn interior_minimum() {
        let p = Disc { a: 0.2, b: -0.1 };
        let sol = minimize(&p, &DVector::from_vec(vec![0.5, 0.5]), &BarrierSettings::default()).unwrap();
        assert!(sol.value < 1e-9);
    }

    #[test]
    fn infeasible_start_rejected() {
        let p = Disc { a: 0.0, b: 0.0 };
        assert!(minimize(&p, &DVector::from_vec(vec![2.0, 0.0]), &BarrierSettings::default()).is_none());
    }

    #[test]
    fn phase_one_finds_interior() {
        let p = Disc { a: 0.0, b: 0.0 };
        let x = find_feasible(&p, &DVector::from_vec(vec![5.0, -3.0]), &BarrierSettings::default()).unwrap();
        assert!(x.norm() < 1.0);
    }

    /// Two disjoint half-planes.
    struct Empty;

    impl Program for Empty {
        fn dim(&self) -> usize {
            1
        }
        fn objective(&self, x: &DVector<f64>) -> Second {
            Second::affine(x[0], DVector::from_element(1, 1.0))
        }
        fn constraints(&self, x: &DVector<f64>) -> Vec<Second> {
            vec![
                Second::affine(x[0] - 1.0, DVector::from_element(1, 1.0)),
                Second::affine(2.0 - x[0], DVector::from_element(1, -1.0)),
            ]
        }
    }

    #[test]
    fn phase_one_detects_empty_set() {
        assert!(find_feasible(&Empty, &DVector::zeros(1), &BarrierSettings::default()).is_none());
    }
}
