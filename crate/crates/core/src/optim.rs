//! BFGS ascent with central-difference gradients, plus a central-difference
//! Hessian for standard errors.

use nalgebra::{DMatrix, DVector};

/// Relative step for central-difference gradients.
pub const GRADIENT_STEP: f64 = 1e-5;
/// Relative step for the central-difference Hessian.
pub const HESSIAN_STEP: f64 = 1e-4;

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
/// Largest first trial move in any coordinate.
const MAX_STEP: f64 = 1.0;

#[inline]
fn step_size(x: f64, rel: f64) -> f64 {
    rel * x.abs().max(1.0)
}

fn eval<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> f64 {
    let v = f(x);
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Central-difference gradient and the matching diagonal second derivatives.
pub fn central_gradient<F: Fn(&[f64]) -> f64>(
    f: &F,
    x: &[f64],
    fx: f64,
    rel: f64,
) -> (Vec<f64>, Vec<f64>) {
    let mut g = vec![0.0; x.len()];
    let mut d2 = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        let h = step_size(x[j], rel);
        xp[j] = x[j] + h;
        let fp = eval(f, &xp);
        xp[j] = x[j] - h;
        let fm = eval(f, &xp);
        xp[j] = x[j];
        g[j] = (fp - fm) / (2.0 * h);
        d2[j] = (fp - 2.0 * fx + fm) / (h * h);
    }
    (g, d2)
}

/// Central-difference Hessian with steps `rel * max(|x_j|, 1)`.
pub fn central_hessian<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], rel: f64) -> DMatrix<f64> {
    let k = x.len();
    let fx = eval(f, x);
    let h: Vec<f64> = x.iter().map(|&v| step_size(v, rel)).collect();
    let mut hess = DMatrix::zeros(k, k);
    let mut xp = x.to_vec();
    for j in 0..k {
        xp[j] = x[j] + h[j];
        let fp = eval(f, &xp);
        xp[j] = x[j] - h[j];
        let fm = eval(f, &xp);
        xp[j] = x[j];
        hess[(j, j)] = (fp - 2.0 * fx + fm) / (h[j] * h[j]);
        for l in 0..j {
            let mut corner = |sj: f64, sl: f64| {
                xp[j] = x[j] + sj * h[j];
                xp[l] = x[l] + sl * h[l];
                let v = eval(f, &xp);
                xp[j] = x[j];
                xp[l] = x[l];
                v
            };
            let v = (corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0))
                / (4.0 * h[j] * h[l]);
            hess[(j, l)] = v;
            hess[(l, j)] = v;
        }
    }
    hess
}

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when the (caller-scaled) gradient ∞-norm falls to this.
    pub grad_tol: f64,
    /// Stop when `|Δf| <= rel_tol * max(|f|, 1)` between iterations.
    pub rel_tol: f64,
    pub grad_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-5,
            rel_tol: 1e-9,
            grad_step: GRADIENT_STEP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Gradient,
    RelativeChange,
    MaxIterations,
    LineSearchFailed,
}

impl Termination {
    pub fn converged(self) -> bool {
        matches!(self, Termination::Gradient | Termination::RelativeChange)
    }
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
    /// Objective at the start and after every accepted step.
    pub trace: Vec<f64>,
    pub termination: Termination,
}

fn initial_inverse(d2: &[f64]) -> DMatrix<f64> {
    let scale = d2.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    DMatrix::from_diagonal(&DVector::from_iterator(
        d2.len(),
        d2.iter().map(|v| 1.0 / v.abs().max(1e-8 * scale)),
    ))
}

/// Maximize `f` from `x0`. `grad_norm(x, g)` maps the raw gradient to the
/// norm tested against `grad_tol`, so callers can converge on a different
/// parameter scale than the one optimized over.
pub fn maximize<F, N>(f: F, x0: Vec<f64>, opts: &BfgsOptions, grad_norm: N) -> BfgsResult
where
    F: Fn(&[f64]) -> f64,
    N: Fn(&[f64], &[f64]) -> f64,
{
    let k = x0.len();
    let mut x = DVector::from_vec(x0);
    let mut fx = eval(&f, x.as_slice());
    let (g0, d2) = central_gradient(&f, x.as_slice(), fx, opts.grad_step);
    let mut g = DVector::from_vec(g0);
    let mut h0 = initial_inverse(&d2);
    let mut hinv = h0.clone();
    let mut trace = vec![fx];
    let mut gn = grad_norm(x.as_slice(), g.as_slice());
    let finish = |x: DVector<f64>, fx, g: DVector<f64>, gn, it, trace, termination| BfgsResult {
        x: x.as_slice().to_vec(),
        f: fx,
        grad: g.as_slice().to_vec(),
        grad_norm: gn,
        iterations: it,
        trace,
        termination,
    };
    if gn <= opts.grad_tol {
        return finish(x, fx, g, gn, 0, trace, Termination::Gradient);
    }
    if k == 0 {
        return finish(x, fx, g, 0.0, 0, trace, Termination::Gradient);
    }

    let mut fresh = true;
    for it in 1..=opts.max_iter {
        let mut p = &hinv * &g;
        let mut slope = g.dot(&p);
        if !(slope > 0.0) {
            hinv = h0.clone();
            fresh = true;
            p = &hinv * &g;
            slope = g.dot(&p);
        }
        let longest = p.amax();
        let mut alpha = if longest > MAX_STEP {
            MAX_STEP / longest
        } else {
            1.0
        };

        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = &x + &p * alpha;
            let ft = eval(&f, trial.as_slice());
            if ft.is_finite() && ft > fx && ft >= fx + ARMIJO_C1 * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if fresh {
                return finish(x, fx, g, gn, it - 1, trace, Termination::LineSearchFailed);
            }
            hinv = h0.clone();
            fresh = true;
            continue;
        };

        let (g_new, d2_new) = central_gradient(&f, x_new.as_slice(), f_new, opts.grad_step);
        let g_new = DVector::from_vec(g_new);
        let s = &x_new - &x;
        // curvature of -f along s
        let y = &g - &g_new;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            hinv += (&s * s.transpose()) * (rho * rho * yhy + rho)
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
            fresh = false;
        }
        h0 = initial_inverse(&d2_new);

        let change = (f_new - fx).abs();
        let scale = fx.abs().max(1.0);
        x = x_new;
        fx = f_new;
        g = g_new;
        trace.push(fx);
        gn = grad_norm(x.as_slice(), g.as_slice());
        if gn <= opts.grad_tol {
            return finish(x, fx, g, gn, it, trace, Termination::Gradient);
        }
        if change <= opts.rel_tol * scale {
            return finish(x, fx, g, gn, it, trace, Termination::RelativeChange);
        }
    }
    let it = opts.max_iter;
    finish(x, fx, g, gn, it, trace, Termination::MaxIterations)
}

pub fn inf_norm(g: &[f64]) -> f64 {
    g.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}
