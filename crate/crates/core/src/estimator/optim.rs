//! Unconstrained minimisers: limited-memory BFGS with a strong-Wolfe line
//! search, and Adam with step rejection.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub struct StopRule {
    pub max_iterations: usize,
    /// Relative change of the objective between accepted steps.
    pub rel_tol: f64,
    /// Infinity norm of the gradient.
    pub grad_tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    RelativeChange,
    SmallGradient,
    MaxIterations,
    LineSearchFailed,
    NonFiniteStart,
}

impl Status {
    pub fn converged(self) -> bool {
        matches!(self, Status::RelativeChange | Status::SmallGradient)
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_inf: f64,
    pub iterations: usize,
    pub status: Status,
    /// Objective after every accepted step (starting value first).
    pub trace: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn rel_change(old: f64, new: f64) -> f64 {
    (old - new).abs() / old.abs().max(new.abs()).max(1.0)
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;

struct Trial {
    alpha: f64,
    value: f64,
    grad: Vec<f64>,
    slope: f64,
}

/// Strong-Wolfe line search along `dir`. Returns the accepted trial point,
/// or `None` if no point with sufficient decrease was found.
fn line_search<F>(f: &mut F, x: &[f64], f0: f64, slope0: f64, dir: &[f64], alpha0: f64) -> Option<(Vec<f64>, Trial)>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x.len();
    let mut xt = vec![0.0; n];
    let mut eval = |alpha: f64, xt: &mut Vec<f64>| -> Trial {
        for i in 0..n {
            xt[i] = x[i] + alpha * dir[i];
        }
        let mut g = vec![0.0; n];
        let mut v = f(xt, &mut g);
        if !v.is_finite() || g.iter().any(|v| !v.is_finite()) {
            v = f64::INFINITY;
        }
        let slope = if v.is_finite() { dot(&g, dir) } else { f64::NAN };
        Trial { alpha, value: v, grad: g, slope }
    };
    let armijo = |t: &Trial| t.value <= f0 + C1 * t.alpha * slope0;
    let curvature = |t: &Trial| t.slope.abs() <= -C2 * slope0;

    let mut prev = Trial { alpha: 0.0, value: f0, grad: Vec::new(), slope: slope0 };
    let mut alpha = alpha0;
    let mut best: Option<(Vec<f64>, Trial)> = None;
    let (mut lo, mut hi);
    let mut i = 0;
    loop {
        let t = eval(alpha, &mut xt);
        if !armijo(&t) || (i > 0 && t.value >= prev.value) {
            lo = prev;
            hi = t;
            break;
        }
        if curvature(&t) {
            return Some((xt, t));
        }
        if t.slope >= 0.0 {
            best = Some((xt.clone(), Trial { grad: t.grad.clone(), ..t }));
            hi = prev;
            lo = t;
            break;
        }
        best = Some((xt.clone(), Trial { grad: t.grad.clone(), ..t }));
        prev = t;
        alpha *= 2.0;
        i += 1;
        if i >= 12 {
            return best;
        }
    }
    // Zoom: `lo` satisfies sufficient decrease (or is the start), `hi` brackets.
    for _ in 0..40 {
        let (a, b) = (lo.alpha, hi.alpha);
        let mut trial_alpha = 0.5 * (a + b);
        if hi.value.is_finite() && lo.slope.is_finite() {
            // Quadratic through (lo.value, lo.slope) and hi.value.
            let da = b - a;
            let denom = 2.0 * (hi.value - lo.value - lo.slope * da);
            if denom > 0.0 {
                let cand = a - lo.slope * da * da / denom;
                let (l, u) = if a < b { (a, b) } else { (b, a) };
                let margin = 0.1 * (u - l);
                if cand > l + margin && cand < u - margin {
                    trial_alpha = cand;
                }
            }
        }
        let t = eval(trial_alpha, &mut xt);
        if !armijo(&t) || t.value >= lo.value {
            hi = t;
        } else {
            if curvature(&t) {
                return Some((xt, t));
            }
            if t.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            best = Some((xt.clone(), Trial { grad: t.grad.clone(), ..t }));
            lo = t;
        }
        if (hi.alpha - lo.alpha).abs() < 1e-16 * lo.alpha.abs().max(1e-300) {
            break;
        }
    }
    // Fall back to the best sufficient-decrease point seen.
    match best {
        Some(b) => Some(b),
        None if lo.alpha > 0.0 && lo.value < f0 => {
            for i in 0..n {
                xt[i] = x[i] + lo.alpha * dir[i];
            }
            Some((xt, lo))
        }
        None => None,
    }
}

/// Minimise `f` (which writes its gradient into the second argument).
pub fn lbfgs<F>(mut f: F, x0: Vec<f64>, rule: StopRule, memory: usize) -> Outcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut trace = vec![fx];
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Outcome { x, value: fx, grad_inf: f64::NAN, iterations: 0, status: Status::NonFiniteStart, trace };
    }
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(memory);
    let mut status = Status::MaxIterations;
    let mut iterations = 0;
    if inf_norm(&g) < rule.grad_tol {
        status = Status::SmallGradient;
    }
    while status == Status::MaxIterations && iterations < rule.max_iterations {
        // Two-loop recursion for d = −H g.
        let mut dir: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &dir);
            for i in 0..n {
                dir[i] -= a * y[i];
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.back() {
            let scale = dot(s, y) / dot(y, y);
            dir.iter_mut().for_each(|v| *v *= scale);
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &dir);
            for i in 0..n {
                dir[i] += s[i] * (a - b);
            }
        }
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            hist.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&g, &dir);
        }
        let alpha0 = if hist.is_empty() { (1.0 / inf_norm(&g)).min(1.0) } else { 1.0 };
        let found = line_search(&mut f, &x, fx, slope, &dir, alpha0);
        let Some((xn, t)) = found else {
            if hist.is_empty() {
                status = Status::LineSearchFailed;
                break;
            }
            hist.clear();
            continue;
        };
        iterations += 1;
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = t.grad.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if hist.len() == memory {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        let change = rel_change(fx, t.value);
        x = xn;
        fx = t.value;
        g = t.grad;
        trace.push(fx);
        if inf_norm(&g) < rule.grad_tol {
            status = Status::SmallGradient;
        } else if change < rule.rel_tol {
            status = Status::RelativeChange;
        }
    }
    Outcome { grad_inf: inf_norm(&g), x, value: fx, iterations, status, trace }
}

/// Adam on `f`; steps that increase the objective are rejected and the
/// learning rate is halved, so accepted values never increase.
pub fn adam<F>(mut f: F, x0: Vec<f64>, rule: StopRule, learning_rate: f64) -> Outcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;
    // Consecutive small accepted changes required before stopping.
    const PATIENCE: usize = 10;
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut trace = vec![fx];
    if !fx.is_finite() {
        return Outcome { x, value: fx, grad_inf: f64::NAN, iterations: 0, status: Status::NonFiniteStart, trace };
    }
    let (mut m1, mut m2) = (vec![0.0; n], vec![0.0; n]);
    let mut lr = learning_rate;
    let mut status = Status::MaxIterations;
    let mut small = 0;
    let mut t = 0;
    let mut gt = vec![0.0; n];
    let mut xt = vec![0.0; n];
    for it in 0..rule.max_iterations {
        if inf_norm(&g) < rule.grad_tol {
            status = Status::SmallGradient;
            break;
        }
        t += 1;
        let (c1, c2) = (1.0 - B1.powi(t), 1.0 - B2.powi(t));
        for i in 0..n {
            m1[i] = B1 * m1[i] + (1.0 - B1) * g[i];
            m2[i] = B2 * m2[i] + (1.0 - B2) * g[i] * g[i];
            xt[i] = x[i] - lr * (m1[i] / c1) / ((m2[i] / c2).sqrt() + EPS);
        }
        let ft = f(&xt, &mut gt);
        if ft.is_finite() && ft <= fx {
            let change = rel_change(fx, ft);
            std::mem::swap(&mut x, &mut xt);
            std::mem::swap(&mut g, &mut gt);
            fx = ft;
            trace.push(fx);
            small = if change < rule.rel_tol { small + 1 } else { 0 };
            if small >= PATIENCE {
                status = Status::RelativeChange;
                let _ = it;
                break;
            }
        } else {
            lr *= 0.5;
            if lr < 1e-14 {
                status = Status::LineSearchFailed;
                break;
            }
        }
    }
    let iterations = trace.len() - 1;
    Outcome { grad_inf: inf_norm(&g), x, value: fx, iterations, status, trace }
}
