//! BFGS ascent with a strong Wolfe line search.

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iters: usize,
    /// Stop once an accepted step changes the objective by less than this.
    pub tol: f64,
    /// Stop once `‖g‖_∞` falls to this level; `0` disables the check after the start.
    pub grad_tol: f64,
    /// Sufficient-increase constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Rescale the initial inverse Hessian after the first step (Nocedal–Wright 6.20).
    pub scale_initial: bool,
    /// Objective evaluations allowed per line search.
    pub max_line_evals: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: 1e-10,
            grad_tol: 0.0,
            c1: 1e-4,
            c2: 0.9,
            scale_initial: true,
            max_line_evals: 40,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: Vector,
    /// Maximized objective value.
    pub value: f64,
    pub grad: Vector,
    pub iterations: usize,
    pub evaluations: usize,
    /// Stopped on the tolerance (or a zero gradient) rather than the cap or a failure.
    pub converged: bool,
    pub line_search_failed: bool,
}

impl BfgsResult {
    pub fn grad_inf_norm(&self) -> f64 {
        self.grad.amax()
    }
}

struct Point {
    alpha: f64,
    f: f64,
    d: f64,
    x: Vector,
    g: Vector,
}

/// Minimization view of the objective: returns `(−value, −gradient)`, with
/// non-finite or failed evaluations mapped to `+∞`.
fn eval_min<F>(f: &mut F, x: &Vector, evals: &mut usize) -> (f64, Option<Vector>)
where
    F: FnMut(&Vector) -> Result<(f64, Vector)>,
{
    *evals += 1;
    match f(x) {
        Ok((v, g)) if v.is_finite() && g.iter().all(|x| x.is_finite()) => (-v, Some(-g)),
        _ => (f64::INFINITY, None),
    }
}

/// Safeguarded cubic interpolation minimizer on `[a, b]` (either order).
fn cubic_min(a: &Point, b: &Point) -> f64 {
    let (lo, hi) = if a.alpha < b.alpha { (a.alpha, b.alpha) } else { (b.alpha, a.alpha) };
    let mid = 0.5 * (lo + hi);
    if !b.f.is_finite() || !b.d.is_finite() {
        return mid;
    }
    let d1 = a.d + b.d - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.d * b.d;
    if disc < 0.0 {
        return mid;
    }
    let d2 = (b.alpha - a.alpha).signum() * disc.sqrt();
    let t = b.alpha - (b.alpha - a.alpha) * (b.d + d2 - d1) / (b.d - a.d + 2.0 * d2);
    let margin = 0.1 * (hi - lo);
    if t.is_finite() && t > lo + margin && t < hi - margin {
        t
    } else {
        mid
    }
}

#[allow(clippy::too_many_arguments)]
fn line_search<F>(
    f: &mut F,
    x: &Vector,
    f0: f64,
    g0: &Vector,
    dir: &Vector,
    alpha0: f64,
    opts: &BfgsOptions,
    evals: &mut usize,
) -> Option<Point>
where
    F: FnMut(&Vector) -> Result<(f64, Vector)>,
{
    let d0 = g0.dot(dir);
    if d0 >= 0.0 {
        return None;
    }
    let probe = |f: &mut F, alpha: f64, evals: &mut usize| {
        let xa = x + dir * alpha;
        let (fa, ga) = eval_min(f, &xa, evals);
        let da = ga.as_ref().map_or(f64::NAN, |g| g.dot(dir));
        Point { alpha, f: fa, d: da, x: xa, g: ga.unwrap_or_else(|| Vector::zeros(x.len())) }
    };
    let start = Point { alpha: 0.0, f: f0, d: d0, x: x.clone(), g: g0.clone() };
    let mut prev = start;
    let mut alpha = alpha0;
    let mut used = 0;
    let mut first = true;
    while used < opts.max_line_evals {
        used += 1;
        let cur = probe(f, alpha, evals);
        if !cur.f.is_finite() || cur.f > f0 + opts.c1 * alpha * d0 || (!first && cur.f >= prev.f) {
            return zoom(f, prev, cur, f0, d0, opts, &mut used, evals, &probe);
        }
        if cur.d.abs() <= -opts.c2 * d0 {
            return Some(cur);
        }
        if cur.d >= 0.0 {
            return zoom(f, cur, prev, f0, d0, opts, &mut used, evals, &probe);
        }
        first = false;
        alpha *= 2.0;
        prev = cur;
    }
    None
}

#[allow(clippy::too_many_arguments)]
fn zoom<F, P>(
    f: &mut F,
    mut lo: Point,
    mut hi: Point,
    f0: f64,
    d0: f64,
    opts: &BfgsOptions,
    used: &mut usize,
    evals: &mut usize,
    probe: &P,
) -> Option<Point>
where
    F: FnMut(&Vector) -> Result<(f64, Vector)>,
    P: Fn(&mut F, f64, &mut usize) -> Point,
{
    while *used < opts.max_line_evals {
        *used += 1;
        let alpha = cubic_min(&lo, &hi);
        if (hi.alpha - lo.alpha).abs() < 1e-16 * lo.alpha.abs().max(1.0) {
            break;
        }
        let cur = probe(f, alpha, evals);
        if !cur.f.is_finite() || cur.f > f0 + opts.c1 * alpha * d0 || cur.f >= lo.f {
            hi = cur;
        } else {
            if cur.d.abs() <= -opts.c2 * d0 {
                return Some(cur);
            }
            if cur.d * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
    // Accept the best sufficient-increase point even without the curvature condition.
    (lo.alpha > 0.0).then_some(lo)
}

/// Maximizes `f`, which returns the objective value and its gradient.
pub fn maximize<F>(mut f: F, x0: &Vector, opts: &BfgsOptions) -> Result<BfgsResult>
where
    F: FnMut(&Vector) -> Result<(f64, Vector)>,
{
    let (v0, g0) = f(x0)?;
    if !v0.is_finite() || g0.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("objective at the starting point"));
    }
    let n = x0.len();
    let mut evals = 1;
    let mut x = x0.clone();
    let mut fx = -v0;
    let mut g = -g0;
    let mut h = Mat::identity(n, n);
    let mut iterations = 0;
    let mut converged = g.amax() == 0.0;
    let mut failed = false;
    let mut scaled = !opts.scale_initial;

    while !converged && iterations < opts.max_iters {
        let mut dir = -(&h * &g);
        if dir.dot(&g) >= 0.0 {
            // Lost positive definiteness; fall back to steepest descent.
            h = Mat::identity(n, n);
            dir = -g.clone();
        }
        let alpha0 = if iterations == 0 && !opts.scale_initial {
            1.0
        } else if iterations == 0 {
            (1.0 / g.norm()).min(1.0)
        } else {
            1.0
        };
        let Some(step) = line_search(&mut f, &x, fx, &g, &dir, alpha0, opts, &mut evals) else {
            failed = true;
            break;
        };
        iterations += 1;
        let s = &step.x - &x;
        let y = &step.g - &g;
        let df = fx - step.f;
        x = step.x;
        fx = step.f;
        g = step.g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if !scaled {
                h = Mat::identity(n, n) * (sy / y.dot(&y));
                scaled = true;
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ, expanded.
            h += (&s * s.transpose()) * (rho * rho * yhy + rho) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        if df.abs() < opts.tol || g.amax() <= opts.grad_tol {
            converged = true;
        }
    }
    Ok(BfgsResult {
        x,
        value: -fx,
        grad: -g,
        iterations,
        evaluations: evals,
        converged,
        line_search_failed: failed,
    })
}
