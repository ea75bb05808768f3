use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::dense_solve;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NewtonResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, a| m.max(a.abs()))
}

/// Damped Newton iteration. The step is halved while it increases the
/// residual's max-norm (or leaves the residual's domain).
pub fn newton_solve<R, J>(
    mut residual: R,
    mut jacobian: J,
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<NewtonResult>
where
    R: FnMut(&[f64]) -> Result<Vec<f64>>,
    J: FnMut(&[f64]) -> Result<DMatrix<f64>>,
{
    let mut x = x0.to_vec();
    let mut r = residual(&x)?;
    let mut norm = inf_norm(&r);
    for it in 0..max_iter {
        if norm < tol {
            return Ok(NewtonResult { x, iterations: it, residual: norm });
        }
        let jac = jacobian(&x)?;
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let dx = dense_solve(&jac, &neg, "Newton Jacobian")?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let xt: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + lambda * d).collect();
            if let Ok(rt) = residual(&xt) {
                let nt = inf_norm(&rt);
                if nt.is_finite() && (nt < norm || lambda < 1e-8) {
                    x = xt;
                    r = rt;
                    norm = nt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NoConvergence { op: "newton_solve", iterations: it, residual: norm, best: x });
        }
    }
    if norm < tol {
        return Ok(NewtonResult { x, iterations: max_iter, residual: norm });
    }
    Err(Error::NoConvergence { op: "newton_solve", iterations: max_iter, residual: norm, best: x })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecantResult {
    pub root: f64,
    pub value: f64,
    /// Every (c, f(c)) evaluated, in order.
    pub history: Vec<(f64, f64)>,
}

/// Secant iteration on [lo, hi]. With a sign change the iterate is kept
/// inside the shrinking bracket (Illinois safeguard, bisection fallback);
/// without one, plain secant steps follow the trend and must converge.
pub fn secant_root<F>(mut f: F, lo: f64, hi: f64, tol: f64, max_iter: usize) -> Result<SecantResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut history = Vec::new();
    let mut eval = |c: f64, h: &mut Vec<(f64, f64)>| -> Result<f64> {
        let v = f(c)?;
        h.push((c, v));
        Ok(v)
    };
    let (mut a, mut b) = (lo, hi);
    let mut fa = eval(a, &mut history)?;
    let mut fb = eval(b, &mut history)?;
    let done = |c: f64, fc: f64, h: Vec<(f64, f64)>| Ok(SecantResult { root: c, value: fc, history: h });
    if fa == 0.0 {
        return done(a, fa, history);
    }
    if fb == 0.0 {
        return done(b, fb, history);
    }
    let bracketed = (fa > 0.0) != (fb > 0.0);
    if bracketed {
        let mut side = 0i32;
        for _ in 0..max_iter {
            let mut c = b - fb * (b - a) / (fb - fa);
            if !(c > a.min(b) && c < a.max(b)) {
                c = 0.5 * (a + b);
            }
            let fc = eval(c, &mut history)?;
            if fc.abs() < tol || (b - a).abs() < tol {
                return done(c, fc, history);
            }
            if (fc > 0.0) == (fb > 0.0) {
                b = c;
                fb = fc;
                if side == -1 {
                    fa *= 0.5;
                }
                side = -1;
            } else {
                a = c;
                fa = fc;
                if side == 1 {
                    fb *= 0.5;
                }
                side = 1;
            }
            if (b - a).abs() < tol {
                let (c, fc) = if fa.abs() < fb.abs() { (a, fa) } else { (b, fb) };
                return done(c, fc, history);
            }
        }
    } else {
        for _ in 0..max_iter {
            if fb == fa {
                break;
            }
            let c = b - fb * (b - a) / (fb - fa);
            if !c.is_finite() {
                break;
            }
            let fc = eval(c, &mut history)?;
            if fc.abs() < tol || (c - b).abs() < tol {
                return done(c, fc, history);
            }
            a = b;
            fa = fb;
            b = c;
            fb = fc;
        }
    }
    Err(Error::Bracket { lo, hi, f_lo: history[0].1, f_hi: history[1].1 })
}

/// Newton iteration safeguarded by bisection on a sign-change bracket.
/// `f` returns (value, derivative).
pub fn bracketed_newton<F>(mut f: F, a: f64, b: f64, xtol: f64, ftol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    let (fa, _) = f(a)?;
    let (fb, _) = f(b)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if (fa > 0.0) == (fb > 0.0) {
        return Err(Error::Bracket { lo: a, hi: b, f_lo: fa, f_hi: fb });
    }
    // keep f(lo) < 0 < f(hi)
    let (mut lo, mut hi) = if fa < 0.0 { (a, b) } else { (b, a) };
    let mut x = 0.5 * (a + b);
    let mut last = f64::INFINITY;
    for _ in 0..200 {
        let (fx, dfx) = f(x)?;
        if fx.abs() < ftol {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / dfx;
        let inside = newton.is_finite() && (newton - lo) * (newton - hi) < 0.0;
        let next = if inside && (newton - x).abs() < 0.5 * last { newton } else { 0.5 * (lo + hi) };
        last = (next - x).abs();
        x = next;
        if (hi - lo).abs() < xtol || last < xtol * 1e-3 {
            let (fx, _) = f(x)?;
            if fx.abs() < ftol || (hi - lo).abs() < xtol {
                return Ok(x);
            }
        }
    }
    let (fx, _) = f(x)?;
    Err(Error::NoConvergence { op: "bracketed_newton", iterations: 200, residual: fx.abs(), best: vec![x] })
}
