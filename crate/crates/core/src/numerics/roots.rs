//! Bracketed root finding: Brent's method plus geometric bracket expansion.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct BrentOptions {
    /// Absolute tolerance on the argument.
    pub xtol: f64,
    pub max_iter: usize,
}

impl Default for BrentOptions {
    fn default() -> Self {
        Self {
            xtol: 1e-12,
            max_iter: 200,
        }
    }
}

/// Brent's zeroin on `[a, b]`. Requires `f(a)` and `f(b)` of opposite sign
/// (or one of them zero).
pub fn brent<F>(mut f: F, a: f64, b: f64, opts: BrentOptions) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut a = a;
    let mut b = b;
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Solver(format!(
            "root not bracketed: f({a:.9e}) = {fa:.3e}, f({b:.9e}) = {fb:.3e}"
        )));
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..opts.max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * opts.xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b)?;
    }
    Err(Error::Solver(format!(
        "Brent did not converge in {} iterations (last iterate {b:.12e})",
        opts.max_iter
    )))
}

/// Walk from `start` in steps `step, 2 step, 4 step, ...` (sign of `step`
/// gives the direction) until `f` changes sign relative to `f(start)`, never
/// passing `limit`. Returns the bracketing pair ordered as `(lo, hi)`.
pub fn expand_bracket<F>(
    mut f: F,
    start: f64,
    step: f64,
    limit: f64,
    max_steps: usize,
) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let f0 = f(start)?;
    if f0 == 0.0 {
        return Ok((start, start));
    }
    let mut prev = start;
    let mut width = step;
    for _ in 0..max_steps {
        let mut next = prev + width;
        let mut at_limit = false;
        if (step > 0.0 && next >= limit) || (step < 0.0 && next <= limit) {
            // stay strictly inside an open domain
            next = prev + 0.5 * (limit - prev);
            at_limit = (limit - next).abs() <= 1e-14 * (1.0 + limit.abs());
        }
        let fn_ = f(next)?;
        if fn_ == 0.0 || fn_.signum() != f0.signum() {
            return Ok(if prev < next { (prev, next) } else { (next, prev) });
        }
        if at_limit {
            break;
        }
        prev = next;
        width *= 2.0;
    }
    Err(Error::Solver(format!(
        "no sign change found expanding from {start} towards {limit} (f(start) = {f0:.3e})"
    )))
}
