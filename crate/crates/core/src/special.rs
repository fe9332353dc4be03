//! Gamma, erfc, Dawson's integral and the parabolic cylinder function `D_α`
//! for negative order.

use std::f64::consts::PI;

use crate::error::{domain, Error, Result};
use crate::numerics::{integrate, integrate_tail, Tolerance};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

fn lanczos_sum(z: f64) -> f64 {
    // z is the shifted argument (Γ(z + 1))
    let mut s = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        s += c / (z + i as f64);
    }
    s
}

/// Euler Gamma for positive arguments.
pub fn gamma(z: f64) -> Result<f64> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(domain(format!("gamma requires z > 0, got {z}")));
    }
    if z < 0.5 {
        // reflection keeps the Lanczos series in its accurate range
        return Ok(PI / ((PI * z).sin() * gamma(1.0 - z)?));
    }
    if z == z.floor() && z <= 171.0 {
        let mut f = 1.0;
        let mut k = 2.0;
        while k < z {
            f *= k;
            k += 1.0;
        }
        return Ok(f);
    }
    Ok(ln_gamma(z)?.exp())
}

/// Natural log of Γ(z) for z > 0.
pub fn ln_gamma(z: f64) -> Result<f64> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(domain(format!("ln_gamma requires z > 0, got {z}")));
    }
    if z < 0.5 {
        return Ok((PI / (PI * z).sin()).ln() - ln_gamma(1.0 - z)?);
    }
    let x = z - 1.0;
    let t = x + LANCZOS_G + 0.5;
    Ok(0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + lanczos_sum(x).ln())
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Dawson's integral `F(x) = e^{-x²} ∫_0^x e^{t²} dt`.
pub fn dawson(x: f64) -> f64 {
    let ax = x.abs();
    if ax == 0.0 {
        return x;
    }
    let v = if ax <= 10.0 {
        // all terms positive, no cancellation
        let x2 = ax * ax;
        let mut term = ax;
        let mut sum = ax;
        let mut n = 0.0;
        loop {
            n += 1.0;
            term *= x2 / n;
            let add = term / (2.0 * n + 1.0);
            sum += add;
            if add < 1e-17 * sum {
                break;
            }
        }
        sum * (-x2).exp()
    } else {
        let inv = 1.0 / (2.0 * ax * ax);
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 0.0;
        loop {
            k += 1.0;
            let next = term * (2.0 * k - 1.0) * inv;
            if next >= term || next < 1e-17 {
                break;
            }
            term = next;
            sum += term;
        }
        sum / (2.0 * ax)
    };
    v.copysign(x)
}

/// Order of a parabolic cylinder function; strictly negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylinderOrder {
    alpha: f64,
}

impl CylinderOrder {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha < 0.0) || !alpha.is_finite() {
            return Err(domain(format!("cylinder order must be negative, got {alpha}")));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// The order `α - k`, still negative.
    pub fn lowered(&self, k: u32) -> Self {
        Self {
            alpha: self.alpha - k as f64,
        }
    }
}

const PCF_TOL: f64 = 1e-13;

/// `ln ∫_0^∞ t^{ν-1} e^{-t²/2 - x t} dt` for ν > 0.
fn ln_moment(nu: f64, x: f64) -> Result<f64> {
    if nu > 1.0 {
        let t_star = 0.5 * (-x + (x * x + 4.0 * (nu - 1.0)).sqrt());
        let log_f = |t: f64| (nu - 1.0) * t.ln() - 0.5 * t * t - x * t;
        let peak = log_f(t_star);
        let f = |t: f64| if t <= 0.0 { 0.0 } else { (log_f(t) - peak).exp() };
        let width = 1.0 / ((nu - 1.0) / (t_star * t_star) + 1.0).sqrt();
        let tol = Tolerance::new(1e-16 * width, PCF_TOL);
        let head = integrate(f, 0.0, t_star, tol)?;
        let tail = integrate_tail(f, t_star, f64::INFINITY, width, tol)?;
        Ok(peak + (head.value + tail.value).ln())
    } else {
        // t = s^{1/ν} removes the endpoint singularity of t^{ν-1}
        let p = 1.0 / nu;
        let log_g = |t: f64| -0.5 * t * t - x * t;
        let t0 = (-x).max(0.0);
        let peak = log_g(t0);
        let g = |s: f64| {
            if s <= 0.0 {
                (log_g(0.0) - peak).exp()
            } else {
                (log_g(s.powf(p)) - peak).exp()
            }
        };
        let w_t = if t0 > 0.0 { 1.0 } else { 1.0 / (1.0 + x.abs()) };
        let s0 = t0.powf(nu);
        let width = (t0 + w_t).powf(nu) - s0;
        let tol = Tolerance::new(1e-16 * width, PCF_TOL);
        let head = if s0 > 0.0 {
            integrate(g, 0.0, s0, tol)?.value
        } else {
            0.0
        };
        let tail = integrate_tail(g, s0, f64::INFINITY, width, tol)?.value;
        Ok(peak + ((head + tail) / nu).ln())
    }
}

/// `ln(e^{x²/4} D_α(x))`.
pub fn ln_pcf_scaled(order: CylinderOrder, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(domain(format!("pcf argument must be finite, got {x}")));
    }
    let nu = -order.alpha;
    let lm = ln_moment(nu, x)?;
    let v = lm - ln_gamma(nu)?;
    if !v.is_finite() {
        return Err(Error::Numerical {
            what: format!("D_{}({x})", order.alpha),
            achieved: f64::INFINITY,
            requested: PCF_TOL,
        });
    }
    Ok(v)
}

/// `e^{x²/4} D_α(x)`, the form in which the cylinder function enters the
/// mean-reverting fundamental solutions.
pub fn pcf_scaled(order: CylinderOrder, x: f64) -> Result<f64> {
    Ok(ln_pcf_scaled(order, x)?.exp())
}

/// Parabolic cylinder function `D_α(x)` for α < 0.
pub fn pcf_d(order: CylinderOrder, x: f64) -> Result<f64> {
    Ok((ln_pcf_scaled(order, x)? - 0.25 * x * x).exp())
}
