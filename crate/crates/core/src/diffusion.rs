//! One-dimensional diffusions `dX = μ(X)dt + σ(X)dW` discounted at rate `r`,
//! together with the transformed diffusion X̂ (drift `μ + σσ′`, killing
//! `r − μ′`) whose fundamental solutions govern the derivative of the value
//! function.
//!
//! Boundaries of the state interval are assumed natural. That is documented,
//! not checked.

use std::sync::Arc;

use crate::error::{domain, Error, Result};
use crate::numerics::{integrate, integrate_tail, Integral, Tolerance};

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Which generator a quantity belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tag {
    /// `L_X − r`
    Base,
    /// `L_X̂ − (r − μ′)`
    Hat,
}

#[derive(Clone)]
struct ScaleTable {
    lo: f64,
    h: f64,
    log_s: Vec<f64>,
    slope: Vec<f64>,
}

impl ScaleTable {
    fn hi(&self) -> f64 {
        self.lo + self.h * (self.log_s.len() - 1) as f64
    }

    // cubic Hermite using the exact derivative of ln S′
    fn eval(&self, x: f64) -> f64 {
        let n = self.log_s.len() - 1;
        let u = ((x - self.lo) / self.h).clamp(0.0, n as f64);
        let i = (u.floor() as usize).min(n - 1);
        let t = u - i as f64;
        let (y0, y1) = (self.log_s[i], self.log_s[i + 1]);
        let (m0, m1) = (self.slope[i] * self.h, self.slope[i + 1] * self.h);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1
    }
}

/// Drift, volatility and discount rate of the uncontrolled state.
#[derive(Clone)]
pub struct DiffusionModel {
    mu: RealFn,
    mu_prime: RealFn,
    sigma: RealFn,
    sigma_prime: RealFn,
    lower: f64,
    upper: f64,
    r: f64,
    anchor: f64,
    // optional closed forms of ln S′ and ln Ŝ′ normalised at the anchor
    log_scale: Option<(RealFn, RealFn)>,
    tables: Option<Arc<(ScaleTable, ScaleTable)>>,
}

impl std::fmt::Debug for DiffusionModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiffusionModel")
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .field("r", &self.r)
            .field("anchor", &self.anchor)
            .finish_non_exhaustive()
    }
}

const SCALE_TOL: Tolerance = Tolerance::new(1e-12, 1e-12);

impl DiffusionModel {
    /// Validates `σ > 0` and `r − μ′ > 0` on 401 points of a window around
    /// the anchor (the whole interval when it is finite).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mu: RealFn,
        mu_prime: RealFn,
        sigma: RealFn,
        sigma_prime: RealFn,
        lower: f64,
        upper: f64,
        r: f64,
        anchor: f64,
    ) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(domain(format!("discount rate must be positive, got {r}")));
        }
        if !(lower < anchor && anchor < upper) {
            return Err(domain(format!(
                "anchor {anchor} must lie strictly inside ({lower}, {upper})"
            )));
        }
        let model = Self {
            mu,
            mu_prime,
            sigma,
            sigma_prime,
            lower,
            upper,
            r,
            anchor,
            log_scale: None,
            tables: None,
        };
        let (lo, hi) = model.sample_window();
        for i in 0..=400 {
            let x = lo + (hi - lo) * i as f64 / 400.0;
            if !(x > lower && x < upper) {
                continue;
            }
            let s = model.sigma(x);
            if !(s > 0.0) || !s.is_finite() {
                return Err(domain(format!("volatility must be positive, σ({x}) = {s}")));
            }
            let k = model.killing(Tag::Hat, x);
            if !(k > 0.0) {
                return Err(domain(format!("r − μ′ must be positive, got {k} at x = {x}")));
            }
        }
        Ok(model)
    }

    /// Supply closed forms of `ln S′` and `ln Ŝ′`, both zero at the anchor.
    pub fn with_log_scale(mut self, base: RealFn, hat: RealFn) -> Self {
        self.log_scale = Some((base, hat));
        self
    }

    /// Tabulate `ln S′` and `ln Ŝ′` on `n` uniform intervals of `[lo, hi]`
    /// (cumulative Gauss–Kronrod, Hermite interpolation). Points outside the
    /// table fall back to quadrature from its nearest end.
    pub fn with_tabulated_scale(mut self, lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo < hi) || n < 2 || lo <= self.lower || hi >= self.upper {
            return Err(domain(format!("bad scale table [{lo}, {hi}] with {n} intervals")));
        }
        self.tables = None;
        let build = |tag: Tag| -> Result<ScaleTable> {
            let h = (hi - lo) / n as f64;
            let start = self.log_scale_density(lo, tag)?;
            let mut log_s = Vec::with_capacity(n + 1);
            let mut slope = Vec::with_capacity(n + 1);
            log_s.push(start);
            slope.push(-self.scale_integrand(tag, lo));
            let mut acc = start;
            for i in 0..n {
                let a = lo + h * i as f64;
                let b = if i + 1 == n { hi } else { a + h };
                acc -= integrate(|z| self.scale_integrand(tag, z), a, b, SCALE_TOL)?.value;
                log_s.push(acc);
                slope.push(-self.scale_integrand(tag, b));
            }
            Ok(ScaleTable { lo, h, log_s, slope })
        };
        let base = build(Tag::Base)?;
        let hat = build(Tag::Hat)?;
        self.tables = Some(Arc::new((base, hat)));
        Ok(self)
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn mu(&self, x: f64) -> f64 {
        (self.mu)(x)
    }

    pub fn mu_prime(&self, x: f64) -> f64 {
        (self.mu_prime)(x)
    }

    pub fn sigma(&self, x: f64) -> f64 {
        (self.sigma)(x)
    }

    pub fn sigma_prime(&self, x: f64) -> f64 {
        (self.sigma_prime)(x)
    }

    /// Drift of X (base) or X̂ (hat).
    pub fn drift(&self, tag: Tag, x: f64) -> f64 {
        match tag {
            Tag::Base => self.mu(x),
            Tag::Hat => self.mu(x) + self.sigma(x) * self.sigma_prime(x),
        }
    }

    /// Killing rate: `r` (base) or `r − μ′` (hat).
    pub fn killing(&self, tag: Tag, x: f64) -> f64 {
        match tag {
            Tag::Base => self.r,
            Tag::Hat => self.r - self.mu_prime(x),
        }
    }

    /// Apply the generator minus killing to a jet `(f, f′, f″)` at `x`.
    pub fn generator(&self, tag: Tag, x: f64, f: Jet) -> f64 {
        let s = self.sigma(x);
        0.5 * s * s * f.d2 + self.drift(tag, x) * f.d1 - self.killing(tag, x) * f.v
    }

    /// Typical length over which the coefficients vary; used to size
    /// quadrature panels and sampling windows.
    pub fn length_scale(&self) -> f64 {
        let x = self.anchor;
        let rate = self.mu_prime(x).abs().max(self.r);
        self.sigma(x) / rate.sqrt()
    }

    /// Finite window `anchor ± 10 · length_scale`, clipped to the interval.
    pub fn sample_window(&self) -> (f64, f64) {
        let l = 10.0 * self.length_scale();
        let lo = (self.anchor - l).max(self.lower);
        let hi = (self.anchor + l).min(self.upper);
        (lo, hi)
    }

    fn check_interior(&self, x: f64) -> Result<()> {
        if x > self.lower && x < self.upper && x.is_finite() {
            Ok(())
        } else {
            Err(domain(format!(
                "x = {x} outside the state interval ({}, {})",
                self.lower, self.upper
            )))
        }
    }

    fn scale_integrand(&self, tag: Tag, z: f64) -> f64 {
        let s = self.sigma(z);
        2.0 * self.drift(tag, z) / (s * s)
    }

    /// `ln S′(x)` (base) or `ln Ŝ′(x)` (hat), zero at the anchor.
    pub fn log_scale_density(&self, x: f64, tag: Tag) -> Result<f64> {
        self.check_interior(x)?;
        if let Some((base, hat)) = &self.log_scale {
            return Ok(match tag {
                Tag::Base => base(x),
                Tag::Hat => hat(x),
            });
        }
        if let Some(tables) = &self.tables {
            let t = match tag {
                Tag::Base => &tables.0,
                Tag::Hat => &tables.1,
            };
            if x >= t.lo && x <= t.hi() {
                return Ok(t.eval(x));
            }
            let edge = if x < t.lo { t.lo } else { t.hi() };
            let rest = integrate(|z| self.scale_integrand(tag, z), edge, x, SCALE_TOL)?;
            return Ok(t.eval(edge) - rest.value);
        }
        let v = integrate(|z| self.scale_integrand(tag, z), self.anchor, x, SCALE_TOL)?;
        Ok(-v.value)
    }

    /// Density of the scale function, `exp(−∫_{x₀}^x 2 drift/σ²)`.
    pub fn scale_density(&self, x: f64, tag: Tag) -> Result<f64> {
        Ok(self.log_scale_density(x, tag)?.exp())
    }

    /// Density of the speed measure, `2 / (σ² S′)`.
    pub fn speed_density(&self, x: f64, tag: Tag) -> Result<f64> {
        let s = self.sigma(x);
        Ok(2.0 / (s * s) * (-self.log_scale_density(x, tag)?).exp())
    }
}

/// Value with first and second derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet {
    pub fn scale(self, c: f64) -> Self {
        Self {
            v: c * self.v,
            d1: c * self.d1,
            d2: c * self.d2,
        }
    }
}

/// Source of an increasing solution ψ and a decreasing solution φ.
pub trait Fundamental: Send + Sync {
    fn psi(&self, x: f64) -> Result<Jet>;
    fn phi(&self, x: f64) -> Result<Jet>;
    fn psi_value(&self, x: f64) -> Result<f64> {
        Ok(self.psi(x)?.v)
    }
    fn phi_value(&self, x: f64) -> Result<f64> {
        Ok(self.phi(x)?.v)
    }
    /// Interval on which the solutions can be evaluated.
    fn domain(&self) -> (f64, f64);
}

pub type JetFn = Arc<dyn Fn(f64) -> Result<Jet> + Send + Sync>;

pub type ValueFn = Arc<dyn Fn(f64) -> Result<f64> + Send + Sync>;

/// Fundamental solutions given in closed form. The optional value-only
/// functions avoid computing derivatives inside quadratures.
pub struct ClosedForm {
    pub psi: JetFn,
    pub phi: JetFn,
    pub psi_value: Option<ValueFn>,
    pub phi_value: Option<ValueFn>,
    pub domain: (f64, f64),
}

impl Fundamental for ClosedForm {
    fn psi(&self, x: f64) -> Result<Jet> {
        (self.psi)(x)
    }
    fn phi(&self, x: f64) -> Result<Jet> {
        (self.phi)(x)
    }
    fn psi_value(&self, x: f64) -> Result<f64> {
        match &self.psi_value {
            Some(f) => f(x),
            None => Ok((self.psi)(x)?.v),
        }
    }
    fn phi_value(&self, x: f64) -> Result<f64> {
        match &self.phi_value {
            Some(f) => f(x),
            None => Ok((self.phi)(x)?.v),
        }
    }
    fn domain(&self) -> (f64, f64) {
        self.domain
    }
}

/// A pair `(ψ, φ)` for one generator with its Wronskian
/// `w = (ψ′φ − φ′ψ) / S′`.
#[derive(Clone)]
pub struct FundamentalPair {
    source: Arc<dyn Fundamental>,
    tag: Tag,
    psi_scale: f64,
    phi_scale: f64,
    wronskian: f64,
}

impl std::fmt::Debug for FundamentalPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FundamentalPair")
            .field("tag", &self.tag)
            .field("wronskian", &self.wronskian)
            .finish_non_exhaustive()
    }
}

impl FundamentalPair {
    pub fn new(model: &DiffusionModel, tag: Tag, source: Arc<dyn Fundamental>) -> Result<Self> {
        let mut pair = Self {
            source,
            tag,
            psi_scale: 1.0,
            phi_scale: 1.0,
            wronskian: f64::NAN,
        };
        let (lo, hi) = pair.domain();
        let x0 = if model.anchor > lo && model.anchor < hi {
            model.anchor
        } else {
            0.5 * (lo + hi)
        };
        let w = pair.wronskian_at(model, x0)?;
        if !(w.abs() >= 1e-300) || !w.is_finite() || w <= 0.0 {
            return Err(Error::Numerical {
                what: "Wronskian of fundamental pair".into(),
                achieved: w,
                requested: 1e-300,
            });
        }
        pair.wronskian = w;
        Ok(pair)
    }

    pub fn tag(&self) -> Tag {
        self.tag
    }

    pub fn wronskian(&self) -> f64 {
        self.wronskian
    }

    pub fn domain(&self) -> (f64, f64) {
        self.source.domain()
    }

    /// Same solutions multiplied by positive constants.
    pub fn rescaled(&self, psi_scale: f64, phi_scale: f64) -> Self {
        Self {
            source: self.source.clone(),
            tag: self.tag,
            psi_scale: self.psi_scale * psi_scale,
            phi_scale: self.phi_scale * phi_scale,
            wronskian: self.wronskian * psi_scale * phi_scale,
        }
    }

    pub fn psi_jet(&self, x: f64) -> Result<Jet> {
        Ok(self.source.psi(x)?.scale(self.psi_scale))
    }

    pub fn phi_jet(&self, x: f64) -> Result<Jet> {
        Ok(self.source.phi(x)?.scale(self.phi_scale))
    }

    pub fn psi(&self, x: f64) -> Result<f64> {
        Ok(self.source.psi_value(x)? * self.psi_scale)
    }

    pub fn phi(&self, x: f64) -> Result<f64> {
        Ok(self.source.phi_value(x)? * self.phi_scale)
    }

    /// `(ψ′φ − φ′ψ)/S′` evaluated at `x`; constant for an exact pair.
    pub fn wronskian_at(&self, model: &DiffusionModel, x: f64) -> Result<f64> {
        let p = self.psi_jet(x)?;
        let q = self.phi_jet(x)?;
        let s = model.scale_density(x, self.tag)?;
        Ok((p.d1 * q.v - q.d1 * p.v) / s)
    }
}

/// Green kernel `G(x, y) = w⁻¹ ψ(x∧y) φ(x∨y)`.
pub fn green(pair: &FundamentalPair, x: f64, y: f64) -> Result<f64> {
    let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
    Ok(pair.psi(lo)? * pair.phi(hi)? / pair.wronskian())
}

/// Resolvent `(R f)(x) = ∫ f(y) G(x, y) m′(y) dy` for the generator of `pair`.
///
/// Splits at `x`: `φ(x)/w ∫_{x̲}^x fψm′ + ψ(x)/w ∫_x^{x̄} fφm′`, with the
/// semi-infinite pieces expanded until the integrand is negligible.
pub fn resolvent<F>(
    model: &DiffusionModel,
    pair: &FundamentalPair,
    f: F,
    x: f64,
    tol: Tolerance,
) -> Result<Integral>
where
    F: Fn(f64) -> f64,
{
    let (v, _) = resolvent_parts(model, pair, f, x, tol)?;
    Ok(v)
}

/// Resolvent value and first derivative. The derivative comes from
/// differentiating the Green representation, `φ′(x)/w ∫fψm′ + ψ′(x)/w ∫fφm′`.
pub fn resolvent_jet<F>(
    model: &DiffusionModel,
    pair: &FundamentalPair,
    f: F,
    x: f64,
    tol: Tolerance,
) -> Result<(Integral, Integral)>
where
    F: Fn(f64) -> f64,
{
    resolvent_parts(model, pair, f, x, tol)
}

fn resolvent_parts<F>(
    model: &DiffusionModel,
    pair: &FundamentalPair,
    f: F,
    x: f64,
    tol: Tolerance,
) -> Result<(Integral, Integral)>
where
    F: Fn(f64) -> f64,
{
    model.check_interior(x)?;
    let tag = pair.tag();
    let (dlo, dhi) = pair.domain();
    if !(x > dlo && x < dhi) {
        return Err(domain(format!("x = {x} outside the fundamental pair's domain")));
    }
    let lo = model.lower.max(dlo);
    let hi = model.upper.min(dhi);
    let scale = 0.5 * model.length_scale();
    let left = |y: f64| -> f64 {
        if y <= lo {
            return 0.0;
        }
        let v = f(y);
        if v == 0.0 {
            return 0.0;
        }
        match (pair.psi(y), model.speed_density(y, tag)) {
            (Ok(p), Ok(m)) => v * p * m,
            _ => f64::NAN,
        }
    };
    let right = |y: f64| -> f64 {
        if y >= hi {
            return 0.0;
        }
        let v = f(y);
        if v == 0.0 {
            return 0.0;
        }
        match (pair.phi(y), model.speed_density(y, tag)) {
            (Ok(p), Ok(m)) => v * p * m,
            _ => f64::NAN,
        }
    };
    let w = pair.wronskian();
    // integrate_tail is oriented, so the left piece comes back negated
    let l = integrate_tail(left, x, lo, scale, tol)?;
    let r = integrate_tail(right, x, hi, scale, tol)?;
    let (il, el) = (-l.value, l.error);
    let (ir, er) = (r.value, r.error);
    let ph = pair.phi_jet(x)?;
    let ps = pair.psi_jet(x)?;
    let value = Integral {
        value: (il * ph.v + ir * ps.v) / w,
        error: (el * ph.v + er * ps.v) / w,
    };
    let deriv = Integral {
        value: (il * ph.d1 + ir * ps.d1) / w,
        error: (el * ph.d1.abs() + er * ps.d1.abs()) / w,
    };
    if !value.value.is_finite() || !deriv.value.is_finite() {
        return Err(Error::Numerical {
            what: format!("resolvent at x = {x}"),
            achieved: f64::INFINITY,
            requested: tol.abs,
        });
    }
    Ok((value, deriv))
}

/// Numerically integrated fundamental solutions on a uniform RK4 mesh.
struct NumericSolution {
    lo: f64,
    h: f64,
    // (f, f′) at each mesh node, normalised at the anchor
    psi: Vec<(f64, f64)>,
    phi: Vec<(f64, f64)>,
    model: DiffusionModel,
    tag: Tag,
}

impl NumericSolution {
    fn rhs(&self, x: f64, y: (f64, f64)) -> (f64, f64) {
        rhs(&self.model, self.tag, x, y)
    }

    fn eval(&self, nodes: &[(f64, f64)], x: f64) -> Result<Jet> {
        let n = nodes.len() - 1;
        let hi = self.lo + self.h * n as f64;
        if !(x >= self.lo && x <= hi) {
            return Err(domain(format!(
                "x = {x} outside the numeric solution range [{}, {hi}]",
                self.lo
            )));
        }
        let i = (((x - self.lo) / self.h).round() as usize).min(n);
        let xi = self.lo + self.h * i as f64;
        let y = rk4_step(|t, y| self.rhs(t, y), xi, nodes[i], x - xi);
        let s = self.model.sigma(x);
        let d2 = 2.0 / (s * s)
            * (self.model.killing(self.tag, x) * y.0 - self.model.drift(self.tag, x) * y.1);
        Ok(Jet { v: y.0, d1: y.1, d2 })
    }
}

impl Fundamental for NumericSolution {
    fn psi(&self, x: f64) -> Result<Jet> {
        self.eval(&self.psi, x)
    }
    fn phi(&self, x: f64) -> Result<Jet> {
        self.eval(&self.phi, x)
    }
    fn domain(&self) -> (f64, f64) {
        (self.lo, self.lo + self.h * (self.psi.len() - 1) as f64)
    }
}

fn rhs(model: &DiffusionModel, tag: Tag, x: f64, y: (f64, f64)) -> (f64, f64) {
    let s = model.sigma(x);
    let d2 = 2.0 / (s * s) * (model.killing(tag, x) * y.0 - model.drift(tag, x) * y.1);
    (y.1, d2)
}

fn rk4_step<F>(f: F, x: f64, y: (f64, f64), h: f64) -> (f64, f64)
where
    F: Fn(f64, (f64, f64)) -> (f64, f64),
{
    if h == 0.0 {
        return y;
    }
    let k1 = f(x, y);
    let k2 = f(x + 0.5 * h, (y.0 + 0.5 * h * k1.0, y.1 + 0.5 * h * k1.1));
    let k3 = f(x + 0.5 * h, (y.0 + 0.5 * h * k2.0, y.1 + 0.5 * h * k2.1));
    let k4 = f(x + h, (y.0 + h * k3.0, y.1 + h * k3.1));
    (
        y.0 + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        y.1 + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    )
}

// roots of ½σ²κ² + bκ − k = 0 at x, (positive, negative)
fn local_exponents(model: &DiffusionModel, tag: Tag, x: f64) -> (f64, f64) {
    let s = model.sigma(x);
    let a = 0.5 * s * s;
    let b = model.drift(tag, x);
    let k = model.killing(tag, x);
    let disc = (b * b + 4.0 * a * k).sqrt();
    ((-b + disc) / (2.0 * a), (-b - disc) / (2.0 * a))
}

/// Construct `(ψ, φ)` by RK4 integration of `½σ²f″ + b f′ − k f = 0`.
///
/// ψ is integrated left to right and φ right to left, each in the direction
/// where it dominates, starting from a padded point outside `grid` with the
/// local exponential slope. Both are normalised to 1 at the anchor (or at the
/// grid midpoint when the anchor lies outside the grid). Positivity and
/// monotonicity are checked on `grid`.
pub fn fundamental_numeric(model: &DiffusionModel, tag: Tag, grid: &[f64]) -> Result<FundamentalPair> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(domain("grid must be strictly increasing with at least two points"));
    }
    let (g0, g1) = (grid[0], *grid.last().expect("nonempty"));
    model.check_interior(g0)?;
    model.check_interior(g1)?;
    let span = g1 - g0;
    // long enough for the slower of the two exponentials to decay by e^-30
    // (so resolvent tails are captured), short enough to stay below e^200
    let pad_for = |x: f64| {
        let (kp, km) = local_exponents(model, tag, x);
        let slow = kp.min(-km);
        let fast = kp.max(-km);
        (30.0 / slow).min(200.0 / fast).max(0.25 * span)
    };
    let mut lo = g0 - pad_for(g0);
    let mut hi = g1 + pad_for(g1);
    if lo <= model.lower {
        lo = 0.5 * (model.lower + g0);
    }
    if hi >= model.upper {
        hi = 0.5 * (model.upper + g1);
    }
    let n = 20_000usize;
    let h = (hi - lo) / n as f64;
    let f = |x: f64, y: (f64, f64)| rhs(model, tag, x, y);

    let mut psi = vec![(0.0, 0.0); n + 1];
    let (kp, _) = local_exponents(model, tag, lo);
    psi[0] = (1.0, kp);
    for i in 0..n {
        psi[i + 1] = rk4_step(f, lo + h * i as f64, psi[i], h);
    }
    let mut phi = vec![(0.0, 0.0); n + 1];
    let (_, km) = local_exponents(model, tag, hi);
    phi[n] = (1.0, km);
    for i in (0..n).rev() {
        phi[i] = rk4_step(f, lo + h * (i + 1) as f64, phi[i + 1], -h);
    }
    let mut sol = NumericSolution {
        lo,
        h,
        psi,
        phi,
        model: model.clone(),
        tag,
    };
    let x0 = if model.anchor > g0 && model.anchor < g1 {
        model.anchor
    } else {
        0.5 * (g0 + g1)
    };
    let p0 = sol.psi(x0)?.v;
    let q0 = sol.phi(x0)?.v;
    if !(p0 > 0.0 && q0 > 0.0 && p0.is_finite() && q0.is_finite()) {
        return Err(Error::Construction(format!(
            "non-positive or non-finite solution at normalisation point {x0}"
        )));
    }
    for y in sol.psi.iter_mut() {
        *y = (y.0 / p0, y.1 / p0);
    }
    for y in sol.phi.iter_mut() {
        *y = (y.0 / q0, y.1 / q0);
    }
    let mut prev: Option<(f64, f64)> = None;
    for &x in grid {
        let p = sol.psi(x)?.v;
        let q = sol.phi(x)?.v;
        if !(p > 0.0 && q > 0.0) || !p.is_finite() || !q.is_finite() {
            return Err(Error::Construction(format!("solution not positive at x = {x}")));
        }
        if let Some((pp, qq)) = prev {
            if !(p > pp && q < qq) {
                return Err(Error::Construction(format!("monotonicity lost at x = {x}")));
            }
        }
        prev = Some((p, q));
    }
    FundamentalPair::new(model, tag, Arc::new(sol))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bm(mu: f64, sigma: f64, r: f64) -> DiffusionModel {
        DiffusionModel::new(
            Arc::new(move |_| mu),
            Arc::new(|_| 0.0),
            Arc::new(move |_| sigma),
            Arc::new(|_| 0.0),
            f64::NEG_INFINITY,
            f64::INFINITY,
            r,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_models() {
        let m = DiffusionModel::new(
            Arc::new(|_| 0.0),
            Arc::new(|_| 1.0),
            Arc::new(|_| 1.0),
            Arc::new(|_| 0.0),
            f64::NEG_INFINITY,
            f64::INFINITY,
            0.5,
            0.0,
        );
        assert!(matches!(m, Err(Error::Domain(_))));
        let m = DiffusionModel::new(
            Arc::new(|_| 0.0),
            Arc::new(|_| 0.0),
            Arc::new(|x: f64| x),
            Arc::new(|_| 1.0),
            f64::NEG_INFINITY,
            f64::INFINITY,
            0.5,
            0.0,
        );
        assert!(m.is_err());
        let m = bm(0.1, 1.0, 0.5);
        assert!(m.scale_density(f64::INFINITY, Tag::Base).is_err());
    }

    #[test]
    fn drifted_brownian_scale_density() {
        let m = bm(0.3, 0.7, 0.1);
        for &x in &[-2.0f64, -0.5, 0.0, 1.0, 3.0] {
            let exact = (-2.0 * 0.3 / 0.49 * x).exp();
            let got = m.scale_density(x, Tag::Base).unwrap();
            assert!((got - exact).abs() <= 1e-12 * exact);
        }
    }

    #[test]
    fn drifted_brownian_numeric_pair() {
        let (mu, sigma, r) = (0.3, 0.7, 0.1);
        let m = bm(mu, sigma, r);
        let grid: Vec<f64> = (0..=100).map(|i| -3.0 + 0.06 * i as f64).collect();
        let pair = fundamental_numeric(&m, Tag::Base, &grid).unwrap();
        let a = 0.5 * sigma * sigma;
        let gp = (-mu + (mu * mu + 4.0 * a * r).sqrt()) / (2.0 * a);
        let gm = (-mu - (mu * mu + 4.0 * a * r).sqrt()) / (2.0 * a);
        for &x in &grid {
            let p = pair.psi_jet(x).unwrap();
            let q = pair.phi_jet(x).unwrap();
            assert!(((p.v - (gp * x).exp()) / p.v).abs() < 1e-7, "psi at {x}");
            assert!(((q.v - (gm * x).exp()) / q.v).abs() < 1e-7, "phi at {x}");
            assert!(((p.d1 - gp * p.v) / p.d1).abs() < 1e-7);
        }
        let w0 = pair.wronskian();
        for &x in &grid {
            let w = pair.wronskian_at(&m, x).unwrap();
            assert!(((w - w0) / w0).abs() < 1e-6);
        }
    }

    #[test]
    fn resolvent_of_constant_is_one_over_r() {
        let m = bm(0.3, 0.7, 0.1);
        let grid: Vec<f64> = (0..=10).map(|i| -1.0 + 0.2 * i as f64).collect();
        let pair = fundamental_numeric(&m, Tag::Base, &grid).unwrap();
        for &x in &[-0.5, 0.0, 0.4] {
            let v = resolvent(&m, &pair, |_| 1.0, x, Tolerance::default()).unwrap().value;
            assert!((v * 0.1 - 1.0).abs() < 1e-8, "{v}");
            let z = resolvent(&m, &pair, |_| 0.0, x, Tolerance::default()).unwrap().value;
            assert_eq!(z, 0.0);
        }
    }

    #[test]
    fn green_is_symmetric() {
        let m = bm(0.3, 0.7, 0.1);
        let grid: Vec<f64> = (0..=10).map(|i| -1.0 + 0.2 * i as f64).collect();
        let pair = fundamental_numeric(&m, Tag::Base, &grid).unwrap();
        for &(x, y) in &[(-0.5, 0.3), (0.2, 0.2), (0.9, -0.9)] {
            let g1 = green(&pair, x, y).unwrap();
            let g2 = green(&pair, y, x).unwrap();
            assert!(g1 > 0.0);
            assert!((g1 - g2).abs() <= 1e-15 * g1);
        }
    }

    #[test]
    fn tabulated_scale_matches_quadrature() {
        let m = DiffusionModel::new(
            Arc::new(|x: f64| -0.2 * x.sinh()),
            Arc::new(|x: f64| -0.2 * x.cosh()),
            Arc::new(|x: f64| 0.5 + 0.1 * x * x),
            Arc::new(|x: f64| 0.2 * x),
            f64::NEG_INFINITY,
            f64::INFINITY,
            0.05,
            0.0,
        )
        .unwrap();
        let t = m.clone().with_tabulated_scale(-2.0, 2.0, 800).unwrap();
        for &x in &[-2.5, -1.3, 0.0, 0.77, 1.9, 2.4] {
            for tag in [Tag::Base, Tag::Hat] {
                let a = m.log_scale_density(x, tag).unwrap();
                let b = t.log_scale_density(x, tag).unwrap();
                assert!((a - b).abs() < 1e-10, "{x} {tag:?}: {a} vs {b}");
            }
        }
    }
}
