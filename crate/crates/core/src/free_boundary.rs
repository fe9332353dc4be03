//! Free-boundary system for the two-sided singular control problem.
//!
//! The band `(a*, b*)` solves
//!
//! ```text
//! K1(a; b) = ∫_a^b (h′ − ĉ₁) m̂′ φ̂ = ∫_b^{x̄} (ĉ₁ + ĉ₂) m̂′ φ̂
//! K2(b; a) = ∫_a^b (h′ + ĉ₂) m̂′ ψ̂ = −∫_{x̲}^a (ĉ₁ + ĉ₂) m̂′ ψ̂
//! ```
//!
//! The first equation defines `a = x*(b)`, the second `b = y*(a)`, and `b*`
//! is the root of `Θ(b) = K2(b; x*(b)) − RHS₂(x*(b))`.

use std::sync::Arc;

use crate::diffusion::{resolvent_jet, DiffusionModel, FundamentalPair, Jet, RealFn, Tag};
use crate::error::{domain, Error, Result};
use crate::numerics::{brent, expand_bracket, integrate, integrate_tail, BrentOptions, Tolerance};

/// Holding cost and marginal intervention costs.
///
/// `c1_hat` and `c2_hat` are `ĉᵢ = (L_X̂ − (r − μ′)) cᵢ`.
#[derive(Clone)]
pub struct CostModel {
    pub h: RealFn,
    pub h_prime: RealFn,
    pub c1: RealFn,
    pub c1_prime: RealFn,
    pub c2: RealFn,
    pub c2_prime: RealFn,
    pub c1_hat: RealFn,
    pub c2_hat: RealFn,
    /// Sign changes of `h′ − ĉ₁` and `h′ + ĉ₂`, located numerically if absent.
    pub x_tilde: Option<(f64, f64)>,
}

impl std::fmt::Debug for CostModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CostModel")
            .field("x_tilde", &self.x_tilde)
            .finish_non_exhaustive()
    }
}

impl CostModel {
    /// Constant marginal costs: `ĉᵢ = −(r − μ′) cᵢ`.
    pub fn constant(h: RealFn, h_prime: RealFn, c1: f64, c2: f64, model: &DiffusionModel) -> Self {
        let m1 = model.clone();
        let m2 = model.clone();
        Self {
            h,
            h_prime,
            c1: Arc::new(move |_| c1),
            c1_prime: Arc::new(|_| 0.0),
            c2: Arc::new(move |_| c2),
            c2_prime: Arc::new(|_| 0.0),
            c1_hat: Arc::new(move |x| -m1.killing(Tag::Hat, x) * c1),
            c2_hat: Arc::new(move |x| -m2.killing(Tag::Hat, x) * c2),
            x_tilde: None,
        }
    }

    pub fn h(&self, x: f64) -> f64 {
        (self.h)(x)
    }
    pub fn h_prime(&self, x: f64) -> f64 {
        (self.h_prime)(x)
    }
    pub fn c1(&self, x: f64) -> f64 {
        (self.c1)(x)
    }
    pub fn c2(&self, x: f64) -> f64 {
        (self.c2)(x)
    }
    pub fn c1_hat(&self, x: f64) -> f64 {
        (self.c1_hat)(x)
    }
    pub fn c2_hat(&self, x: f64) -> f64 {
        (self.c2_hat)(x)
    }

    /// Check the sign conditions on the model's sampling window and locate
    /// `x̃₁ < x̃₂`.
    pub fn validate(&self, model: &DiffusionModel) -> Result<(f64, f64)> {
        let (lo, hi) = model.sample_window();
        for i in 0..=400 {
            let x = lo + (hi - lo) * i as f64 / 400.0;
            if !(x > model.lower() && x < model.upper()) {
                continue;
            }
            if self.h(x) < 0.0 {
                return Err(domain(format!("holding cost negative at x = {x}")));
            }
            if !(self.c1(x) + self.c2(x) > 0.0) {
                return Err(domain(format!("c1 + c2 must be positive, fails at x = {x}")));
            }
            if !(self.c1_hat(x) + self.c2_hat(x) < 0.0) {
                return Err(domain(format!("ĉ1 + ĉ2 must be negative, fails at x = {x}")));
            }
        }
        let tilde = match self.x_tilde {
            Some(t) => t,
            None => {
                let f1 = |x: f64| self.h_prime(x) - self.c1_hat(x);
                let f2 = |x: f64| self.h_prime(x) + self.c2_hat(x);
                (sign_change(model, f1)?, sign_change(model, f2)?)
            }
        };
        if !(tilde.0 < tilde.1) {
            return Err(domain(format!(
                "need x̃1 < x̃2, got ({}, {})",
                tilde.0, tilde.1
            )));
        }
        Ok(tilde)
    }
}

// root of an increasing function crossing zero once
fn sign_change<F: Fn(f64) -> f64>(model: &DiffusionModel, f: F) -> Result<f64> {
    let x0 = model.anchor();
    let step = 1e-3 * model.length_scale();
    let dir = if f(x0) < 0.0 { 1.0 } else { -1.0 };
    let limit = if dir > 0.0 { model.upper() } else { model.lower() };
    let limit = if limit.is_finite() { limit } else { x0 + dir * 1e6 * model.length_scale() };
    let (lo, hi) = expand_bracket(|x| Ok(f(x)), x0, dir * step, limit, 200)?;
    if lo == hi {
        return Ok(lo);
    }
    brent(|x| Ok(f(x)), lo, hi, BrentOptions::default())
}

pub type JetFnResult = Arc<dyn Fn(f64) -> Result<Jet> + Send + Sync>;

/// Everything needed to solve for the band: model, costs, the base pair
/// `(ψ, φ)`, the hat pair `(ψ̂, φ̂)` and the resolvent `Rh` with derivatives.
#[derive(Clone)]
pub struct ControlProblem {
    model: DiffusionModel,
    cost: CostModel,
    base: FundamentalPair,
    hat: FundamentalPair,
    holding: Option<JetFnResult>,
    x_tilde: (f64, f64),
    tol: Tolerance,
}

impl std::fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ControlProblem")
            .field("model", &self.model)
            .field("x_tilde", &self.x_tilde)
            .finish_non_exhaustive()
    }
}

const FB_TOL: Tolerance = Tolerance::new(0.0, 1e-12);

impl ControlProblem {
    pub fn new(
        model: DiffusionModel,
        cost: CostModel,
        base: FundamentalPair,
        hat: FundamentalPair,
    ) -> Result<Self> {
        if base.tag() != Tag::Base || hat.tag() != Tag::Hat {
            return Err(domain("expected a base pair and a hat pair"));
        }
        let x_tilde = cost.validate(&model)?;
        Ok(Self {
            model,
            cost,
            base,
            hat,
            holding: None,
            x_tilde,
            tol: FB_TOL,
        })
    }

    /// Closed form for `(Rh, (Rh)′, (Rh)″)`; otherwise quadrature is used.
    pub fn with_holding_resolvent(mut self, f: JetFnResult) -> Self {
        self.holding = Some(f);
        self
    }

    /// Replace the hat pair, e.g. with a rescaled copy.
    pub fn with_hat_pair(mut self, hat: FundamentalPair) -> Self {
        self.hat = hat;
        self
    }

    pub fn model(&self) -> &DiffusionModel {
        &self.model
    }
    pub fn cost(&self) -> &CostModel {
        &self.cost
    }
    pub fn base_pair(&self) -> &FundamentalPair {
        &self.base
    }
    pub fn hat_pair(&self) -> &FundamentalPair {
        &self.hat
    }
    pub fn x_tilde(&self) -> (f64, f64) {
        self.x_tilde
    }

    fn bounds(&self) -> (f64, f64) {
        let (lo, hi) = self.hat.domain();
        (lo.max(self.model.lower()), hi.min(self.model.upper()))
    }

    fn w_phi(&self, z: f64) -> Result<f64> {
        Ok(self.model.speed_density(z, Tag::Hat)? * self.hat.phi(z)?)
    }

    fn w_psi(&self, z: f64) -> Result<f64> {
        Ok(self.model.speed_density(z, Tag::Hat)? * self.hat.psi(z)?)
    }

    fn quad<F: Fn(f64) -> Result<f64>>(&self, f: F, a: f64, b: f64) -> Result<f64> {
        let err = std::cell::Cell::new(None);
        let g = |z: f64| match f(z) {
            Ok(v) => v,
            Err(e) => {
                err.set(Some(e.to_string()));
                f64::NAN
            }
        };
        let r = integrate(g, a, b, self.tol);
        if let Some(e) = err.take() {
            return Err(Error::Numerical {
                what: e,
                achieved: f64::NAN,
                requested: self.tol.rel,
            });
        }
        Ok(r?.value)
    }

    fn quad_tail<F: Fn(f64) -> Result<f64>>(&self, f: F, start: f64, limit: f64) -> Result<f64> {
        let g = |z: f64| {
            if z <= self.bounds().0 || z >= self.bounds().1 {
                return 0.0;
            }
            f(z).unwrap_or(f64::NAN)
        };
        Ok(integrate_tail(g, start, limit, 0.25 * self.model.length_scale(), self.tol)?.value)
    }

    /// `K1(a; b) = ∫_a^b (h′ − ĉ₁) m̂′ φ̂`.
    pub fn k1(&self, a: f64, b: f64) -> Result<f64> {
        if a > b {
            return Err(domain(format!("K1 needs a ≤ b, got a = {a}, b = {b}")));
        }
        self.quad(
            |z| Ok((self.cost.h_prime(z) - self.cost.c1_hat(z)) * self.w_phi(z)?),
            a,
            b,
        )
    }

    /// `K2(b; a) = ∫_a^b (h′ + ĉ₂) m̂′ ψ̂`.
    pub fn k2(&self, b: f64, a: f64) -> Result<f64> {
        if a > b {
            return Err(domain(format!("K2 needs a ≤ b, got a = {a}, b = {b}")));
        }
        self.quad(
            |z| Ok((self.cost.h_prime(z) + self.cost.c2_hat(z)) * self.w_psi(z)?),
            a,
            b,
        )
    }

    /// `∫_b^{x̄} (ĉ₁ + ĉ₂) m̂′ φ̂`, negative.
    pub fn rhs1(&self, b: f64) -> Result<f64> {
        let hi = self.bounds().1;
        self.quad_tail(
            |z| Ok((self.cost.c1_hat(z) + self.cost.c2_hat(z)) * self.w_phi(z)?),
            b,
            hi,
        )
    }

    /// `−∫_{x̲}^a (ĉ₁ + ĉ₂) m̂′ ψ̂`, positive.
    pub fn rhs2(&self, a: f64) -> Result<f64> {
        let lo = self.bounds().0;
        // oriented integral from a down to x̲ is already −∫_{x̲}^a
        self.quad_tail(
            |z| Ok((self.cost.c1_hat(z) + self.cost.c2_hat(z)) * self.w_psi(z)?),
            a,
            lo,
        )
    }

    /// Residuals of the two boundary equations at `(a, b)`.
    pub fn system(&self, a: f64, b: f64) -> Result<(f64, f64)> {
        Ok((self.k1(a, b)? - self.rhs1(b)?, self.k2(b, a)? - self.rhs2(a)?))
    }

    fn step(&self) -> f64 {
        let (t1, t2) = self.x_tilde;
        (0.01 * (t2 - t1)).max(1e-4 * self.model.length_scale())
    }

    /// Unique root `a < x̃₁ ∧ b` of `K1(a; b) = RHS₁(b)`.
    pub fn x_star(&self, b: f64) -> Result<f64> {
        let rhs = self.rhs1(b)?;
        let start = self.x_tilde.0.min(b);
        let lo = self.bounds().0;
        let f = |a: f64| Ok(self.k1(a, b)? - rhs);
        let (l, h) = expand_bracket(f, start, -self.step(), lo, 200).map_err(|e| {
            Error::Solver(format!("x*(b = {b}): {e}"))
        })?;
        if l == h {
            return Ok(l);
        }
        brent(f, l, h, BrentOptions::default())
    }

    /// Unique root `b > a ∨ x̃₂` of `K2(b; a) = RHS₂(a)`.
    pub fn y_star(&self, a: f64) -> Result<f64> {
        let rhs = self.rhs2(a)?;
        let start = self.x_tilde.1.max(a);
        let hi = self.bounds().1;
        let f = |b: f64| Ok(self.k2(b, a)? - rhs);
        let (l, h) = expand_bracket(f, start, self.step(), hi, 200).map_err(|e| {
            Error::Solver(format!("y*(a = {a}): {e}"))
        })?;
        if l == h {
            return Ok(l);
        }
        brent(f, l, h, BrentOptions::default())
    }

    /// `Θ(b) = K2(b; x*(b)) − RHS₂(x*(b))`.
    pub fn theta(&self, b: f64) -> Result<f64> {
        let a = self.x_star(b)?;
        Ok(self.k2(b, a)? - self.rhs2(a)?)
    }

    /// Solve for `(a*, b*)` and assemble the value function.
    pub fn solve(&self) -> Result<BandSolution> {
        let (t1, t2) = self.x_tilde;
        let b0 = t2 + 1e-6 * (t2 - t1);
        let hi = self.bounds().1;
        let (l, h) = expand_bracket(|b| self.theta(b), b0, self.step(), hi, 200)
            .map_err(|e| Error::Solver(format!("Θ bracket: {e}")))?;
        let b_star = if l == h {
            l
        } else {
            brent(|b| self.theta(b), l, h, BrentOptions::default())?
        };
        let a_star = self.x_star(b_star)?;
        let theta_residual = self.theta(b_star)?;
        let policy = self.policy(a_star, b_star)?;
        let m = &self.model;
        let c = &self.cost;
        let s2a = m.sigma(a_star).powi(2);
        let s2b = m.sigma(b_star).powi(2);
        let flat_a = (c.h(a_star) - m.mu(a_star) * c.c1(a_star) - 0.5 * s2a * (c.c1_prime)(a_star)) / m.r();
        let flat_b = (c.h(b_star) + m.mu(b_star) * c.c2(b_star) + 0.5 * s2b * (c.c2_prime)(b_star)) / m.r();
        let gap = (policy.u_a - flat_a).abs().max((policy.u_b - flat_b).abs());
        let scale = 1.0 + policy.u_a.abs().max(policy.u_b.abs());
        let ua_plus = policy.middle(a_star)?;
        let ub_minus = policy.middle(b_star)?;
        let c2_gap_a = (ua_plus.d2 + (c.c1_prime)(a_star)).abs();
        let c2_gap_b = (ub_minus.d2 - (c.c2_prime)(b_star)).abs();
        let curvature = policy.curvature_scale()?;
        let smooth_fit = SmoothFit {
            value_gap: gap / scale,
            second_derivative_gap_a: c2_gap_a / curvature,
            second_derivative_gap_b: c2_gap_b / curvature,
        };
        if smooth_fit.second_derivative_gap_a > 1e-4
            || smooth_fit.second_derivative_gap_b > 1e-4
            || smooth_fit.value_gap > 1e-4
        {
            return Err(Error::Assembly(format!(
                "C² fit fails at the computed boundaries: {smooth_fit:?}"
            )));
        }
        let policy = BandPolicy {
            u_a: flat_a,
            u_b: flat_b,
            ..policy
        };
        Ok(BandSolution {
            a_star,
            b_star,
            theta_residual,
            smooth_fit,
            policy,
        })
    }

    /// `(Rh, (Rh)′, (Rh)″)` at `x`.
    pub fn holding_resolvent(&self, x: f64) -> Result<Jet> {
        if let Some(f) = &self.holding {
            return f(x);
        }
        let tol = Tolerance::new(1e-14, 1e-11);
        let (v, d) = resolvent_jet(&self.model, &self.base, |y| self.cost.h(y), x, tol)?;
        let m = &self.model;
        let s2 = m.sigma(x).powi(2);
        let d2 = 2.0 * (m.r() * v.value - m.mu(x) * d.value - self.cost.h(x)) / s2;
        Ok(Jet {
            v: v.value,
            d1: d.value,
            d2,
        })
    }

    /// The band policy `(a, b)` with coefficients fixed by first-derivative
    /// smooth fit `u′(a) = −c₁(a)`, `u′(b) = c₂(b)`. For an arbitrary band
    /// this is the expected discounted cost of reflecting at `a` and `b`.
    pub fn policy(&self, a: f64, b: f64) -> Result<BandPolicy> {
        if !(a < b) {
            return Err(domain(format!("band needs a < b, got ({a}, {b})")));
        }
        let pa = self.base.psi_jet(a)?;
        let qa = self.base.phi_jet(a)?;
        let pb = self.base.psi_jet(b)?;
        let qb = self.base.phi_jet(b)?;
        let ra = self.holding_resolvent(a)?;
        let rb = self.holding_resolvent(b)?;
        let ya = -self.cost.c1(a) - ra.d1;
        let yb = self.cost.c2(b) - rb.d1;
        let det = pa.d1 * qb.d1 - qa.d1 * pb.d1;
        if !(det.abs() > 0.0) || !det.is_finite() {
            return Err(Error::Numerical {
                what: "smooth-fit system determinant".into(),
                achieved: det,
                requested: f64::MIN_POSITIVE,
            });
        }
        let coeff_a = (ya * qb.d1 - qa.d1 * yb) / det;
        let coeff_b = (pa.d1 * yb - ya * pb.d1) / det;
        let mut policy = BandPolicy {
            a,
            b,
            coeff_a,
            coeff_b,
            u_a: 0.0,
            u_b: 0.0,
            problem: self.clone(),
        };
        policy.u_a = policy.middle(a)?.v;
        policy.u_b = policy.middle(b)?.v;
        Ok(policy)
    }

    /// `(A, B)` from the closed-form expressions in terms of the hat pair and
    /// `R̂(h′ − ĉ₁)` at `a`, converted to the base normalisation. Used to
    /// cross-check the smooth-fit linear system.
    pub fn coefficients_via_hat(&self, a: f64) -> Result<(f64, f64)> {
        let tol = Tolerance::new(1e-16, 1e-11);
        let (f, fp) = resolvent_jet(
            &self.model,
            &self.hat,
            |y| self.cost.h_prime(y) - self.cost.c1_hat(y),
            a,
            tol,
        )?;
        let (f, fp) = (f.value, fp.value);
        let p = self.hat.psi_jet(a)?;
        let q = self.hat.phi_jet(a)?;
        let den = q.v * p.d1 - q.d1 * p.v;
        let a_hat = (q.d1 * f - q.v * fp) / den;
        let b_hat = (p.d1 * f - p.v * fp) / den;
        // ψ′ = λ ψ̂ and φ′ = −κ φ̂ under the two independent normalisations
        let x0 = self.model.anchor();
        let lambda = self.base.psi_jet(x0)?.d1 / self.hat.psi(x0)?;
        let kappa = -self.base.phi_jet(x0)?.d1 / self.hat.phi(x0)?;
        Ok((a_hat / lambda, b_hat / kappa))
    }
}

/// Relative smooth-fit diagnostics at the solved boundaries.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SmoothFit {
    /// Mismatch between the middle-region value at the boundaries and the
    /// flat-region constants `(h ∓ μcᵢ ∓ ½σ²cᵢ′)/r`.
    pub value_gap: f64,
    pub second_derivative_gap_a: f64,
    pub second_derivative_gap_b: f64,
}

/// A two-sided reflection policy and its cost function.
#[derive(Clone)]
pub struct BandPolicy {
    pub a: f64,
    pub b: f64,
    pub coeff_a: f64,
    pub coeff_b: f64,
    /// Value at `a` and `b` used for the flat regions.
    pub u_a: f64,
    pub u_b: f64,
    problem: ControlProblem,
}

impl std::fmt::Debug for BandPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BandPolicy")
            .field("a", &self.a)
            .field("b", &self.b)
            .field("coeff_a", &self.coeff_a)
            .field("coeff_b", &self.coeff_b)
            .finish_non_exhaustive()
    }
}

impl BandPolicy {
    pub fn problem(&self) -> &ControlProblem {
        &self.problem
    }

    /// `Aψ + Bφ + Rh` with derivatives.
    pub fn middle(&self, x: f64) -> Result<Jet> {
        let p = self.problem.base.psi_jet(x)?;
        let q = self.problem.base.phi_jet(x)?;
        let r = self.problem.holding_resolvent(x)?;
        Ok(Jet {
            v: self.coeff_a * p.v + self.coeff_b * q.v + r.v,
            d1: self.coeff_a * p.d1 + self.coeff_b * q.d1 + r.d1,
            d2: self.coeff_a * p.d2 + self.coeff_b * q.d2 + r.d2,
        })
    }

    fn curvature_scale(&self) -> Result<f64> {
        let mut s: f64 = 0.0;
        for i in 0..=20 {
            let x = self.a + (self.b - self.a) * i as f64 / 20.0;
            s = s.max(self.middle(x)?.d2.abs());
        }
        Ok(s.max(f64::MIN_POSITIVE))
    }

    /// Value function with first and second derivative.
    pub fn value(&self, x: f64) -> Result<Jet> {
        let c = &self.problem.cost;
        if x <= self.a {
            let int = if x == self.a {
                0.0
            } else {
                integrate(|y| c.c1(y), x, self.a, Tolerance::new(1e-15, 1e-13))?.value
            };
            Ok(Jet {
                v: self.u_a + int,
                d1: -c.c1(x),
                d2: -(c.c1_prime)(x),
            })
        } else if x >= self.b {
            let int = if x == self.b {
                0.0
            } else {
                integrate(|y| c.c2(y), self.b, x, Tolerance::new(1e-15, 1e-13))?.value
            };
            Ok(Jet {
                v: self.u_b + int,
                d1: c.c2(x),
                d2: (c.c2_prime)(x),
            })
        } else {
            self.middle(x)
        }
    }

    pub fn u(&self, x: f64) -> Result<f64> {
        Ok(self.value(x)?.v)
    }

    pub fn u_prime(&self, x: f64) -> Result<f64> {
        Ok(self.value(x)?.d1)
    }
}

/// Optimal band with its value function.
#[derive(Debug, Clone)]
pub struct BandSolution {
    pub a_star: f64,
    pub b_star: f64,
    /// `Θ(b*)` after the outer root solve.
    pub theta_residual: f64,
    pub smooth_fit: SmoothFit,
    pub policy: BandPolicy,
}

impl BandSolution {
    pub fn coeff_a(&self) -> f64 {
        self.policy.coeff_a
    }
    pub fn coeff_b(&self) -> f64 {
        self.policy.coeff_b
    }
    pub fn u(&self, x: f64) -> Result<f64> {
        self.policy.u(x)
    }
    pub fn u_prime(&self, x: f64) -> Result<f64> {
        self.policy.u_prime(x)
    }
    pub fn value(&self, x: f64) -> Result<Jet> {
        self.policy.value(x)
    }
}

/// Largest violations of the HJB variational inequality
/// `min{(L−r)u + h, c₁ + u′, c₂ − u′} = 0` on a grid. Residuals of the
/// equation are scaled by `1 + |h(x)|`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ResidualReport {
    /// `max |(L−r)u + h|` inside `(a*, b*)`.
    pub inside_max: f64,
    /// `min ((L−r)u + h)` outside the band; should be ≥ 0.
    pub outside_min: f64,
    /// `max(−c₁ − u′, u′ − c₂, 0)` over the grid.
    pub gradient_violation: f64,
    /// `max |min{...}|` over the grid.
    pub complementarity_max: f64,
    pub points: usize,
}

pub fn hjb_residual(solution: &BandSolution, grid: &[f64]) -> Result<ResidualReport> {
    let p = solution.policy.problem();
    let m = p.model();
    let c = p.cost();
    let mut rep = ResidualReport {
        inside_max: 0.0,
        outside_min: f64::INFINITY,
        gradient_violation: 0.0,
        complementarity_max: 0.0,
        points: grid.len(),
    };
    for &x in grid {
        let u = solution.value(x)?;
        let eq = (m.generator(Tag::Base, x, u) + c.h(x)) / (1.0 + c.h(x).abs());
        let g1 = c.c1(x) + u.d1;
        let g2 = c.c2(x) - u.d1;
        if x > solution.a_star && x < solution.b_star {
            rep.inside_max = rep.inside_max.max(eq.abs());
        } else {
            rep.outside_min = rep.outside_min.min(eq);
        }
        rep.gradient_violation = rep.gradient_violation.max(-g1).max(-g2);
        rep.complementarity_max = rep.complementarity_max.max(eq.min(g1).min(g2).abs());
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ou::{ou_problem, OuSpec};
    use proptest::prelude::*;

    fn problem() -> ControlProblem {
        ou_problem(&OuSpec::default()).unwrap()
    }

    #[test]
    fn empty_integrals_vanish() {
        let p = problem();
        assert_eq!(p.k1(2.0, 2.0).unwrap(), 0.0);
        assert_eq!(p.k2(2.0, 2.0).unwrap(), 0.0);
        assert!(matches!(p.k1(2.1, 2.0), Err(Error::Domain(_))));
        assert!(matches!(p.k2(2.0, 2.1), Err(Error::Domain(_))));
    }

    #[test]
    fn k2_increases_beyond_x_tilde_2() {
        let p = problem();
        let (_, t2) = p.x_tilde();
        let a = 1.98;
        let mut prev = p.k2(t2, a).unwrap();
        for i in 1..=20 {
            let v = p.k2(t2 + 0.005 * i as f64, a).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn published_boundaries_solve_first_equation() {
        let p = problem();
        let k1 = p.k1(1.98707, 2.03214).unwrap();
        let rhs = p.rhs1(2.03214).unwrap();
        assert!(rhs < 0.0);
        // the published a* sits about 9e-6 from ours, so bound the residual
        // by the sensitivity of K1 − RHS₁ to a 1e-5 boundary shift
        let h = 1e-6;
        let da = (p.k1(1.98707 + h, 2.03214).unwrap() - p.k1(1.98707 - h, 2.03214).unwrap()) / (2.0 * h);
        let g = |b: f64| p.k1(1.98707, b).unwrap() - p.rhs1(b).unwrap();
        let db = (g(2.03214 + h) - g(2.03214 - h)) / (2.0 * h);
        let allowed = 1e-5 * (da.abs() + db.abs());
        assert!((k1 - rhs).abs() < allowed, "{k1} vs {rhs}, allowed {allowed}");
        let sol = p.solve().unwrap();
        let k1 = p.k1(sol.a_star, sol.b_star).unwrap();
        let rhs = p.rhs1(sol.b_star).unwrap();
        assert!(((k1 - rhs) / rhs).abs() < 1e-6);
    }

    #[test]
    fn inner_roots() {
        let p = problem();
        let (t1, t2) = p.x_tilde();
        assert!((p.x_star(2.03214).unwrap() - 1.98707).abs() < 1e-4);
        for i in 0..10 {
            let b = t2 + 0.003 + 0.01 * i as f64;
            assert!(p.x_star(b).unwrap() < t1);
            let a = t1 - 0.003 - 0.01 * i as f64;
            assert!(p.y_star(a).unwrap() > t2);
        }
    }

    #[test]
    fn inner_maps_decrease() {
        let p = problem();
        let (t1, t2) = p.x_tilde();
        let h = 1e-4;
        for i in 0..10 {
            let b = t2 + 0.005 + 0.01 * i as f64;
            assert!(p.x_star(b + h).unwrap() < p.x_star(b - h).unwrap());
            let a = t1 - 0.005 - 0.01 * i as f64;
            assert!(p.y_star(a + h).unwrap() < p.y_star(a - h).unwrap());
        }
    }

    #[test]
    fn coefficients_match_hat_formulas() {
        let p = problem();
        let sol = p.solve().unwrap();
        let (a, b) = p.coefficients_via_hat(sol.a_star).unwrap();
        assert!(((a - sol.coeff_a()) / sol.coeff_a()).abs() < 1e-6, "{a} vs {}", sol.coeff_a());
        assert!(((b - sol.coeff_b()) / sol.coeff_b()).abs() < 1e-6, "{b} vs {}", sol.coeff_b());
    }

    #[test]
    fn boundary_derivatives_and_second_order_fit() {
        let sol = problem().solve().unwrap();
        let (a, b) = (sol.a_star, sol.b_star);
        let c = 0.0335;
        assert!((sol.u_prime(a).unwrap() + c).abs() < 1e-8);
        assert!((sol.u_prime(b).unwrap() - c).abs() < 1e-8);
        assert!((sol.policy.middle(a).unwrap().d1 + c).abs() < 1e-8);
        assert!((sol.policy.middle(b).unwrap().d1 - c).abs() < 1e-8);
        // fourth-order one-sided second differences from each side
        let h = 2e-3;
        let w = [45.0, -154.0, 214.0, -156.0, 61.0, -10.0];
        let fd = |x0: f64, s: f64| {
            let sum: f64 = (0..6).map(|i| w[i] * sol.u(x0 + s * h * i as f64).unwrap()).sum();
            sum / (12.0 * h * h)
        };
        let scale = sol.policy.middle(0.5 * (a + b)).unwrap().d2.abs();
        for x in [a, b] {
            let gap = (fd(x, 1.0) - fd(x, -1.0)).abs();
            assert!(gap / scale < 1e-5, "{gap} / {scale}");
        }
        assert!(sol.smooth_fit.second_derivative_gap_a < 1e-5);
        assert!(sol.smooth_fit.second_derivative_gap_b < 1e-5);
    }

    #[test]
    fn hjb_inequality_on_wide_grid() {
        let spec = OuSpec::default();
        let sol = solve(&spec);
        let sd = spec.stationary_sd();
        let grid: Vec<f64> = (0..1000)
            .map(|i| spec.m - 10.0 * sd + 20.0 * sd * i as f64 / 999.0)
            .collect();
        let rep = hjb_residual(&sol, &grid).unwrap();
        assert!(rep.inside_max < 1e-6, "{rep:?}");
        assert!(rep.outside_min > -1e-8, "{rep:?}");
        assert!(rep.gradient_violation < 1e-8, "{rep:?}");
        assert!(rep.complementarity_max < 1e-6, "{rep:?}");
    }

    fn solve(spec: &OuSpec) -> BandSolution {
        ou_problem(spec).unwrap().solve().unwrap()
    }

    #[test]
    fn single_crossing_cell() {
        let p = problem();
        let (t1, t2) = p.x_tilde();
        let sol = p.solve().unwrap();
        let s = 0.015;
        let n = 16;
        let a_at = |i: usize| t1 - 10.0 * s + 10.0 * s * i as f64 / n as f64 - 1e-9;
        let b_at = |j: usize| t2 + 1e-9 + 10.0 * s * j as f64 / n as f64;
        let mut f = vec![vec![(0.0, 0.0); n + 1]; n + 1];
        for (i, row) in f.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = p.system(a_at(i), b_at(j)).unwrap();
            }
        }
        let mut cells = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let c = [f[i][j], f[i + 1][j], f[i][j + 1], f[i + 1][j + 1]];
                // the two zero curves are nearly parallel, so a crossing shows
                // up as all four sign patterns on the corners
                let has = |s1: bool, s2: bool| c.iter().any(|v| (v.0 > 0.0) == s1 && (v.1 > 0.0) == s2);
                if has(true, true) && has(true, false) && has(false, true) && has(false, false) {
                    cells.push((i, j));
                }
            }
        }
        assert_eq!(cells.len(), 1, "{cells:?}");
        let (i, j) = cells[0];
        assert!(a_at(i) <= sol.a_star && sol.a_star <= a_at(i + 1));
        assert!(b_at(j) <= sol.b_star && sol.b_star <= b_at(j + 1));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(6))]
        #[test]
        fn invariant_under_rescaling(ps in 0.01f64..100.0, qs in 0.01f64..100.0) {
            let p = problem();
            let base = p.solve().unwrap();
            let hat = p.hat_pair().rescaled(ps, qs);
            let sol = p.clone().with_hat_pair(hat).solve().unwrap();
            prop_assert!((sol.a_star - base.a_star).abs() < 1e-10);
            prop_assert!((sol.b_star - base.b_star).abs() < 1e-10);
        }

        #[test]
        fn symmetric_costs_centre_the_band(c in 0.01f64..2.0, m in 1.9f64..2.1) {
            let spec = OuSpec { m, theta: m, ..OuSpec::default() }.with_cost(c);
            let sol = solve(&spec);
            prop_assert!((sol.a_star + sol.b_star - 2.0 * m).abs() < 1e-8);
            let (t1, t2) = spec.x_tilde();
            prop_assert!(sol.a_star < t1 && t2 < sol.b_star);
        }
    }
}
