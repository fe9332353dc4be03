//! Ornstein–Uhlenbeck exchange rate `dX = ρ(m − X)dt + σ dW` with quadratic
//! holding cost `½(x − θ)²` and constant marginal costs `c₁`, `c₂`.
//!
//! With `z = (x − m)√(2ρ)/σ` and `g_α(z) = e^{z²/4} D_α(z)` the fundamental
//! solutions are `φ = g_α(z)`, `ψ = g_α(−z)`, of order `−r/ρ` for the base
//! generator and `−(r + ρ)/ρ` for the hat generator.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{ClosedForm, DiffusionModel, FundamentalPair, Jet, Tag};
use crate::error::{domain, Error, Result};
use crate::free_boundary::{BandSolution, ControlProblem, CostModel};
use crate::numerics::{brent, expand_bracket, integrate, BrentOptions, Tolerance};
use crate::special::{pcf_scaled, CylinderOrder};

/// `ln 7.46038`, log of the DKK/EUR central parity.
pub const LOG_DKK_PARITY: f64 = 2.009_611_011_839_906;

/// OU dynamics plus cost parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuSpec {
    pub rho: f64,
    pub m: f64,
    pub sigma: f64,
    pub r: f64,
    pub c1: f64,
    pub c2: f64,
    pub theta: f64,
}

impl Default for OuSpec {
    /// The DKK/EUR parameters with `c₁ = c₂ = 0.0335`.
    fn default() -> Self {
        Self {
            rho: 0.001,
            m: LOG_DKK_PARITY,
            sigma: 0.015,
            r: 0.005,
            c1: 0.0335,
            c2: 0.0335,
            theta: LOG_DKK_PARITY,
        }
    }
}

impl OuSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.rho, self.m, self.sigma, self.r, self.c1, self.c2, self.theta]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(domain("all OU parameters must be finite"));
        }
        if !(self.rho > 0.0 && self.sigma > 0.0 && self.r > 0.0) {
            return Err(domain(format!(
                "need rho, sigma, r > 0, got rho = {}, sigma = {}, r = {}",
                self.rho, self.sigma, self.r
            )));
        }
        if !(self.c1 + self.c2 > 0.0) {
            return Err(domain("need c1 + c2 > 0"));
        }
        Ok(())
    }

    pub fn with_cost(self, c: f64) -> Self {
        Self {
            c1: c,
            c2: c,
            ..self
        }
    }

    /// `√(2ρ)/σ`, the map from `x − m` to the cylinder argument.
    pub fn k(&self) -> f64 {
        (2.0 * self.rho).sqrt() / self.sigma
    }

    pub fn z(&self, x: f64) -> f64 {
        self.k() * (x - self.m)
    }

    /// Stationary standard deviation `σ/√(2ρ)`.
    pub fn stationary_sd(&self) -> f64 {
        self.sigma / (2.0 * self.rho).sqrt()
    }

    pub fn x_tilde(&self) -> (f64, f64) {
        let k = self.r + self.rho;
        (self.theta - k * self.c1, self.theta + k * self.c2)
    }

    pub fn h(&self, x: f64) -> f64 {
        0.5 * (x - self.theta).powi(2)
    }
}

/// The OU diffusion, anchored at `m`, with closed-form `ln S′ = ln Ŝ′ = ρ(x − m)²/σ²`.
pub fn ou_model(spec: &OuSpec) -> Result<DiffusionModel> {
    spec.validate()?;
    let OuSpec { rho, m, sigma, .. } = *spec;
    let log_s: Arc<dyn Fn(f64) -> f64 + Send + Sync> =
        Arc::new(move |x: f64| rho * (x - m).powi(2) / (sigma * sigma));
    Ok(DiffusionModel::new(
        Arc::new(move |x| rho * (m - x)),
        Arc::new(move |_| -rho),
        Arc::new(move |_| sigma),
        Arc::new(|_| 0.0),
        f64::NEG_INFINITY,
        f64::INFINITY,
        spec.r,
        m,
    )?
    .with_log_scale(log_s.clone(), log_s))
}

fn cylinder_pair(spec: &OuSpec, alpha: f64, model: &DiffusionModel, tag: Tag) -> Result<FundamentalPair> {
    let o0 = CylinderOrder::new(alpha)?;
    let o1 = o0.lowered(1);
    let o2 = o0.lowered(2);
    let k = spec.k();
    let m = spec.m;
    // g_α′ = α g_{α−1}, g_α″ = α(α−1) g_{α−2}
    let jet = move |z: f64, sign: f64| -> Result<Jet> {
        Ok(Jet {
            v: pcf_scaled(o0, z)?,
            d1: sign * k * alpha * pcf_scaled(o1, z)?,
            d2: k * k * alpha * (alpha - 1.0) * pcf_scaled(o2, z)?,
        })
    };
    let source = ClosedForm {
        psi: Arc::new(move |x| jet(-k * (x - m), -1.0)),
        phi: Arc::new(move |x| jet(k * (x - m), 1.0)),
        psi_value: Some(Arc::new(move |x| pcf_scaled(o0, -k * (x - m)))),
        phi_value: Some(Arc::new(move |x| pcf_scaled(o0, k * (x - m)))),
        domain: (f64::NEG_INFINITY, f64::INFINITY),
    };
    FundamentalPair::new(model, tag, Arc::new(source))
}

/// `(ψ̂, φ̂)` of order `−(r + ρ)/ρ`.
pub fn ou_hat_pair(spec: &OuSpec) -> Result<FundamentalPair> {
    let model = ou_model(spec)?;
    cylinder_pair(spec, -(spec.r + spec.rho) / spec.rho, &model, Tag::Hat)
}

/// `(ψ, φ)` of order `−r/ρ`.
pub fn ou_base_pair(spec: &OuSpec) -> Result<FundamentalPair> {
    let model = ou_model(spec)?;
    cylinder_pair(spec, -spec.r / spec.rho, &model, Tag::Base)
}

/// `(Rh, (Rh)′, (Rh)″)` for `h = ½(x − θ)²` by quadrature in time of the
/// conditional moments.
pub fn ou_holding_resolvent(spec: &OuSpec, x: f64) -> Result<Jet> {
    let OuSpec {
        rho, m, sigma, r, theta, ..
    } = *spec;
    let t_max = 16.0 * std::f64::consts::LN_10 / r + 1.0;
    let tol = Tolerance::new(1e-15, 1e-13);
    let v = integrate(
        |t: f64| {
            let mean = m + (x - m) * (-rho * t).exp() - theta;
            let var = sigma * sigma * (-(-2.0 * rho * t).exp_m1()) / (2.0 * rho);
            (-r * t).exp() * 0.5 * (mean * mean + var)
        },
        0.0,
        t_max,
        tol,
    )?;
    let d1 = integrate(
        |t: f64| {
            let e = (-rho * t).exp();
            (-r * t).exp() * (m - theta + (x - m) * e) * e
        },
        0.0,
        t_max,
        tol,
    )?;
    let d2 = integrate(|t: f64| (-(r + 2.0 * rho) * t).exp(), 0.0, t_max, tol)?;
    Ok(Jet {
        v: v.value,
        d1: d1.value,
        d2: d2.value,
    })
}

/// The control problem with closed-form pairs and resolvent.
pub fn ou_problem(spec: &OuSpec) -> Result<ControlProblem> {
    let model = ou_model(spec)?;
    let theta = spec.theta;
    let mut cost = CostModel::constant(
        Arc::new(move |x| 0.5 * (x - theta).powi(2)),
        Arc::new(move |x| x - theta),
        spec.c1,
        spec.c2,
        &model,
    );
    cost.x_tilde = Some(spec.x_tilde());
    let base = cylinder_pair(spec, -spec.r / spec.rho, &model, Tag::Base)?;
    let hat = cylinder_pair(spec, -(spec.r + spec.rho) / spec.rho, &model, Tag::Hat)?;
    let s = *spec;
    Ok(ControlProblem::new(model, cost, base, hat)?
        .with_holding_resolvent(Arc::new(move |x| ou_holding_resolvent(&s, x))))
}

/// Optimal band for the OU case.
pub fn solve_ou_band(spec: &OuSpec) -> Result<BandSolution> {
    ou_problem(spec)?.solve()
}

/// Common cost `c = c₁ = c₂` whose optimal band has width
/// `target_b − target_a` (to 1e-4).
pub fn calibrate_costs(spec: &OuSpec, target_a: f64, target_b: f64) -> Result<f64> {
    if !(target_a < target_b) {
        return Err(Error::Calibration(format!(
            "need target_a < target_b, got ({target_a}, {target_b})"
        )));
    }
    let target = target_b - target_a;
    let gap = |ln_c: f64| -> Result<f64> {
        let sol = solve_ou_band(&spec.with_cost(ln_c.exp()))?;
        Ok(sol.b_star - sol.a_star - target)
    };
    let start = 0.1f64.ln();
    let g0 = gap(start)?;
    let step = if g0 > 0.0 { -0.5 } else { 0.5 };
    let (lo, hi) = expand_bracket(gap, start, step, start + step * 80.0, 60)
        .map_err(|e| Error::Calibration(format!("no cost reaches width {target}: {e}")))?;
    let ln_c = if lo == hi {
        lo
    } else {
        brent(gap, lo, hi, BrentOptions { xtol: 1e-10, max_iter: 200 })?
    };
    let c = ln_c.exp();
    let err = gap(ln_c)?.abs();
    if err > 1e-4 {
        return Err(Error::Calibration(format!(
            "calibrated c = {c} misses the target width by {err}"
        )));
    }
    Ok(c)
}

/// Parameter varied by [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    M,
    Sigma,
    C1,
    C2,
    Theta,
}

impl SweepParam {
    pub fn apply(&self, spec: &OuSpec, v: f64) -> OuSpec {
        let mut s = *spec;
        match self {
            Self::M => s.m = v,
            Self::Sigma => s.sigma = v,
            Self::C1 => s.c1 = v,
            Self::C2 => s.c2 = v,
            Self::Theta => s.theta = v,
        }
        s
    }

    /// Expected signs of `(da*, db*)` as the parameter increases.
    pub fn expected_directions(&self) -> (f64, f64) {
        match self {
            Self::M => (-1.0, -1.0),
            Self::Sigma | Self::C1 | Self::C2 => (-1.0, 1.0),
            Self::Theta => (1.0, 1.0),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::M => "m",
            Self::Sigma => "sigma",
            Self::C1 => "c1",
            Self::C2 => "c2",
            Self::Theta => "theta",
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "m" => Ok(Self::M),
            "sigma" => Ok(Self::Sigma),
            "c1" => Ok(Self::C1),
            "c2" => Ok(Self::C2),
            "theta" => Ok(Self::Theta),
            other => Err(Error::Config(format!(
                "unknown sweep parameter '{other}' (expected m, sigma, c1, c2, theta)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub a_star: f64,
    pub b_star: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter: SweepParam,
    pub rows: Vec<SweepRow>,
    /// `a*` moves in the expected direction between every consecutive pair.
    pub a_verdict: bool,
    pub b_verdict: bool,
}

/// Solve the band for each value (in parallel) and check the expected
/// monotone dependence on the parameter.
pub fn sweep(spec: &OuSpec, parameter: SweepParam, values: &[f64]) -> Result<SweepResult> {
    if values.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(domain("sweep values must be strictly increasing"));
    }
    let rows: Vec<SweepRow> = values
        .par_iter()
        .map(|&v| match solve_ou_band(&parameter.apply(spec, v)) {
            Ok(sol) => SweepRow {
                value: v,
                a_star: sol.a_star,
                b_star: sol.b_star,
                error: None,
            },
            Err(e) => SweepRow {
                value: v,
                a_star: f64::NAN,
                b_star: f64::NAN,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let (da, db) = parameter.expected_directions();
    let ok = rows.iter().all(|r| r.error.is_none());
    let a_verdict = ok && rows.windows(2).all(|w| da * (w[1].a_star - w[0].a_star) > 0.0);
    let b_verdict = ok && rows.windows(2).all(|w| db * (w[1].b_star - w[0].b_star) > 0.0);
    Ok(SweepResult {
        parameter,
        rows,
        a_verdict,
        b_verdict,
    })
}

impl SweepResult {
    /// CSV `value,a_star,b_star`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["value", "a_star", "b_star"])?;
        for r in &self.rows {
            wr.write_record([fmt9(r.value), fmt9(r.a_star), fmt9(r.b_star)])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(parameter: SweepParam, r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut rows = Vec::new();
        for rec in rd.deserialize() {
            let (value, a_star, b_star): (f64, f64, f64) = rec?;
            rows.push(SweepRow {
                value,
                a_star,
                b_star,
                error: None,
            });
        }
        let (da, db) = parameter.expected_directions();
        let a_verdict = rows.windows(2).all(|w| da * (w[1].a_star - w[0].a_star) > 0.0);
        let b_verdict = rows.windows(2).all(|w| db * (w[1].b_star - w[0].b_star) > 0.0);
        Ok(Self {
            parameter,
            rows,
            a_verdict,
            b_verdict,
        })
    }
}

/// Nine significant digits.
pub fn fmt9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    if (-5..9).contains(&mag) {
        let decimals = (8 - mag).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{v:.8e}")
    }
}

/// Estimated OU parameters with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuFit {
    pub rho: f64,
    pub m: f64,
    pub sigma: f64,
    pub se_rho: f64,
    pub se_m: f64,
    pub se_sigma: f64,
    /// AR(1) coefficient `e^{−ρΔ}`.
    pub phi: f64,
    pub dt: f64,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Exact Gaussian maximum likelihood for the AR(1) form of the sampled OU
/// log-rate, mapped back to `(ρ, m, σ)`.
///
/// The stationary likelihood (including the first observation) is maximised
/// over `φ` with `m` and the innovation variance concentrated out. Standard
/// errors come from the regression's observed information and the delta
/// method.
pub fn fit_ou_mle(series: &[(f64, f64)]) -> Result<OuFit> {
    let n = series.len();
    if n < 30 {
        return Err(Error::Ingestion(format!("need at least 30 observations, got {n}")));
    }
    let dt = series[1].0 - series[0].0;
    if !(dt > 0.0) {
        return Err(Error::Ingestion(format!("time step must be positive, got {dt}")));
    }
    for (i, w) in series.windows(2).enumerate() {
        let d = w[1].0 - w[0].0;
        if ((d - dt) / dt).abs() > 1e-9 {
            return Err(Error::Ingestion(format!(
                "non-uniform spacing at row {}: {d} vs {dt}",
                i + 1
            )));
        }
    }
    let mut y = Vec::with_capacity(n);
    for (i, &(_, rate)) in series.iter().enumerate() {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::Ingestion(format!("rate must be positive, row {i}: {rate}")));
        }
        y.push(rate.ln());
    }
    let big_n = (n - 1) as f64;
    let mean0 = y[..n - 1].iter().sum::<f64>() / big_n;
    let mean1 = y[1..].iter().sum::<f64>() / big_n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for t in 1..n {
        sxx += (y[t - 1] - mean0).powi(2);
        sxy += (y[t - 1] - mean0) * (y[t] - mean1);
    }
    if sxx == 0.0 {
        return Err(Error::Calibration(
            "degenerate series: zero variance, σ̂ = 0 and mean reversion is not identified".into(),
        ));
    }

    // concentrated exact likelihood in φ
    let concentrated = |phi: f64| -> (f64, f64, f64) {
        let w0 = 1.0 - phi * phi;
        let mut num = w0 * y[0];
        for t in 1..n {
            num += (1.0 - phi) * (y[t] - phi * y[t - 1]);
        }
        let m = num / (w0 + big_n * (1.0 - phi).powi(2));
        let mut ss = w0 * (y[0] - m).powi(2);
        for t in 1..n {
            ss += (y[t] - m - phi * (y[t - 1] - m)).powi(2);
        }
        let s2 = ss / (big_n + 1.0);
        (0.5 * w0.ln() - 0.5 * (big_n + 1.0) * s2.ln(), m, s2)
    };
    let phi_ols = (sxy / sxx).clamp(-1.0 + 1e-12, 1.0 - 1e-12);
    // golden section on t = atanh φ
    let t0 = phi_ols.atanh();
    let (mut lo, mut hi) = (t0 - 3.0, t0 + 3.0);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let f = |t: f64| concentrated(t.tanh()).0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if (hi - lo).abs() < 1e-13 * (1.0 + t0.abs()) {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        }
    }
    let phi = (0.5 * (lo + hi)).tanh();
    let (_, m, s2) = concentrated(phi);
    if s2 == 0.0 {
        return Err(Error::Calibration("degenerate series: σ̂ = 0".into()));
    }

    let mut warning = None;
    if !(phi > 0.0 && phi < 1.0) {
        warning = Some(format!(
            "AR(1) coefficient {phi} outside (0, 1): mean reversion not identified"
        ));
    }
    let rho = -phi.ln() / dt;
    let sigma2 = 2.0 * rho * s2 / (1.0 - phi * phi);
    let sigma = sigma2.sqrt();

    // observed information of the regression y_t = c + φ y_{t−1} + ε
    let var_phi = s2 / sxx;
    let c = m * (1.0 - phi);
    let var_c = s2 * (1.0 / big_n + mean0 * mean0 / sxx);
    let cov_cphi = -mean0 * s2 / sxx;
    let var_s2 = 2.0 * s2 * s2 / big_n;
    let drho = -1.0 / (phi * dt);
    let se_rho = drho.abs() * var_phi.sqrt();
    let dm_dc = 1.0 / (1.0 - phi);
    let dm_dphi = c / (1.0 - phi).powi(2);
    let var_m = dm_dc * dm_dc * var_c + dm_dphi * dm_dphi * var_phi + 2.0 * dm_dc * dm_dphi * cov_cphi;
    let q = 1.0 - phi * phi;
    let dsig2_ds2 = 2.0 * rho / q;
    let dsig2_dphi = 2.0 * s2 * (drho * q + 2.0 * phi * rho) / (q * q);
    let var_sig2 = dsig2_ds2 * dsig2_ds2 * var_s2 + dsig2_dphi * dsig2_dphi * var_phi;
    let se_sigma = var_sig2.sqrt() / (2.0 * sigma);
    Ok(OuFit {
        rho,
        m,
        sigma,
        se_rho,
        se_m: var_m.max(0.0).sqrt(),
        se_sigma,
        phi,
        dt,
        n,
        warning,
    })
}

/// Read a `time,rate` CSV.
pub fn read_rate_series(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut rd = csv::Reader::from_path(path)?;
    let headers = rd.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "time" || &headers[1] != "rate" {
        return Err(Error::Ingestion(format!(
            "expected header 'time,rate', got '{}'",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in rd.deserialize().enumerate() {
        let row: (f64, f64) = rec.map_err(|e| Error::Ingestion(format!("row {}: {e}", i + 1)))?;
        out.push(row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::resolvent;

    fn spec() -> OuSpec {
        OuSpec::default()
    }

    // polynomial oracle for the resolvent of ½(x − θ)²
    fn rh_poly(s: &OuSpec, x: f64) -> (f64, f64, f64) {
        let OuSpec {
            rho, m, sigma, r, theta, ..
        } = *s;
        let d = m - theta;
        let y = x - m;
        let v = 0.5
            * (d * d / r + 2.0 * d * y / (r + rho) + y * y / (r + 2.0 * rho)
                + sigma * sigma / (2.0 * rho) * (1.0 / r - 1.0 / (r + 2.0 * rho)));
        let d1 = d / (r + rho) + y / (r + 2.0 * rho);
        (v, d1, 1.0 / (r + 2.0 * rho))
    }

    #[test]
    fn holding_resolvent_matches_polynomial() {
        let mut s = spec();
        s.theta += 0.013;
        for &x in &[1.9, 1.98, 2.0, 2.03, 2.2] {
            let j = ou_holding_resolvent(&s, x).unwrap();
            let (v, d1, d2) = rh_poly(&s, x);
            assert!(((j.v - v) / v).abs() < 1e-10, "{x}: {} vs {v}", j.v);
            assert!((j.d1 - d1).abs() < 1e-9 * (1.0 + d1.abs()));
            assert!(((j.d2 - d2) / d2).abs() < 1e-10);
        }
    }

    #[test]
    fn closed_form_resolvent_agrees_with_green_quadrature() {
        let s = spec();
        let model = ou_model(&s).unwrap();
        let base = ou_base_pair(&s).unwrap();
        for i in 0..10 {
            let x = s.m - 0.1 + 0.02 * i as f64;
            let q = resolvent(&model, &base, |y| s.h(y), x, Tolerance::new(1e-16, 1e-12))
                .unwrap()
                .value;
            let c = ou_holding_resolvent(&s, x).unwrap().v;
            assert!(((q - c) / c).abs() < 1e-8, "x = {x}: {q} vs {c}");
        }
    }

    #[test]
    fn scale_and_speed_closed_forms() {
        let s = OuSpec {
            m: 2.01,
            ..spec()
        };
        let model = ou_model(&s).unwrap();
        assert_eq!(model.scale_density(s.m, Tag::Hat).unwrap(), 1.0);
        let x = 2.03;
        let want = (0.001f64 * 4e-4 / 2.25e-4).exp();
        assert!((model.scale_density(x, Tag::Hat).unwrap() - want).abs() < 1e-12 * want);
        let sp = model.speed_density(2.05, Tag::Hat).unwrap();
        let want = 2.0 / 2.25e-4 * (-0.001f64 * 0.04f64.powi(2) / 2.25e-4).exp();
        assert!((sp - want).abs() < 1e-10 * want);
        // same with quadrature of the drift
        let plain = DiffusionModel::new(
            Arc::new(move |x| 0.001 * (2.01 - x)),
            Arc::new(|_| -0.001),
            Arc::new(|_| 0.015),
            Arc::new(|_| 0.0),
            f64::NEG_INFINITY,
            f64::INFINITY,
            0.005,
            2.01,
        )
        .unwrap();
        let q = plain.scale_density(x, Tag::Hat).unwrap();
        assert!((q - model.scale_density(x, Tag::Hat).unwrap()).abs() < 1e-12);
        let d = 0.037;
        assert!((model.speed_density(2.01 + d, Tag::Hat).unwrap() - model.speed_density(2.01 - d, Tag::Hat).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn hat_pair_shape() {
        let s = spec();
        let pair = ou_hat_pair(&s).unwrap();
        let model = ou_model(&s).unwrap();
        let d0 = pcf_scaled(CylinderOrder::new(-(s.r + s.rho) / s.rho).unwrap(), 0.0).unwrap();
        assert!((pair.psi(s.m).unwrap() - d0).abs() < 1e-14 * d0);
        assert!((pair.phi(s.m).unwrap() - d0).abs() < 1e-14 * d0);
        let sd = s.stationary_sd();
        let w0 = pair.wronskian();
        let mut prev = 0.0;
        for i in 0..200 {
            let x = s.m - 6.0 * sd + 12.0 * sd * i as f64 / 199.0;
            let p = pair.psi(x).unwrap();
            assert!(p > prev);
            prev = p;
            let w = pair.wronskian_at(&model, x).unwrap();
            assert!(((w - w0) / w0).abs() < 1e-6);
        }
    }

    #[test]
    fn symmetric_band_is_centred() {
        let sol = solve_ou_band(&spec()).unwrap();
        assert!((sol.a_star + sol.b_star - 2.0 * spec().m).abs() < 1e-8);
    }

    #[test]
    fn fmt9_digits() {
        assert_eq!(fmt9(1.98707123456), "1.98707123");
        assert_eq!(fmt9(0.0335), "0.0335");
        assert_eq!(fmt9(31.1), "31.1");
        assert_eq!(fmt9(1.5e-7), "1.50000000e-7");
    }

    #[test]
    fn mle_rejects_bad_input() {
        let short: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 7.46)).collect();
        assert!(matches!(fit_ou_mle(&short), Err(Error::Ingestion(_))));
        let constant: Vec<(f64, f64)> = (0..100).map(|i| (i as f64, 7.46)).collect();
        assert!(matches!(fit_ou_mle(&constant), Err(Error::Calibration(_))));
        let mut uneven: Vec<(f64, f64)> = (0..100).map(|i| (i as f64, 7.0 + (i % 3) as f64)).collect();
        uneven[50].0 += 0.5;
        assert!(matches!(fit_ou_mle(&uneven), Err(Error::Ingestion(_))));
        let mut neg: Vec<(f64, f64)> = (0..100).map(|i| (i as f64, 7.0 + (i % 3) as f64)).collect();
        neg[3].1 = -1.0;
        assert!(matches!(fit_ou_mle(&neg), Err(Error::Ingestion(_))));
    }
}
