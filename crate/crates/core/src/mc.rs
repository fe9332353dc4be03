//! Monte Carlo for the OU exchange rate: two-sided reflection at a band,
//! discounted cost estimates, perturbation gaps against the analytic value,
//! the stopping-game estimate of `v′`, and absorbed exit statistics.
//!
//! Every path `i` draws its normals from a ChaCha8 stream `(seed, i)`, so
//! results do not depend on thread count or scheduling.
//!
//! Reflection is Euler–Maruyama followed by projection onto the band. With
//! `boundary_correction` on, reflection and absorption use the band shrunk
//! by `β σ √dt` on each side (`β = −ζ(½)/√(2π) ≈ 0.5826`), which removes the
//! leading `O(√dt)` bias of discrete monitoring.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::ou::{fmt9, solve_ou_band, ou_problem, OuSpec};

/// `−ζ(½)/√(2π)`.
pub const BOUNDARY_SHIFT: f64 = 0.582_597_157_939_010_6;

/// How the infinite-horizon cost is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostMethod {
    /// Each path runs to `horizon`; the discarded tail is bounded by
    /// `e^{−r·horizon} sup h / r`.
    Horizon,
    /// Each path is one regeneration cycle: from `x0` until it has been
    /// pushed at least once and crosses back over `x0`. The value is
    /// `E[C] / (1 − E[e^{−rT}])`.
    Regenerative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Step in years.
    pub dt: f64,
    /// Path length in years (for regenerative cycles, a cap per cycle).
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Pair path `2k + 1` with the negated normals of path `2k`.
    pub antithetic: bool,
    pub boundary_correction: bool,
    pub method: CostMethod,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            horizon: 2764.0,
            n_paths: 10_000,
            seed: 42,
            antithetic: false,
            boundary_correction: true,
            method: CostMethod::Regenerative,
        }
    }
}

impl SimConfig {
    /// Horizon with `e^{−r·horizon} = 1e-6`.
    pub fn horizon_for(r: f64) -> f64 {
        6.0 * std::f64::consts::LN_10 / r
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(domain(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon >= self.dt) {
            return Err(domain(format!(
                "horizon {} shorter than dt {}",
                self.horizon, self.dt
            )));
        }
        if self.n_paths == 0 {
            return Err(domain("n_paths must be positive"));
        }
        if self.antithetic && self.n_paths % 2 == 1 {
            return Err(domain("antithetic sampling needs an even number of paths"));
        }
        Ok(())
    }

    fn shift(&self, sigma: f64) -> f64 {
        if self.boundary_correction {
            BOUNDARY_SHIFT * sigma * self.dt.sqrt()
        } else {
            0.0
        }
    }

}

struct Noise {
    rng: ChaCha8Rng,
    sign: f64,
}

impl Noise {
    fn new(seed: u64, path: usize, antithetic: bool) -> Self {
        let (stream, sign) = if antithetic {
            ((path / 2) as u64, if path % 2 == 1 { -1.0 } else { 1.0 })
        } else {
            (path as u64, 1.0)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, sign }
    }

    #[inline]
    fn next(&mut self) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        self.sign * z
    }
}

#[derive(Clone, Copy)]
struct Euler {
    rho: f64,
    m: f64,
    vol: f64,
    dt: f64,
}

impl Euler {
    fn new(spec: &OuSpec, dt: f64) -> Self {
        Self {
            rho: spec.rho,
            m: spec.m,
            vol: spec.sigma * dt.sqrt(),
            dt,
        }
    }

    #[inline]
    fn step(&self, x: f64, z: f64) -> f64 {
        x + self.rho * (self.m - x) * self.dt + self.vol * z
    }
}

fn check_inputs(spec: &OuSpec, band: (f64, f64), x0: f64, config: &SimConfig) -> Result<()> {
    config.validate()?;
    let ok = [spec.rho, spec.m, spec.sigma, spec.r, spec.c1, spec.c2, spec.theta, x0]
        .iter()
        .all(|v| v.is_finite());
    if !ok || spec.sigma < 0.0 || spec.rho < 0.0 || !(spec.r > 0.0) {
        return Err(domain("simulation needs finite inputs, sigma, rho ≥ 0 and r > 0"));
    }
    let (a, b) = band;
    if !(a < b) {
        return Err(domain(format!("band needs a < b, got ({a}, {b})")));
    }
    if 2.0 * config.shift(spec.sigma) >= b - a {
        return Err(domain(format!(
            "band ({a}, {b}) is narrower than the boundary correction at dt = {}",
            config.dt
        )));
    }
    Ok(())
}

fn non_finite(path: usize, t: f64) -> Error {
    Error::Simulation(format!("non-finite state on path {path} at t = {t}"))
}

/// Per-path totals of one reflected path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub x_final: f64,
    /// Undiscounted total push up at `a` (including any initial jump).
    pub xi_total: f64,
    /// Undiscounted total push down at `b`.
    pub eta_total: f64,
    /// `∫ e^{−rs} h(X_s) ds`.
    pub holding: f64,
    /// `∮ e^{−rs} dξ`.
    pub xi_discounted: f64,
    /// `∮ e^{−rs} dη`.
    pub eta_discounted: f64,
    /// `1 − e^{−rT}` at the end of the path.
    pub discount_gap: f64,
    pub steps: u64,
    /// The path hit the horizon cap before completing its cycle.
    pub capped: bool,
}

impl PathSummary {
    pub fn cost(&self, c1: f64, c2: f64) -> f64 {
        self.holding + c1 * self.xi_discounted + c2 * self.eta_discounted
    }
}

/// One reflected trajectory point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: f64,
    #[serde(rename = "X")]
    pub x: f64,
    pub xi: f64,
    pub eta: f64,
}

struct Reflected<'a, H: Fn(f64) -> f64> {
    euler: Euler,
    lo: f64,
    hi: f64,
    r: f64,
    h: &'a H,
}

impl<H: Fn(f64) -> f64> Reflected<'_, H> {
    /// Run one path. `cycle_at` ends the path at the first crossing of that
    /// level after a push; otherwise it runs for `n_steps`.
    fn run(
        &self,
        x0: f64,
        noise: &mut Noise,
        n_steps: u64,
        cycle_at: Option<f64>,
        mut record: impl FnMut(TracePoint),
        path: usize,
    ) -> Result<PathSummary> {
        let dt = self.euler.dt;
        let decay = (-self.r * dt).exp();
        let mut s = PathSummary {
            x_final: x0,
            xi_total: 0.0,
            eta_total: 0.0,
            holding: 0.0,
            xi_discounted: 0.0,
            eta_discounted: 0.0,
            discount_gap: 0.0,
            steps: 0,
            capped: false,
        };
        // initial jump onto the band
        let mut x = x0;
        if x < self.lo {
            s.xi_total = self.lo - x;
            s.xi_discounted = s.xi_total;
            x = self.lo;
        } else if x > self.hi {
            s.eta_total = x - self.hi;
            s.eta_discounted = s.eta_total;
            x = self.hi;
        }
        record(TracePoint {
            t: 0.0,
            x,
            xi: s.xi_total,
            eta: s.eta_total,
        });
        let mut disc = 1.0;
        let mut hx = (self.h)(x);
        let mut pushed = false;
        let mut n = 0u64;
        while n < n_steps {
            let pre = self.euler.step(x, noise.next());
            let (next, dxi, deta) = if pre < self.lo {
                (self.lo, self.lo - pre, 0.0)
            } else if pre > self.hi {
                (self.hi, 0.0, pre - self.hi)
            } else {
                (pre, 0.0, 0.0)
            };
            if !next.is_finite() {
                return Err(non_finite(path, n as f64 * dt));
            }
            if let Some(level) = cycle_at {
                if pushed && dxi == 0.0 && deta == 0.0 && (x - level) * (next - level) <= 0.0 && x != level {
                    // end the cycle exactly at the crossing
                    let f = (level - x) / (next - x);
                    let dc = disc * (-self.r * f * dt).exp();
                    s.holding += 0.5 * f * dt * (disc * hx + dc * (self.h)(level));
                    s.steps = n + 1;
                    s.discount_gap = -(-self.r * ((n as f64 + f) * dt)).exp_m1();
                    s.x_final = level;
                    return Ok(s);
                }
            }
            n += 1;
            let dn = disc * decay;
            let hn = (self.h)(next);
            s.holding += 0.5 * dt * (disc * hx + dn * hn);
            if dxi > 0.0 {
                s.xi_total += dxi;
                s.xi_discounted += dn * dxi;
                pushed = true;
            }
            if deta > 0.0 {
                s.eta_total += deta;
                s.eta_discounted += dn * deta;
                pushed = true;
            }
            x = next;
            disc = dn;
            hx = hn;
            record(TracePoint {
                t: n as f64 * dt,
                x,
                xi: s.xi_total,
                eta: s.eta_total,
            });
        }
        s.steps = n;
        s.x_final = x;
        s.discount_gap = 1.0 - disc;
        s.capped = cycle_at.is_some();
        Ok(s)
    }
}

fn n_steps(config: &SimConfig) -> u64 {
    (config.horizon / config.dt).round().max(1.0) as u64
}

/// Reflected paths of the OU process on `[a, b]` for `config.horizon` years.
pub fn simulate_reflected(
    spec: &OuSpec,
    band: (f64, f64),
    x0: f64,
    config: &SimConfig,
) -> Result<Vec<PathSummary>> {
    simulate_reflected_with(spec, band, x0, config, |x| spec.h(x))
}

fn simulate_reflected_with<H: Fn(f64) -> f64 + Sync>(
    spec: &OuSpec,
    band: (f64, f64),
    x0: f64,
    config: &SimConfig,
    h: H,
) -> Result<Vec<PathSummary>> {
    check_inputs(spec, band, x0, config)?;
    let shift = config.shift(spec.sigma);
    let kernel = Reflected {
        euler: Euler::new(spec, config.dt),
        lo: band.0 + shift,
        hi: band.1 - shift,
        r: spec.r,
        h: &h,
    };
    let steps = n_steps(config);
    (0..config.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut noise = Noise::new(config.seed, i, config.antithetic);
            kernel.run(x0, &mut noise, steps, None, |_| {}, i)
        })
        .collect()
}

/// Trajectories of the first `n.min(10)` paths, thinned to at most
/// `max_rows` points per path.
pub fn trace_paths(
    spec: &OuSpec,
    band: (f64, f64),
    x0: f64,
    config: &SimConfig,
    n: usize,
    max_rows: usize,
) -> Result<Vec<Vec<TracePoint>>> {
    check_inputs(spec, band, x0, config)?;
    let shift = config.shift(spec.sigma);
    let h = |x: f64| spec.h(x);
    let kernel = Reflected {
        euler: Euler::new(spec, config.dt),
        lo: band.0 + shift,
        hi: band.1 - shift,
        r: spec.r,
        h: &h,
    };
    let steps = n_steps(config);
    let every = (steps / max_rows.max(1) as u64).max(1);
    (0..n.min(10).min(config.n_paths))
        .map(|i| {
            let mut noise = Noise::new(config.seed, i, config.antithetic);
            let mut rows = Vec::new();
            let mut k = 0u64;
            kernel.run(
                x0,
                &mut noise,
                steps,
                None,
                |p| {
                    if k.is_multiple_of(every) {
                        rows.push(p);
                    }
                    k += 1;
                },
                i,
            )?;
            Ok(rows)
        })
        .collect()
}

/// CSV `t,X,xi,eta`; paths follow each other, each restarting at `t = 0`.
pub fn write_trace_csv<W: std::io::Write>(paths: &[Vec<TracePoint>], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["t", "X", "xi", "eta"])?;
    for p in paths {
        for q in p {
            wr.write_record([fmt9(q.t), fmt9(q.x), fmt9(q.xi), fmt9(q.eta)])?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Exit side and time of absorbed (unreflected) paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitStats {
    pub p_lower: f64,
    pub p_lower_stderr: f64,
    /// Mean exit time in years.
    pub mean_time: f64,
    pub mean_time_stderr: f64,
    /// Paths still inside the band at the horizon (counted as exiting
    /// at the horizon on neither side).
    pub unexited: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub cost_mean: f64,
    pub cost_stderr: f64,
    pub truncation_bound: f64,
    /// Expected discounted total push up, `E ∮ e^{−rs} dξ`.
    pub xi_total_mean: f64,
    /// Expected discounted total push down, `E ∮ e^{−rs} dη`.
    pub eta_total_mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_stats: Option<ExitStats>,
    pub band: (f64, f64),
    pub x0: f64,
    pub config: SimConfig,
    /// Regeneration cycles that hit the per-cycle horizon cap.
    pub capped_paths: usize,
}

impl SimReport {
    /// `mean ± 3·stderr`.
    pub fn interval(&self) -> (f64, f64) {
        (
            self.cost_mean - 3.0 * self.cost_stderr,
            self.cost_mean + 3.0 * self.cost_stderr,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Mean and standard error over groups (antithetic pairs are averaged).
fn mean_stderr(values: &[f64], antithetic: bool) -> (f64, f64) {
    let grouped: Vec<f64> = if antithetic {
        values.chunks(2).map(|c| 0.5 * (c[0] + c[1])).collect()
    } else {
        values.to_vec()
    };
    let n = grouped.len() as f64;
    let mean = grouped.iter().sum::<f64>() / n;
    if grouped.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = grouped.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Ratio `Σy / Σx` with a delta-method standard error.
fn ratio_stderr(y: &[f64], x: &[f64], antithetic: bool) -> (f64, f64) {
    let pair = |v: &[f64]| -> Vec<f64> {
        if antithetic {
            v.chunks(2).map(|c| c[0] + c[1]).collect()
        } else {
            v.to_vec()
        }
    };
    let (y, x) = (pair(y), pair(x));
    let n = y.len() as f64;
    let sx: f64 = x.iter().sum();
    let ratio = y.iter().sum::<f64>() / sx;
    if y.len() < 2 {
        return (ratio, f64::INFINITY);
    }
    let var = y
        .iter()
        .zip(&x)
        .map(|(yi, xi)| (yi - ratio * xi).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    (ratio, (var / n).sqrt() / (sx / n))
}

/// Expected discounted cost of reflecting at `band` from `x0`.
pub fn estimate_cost(spec: &OuSpec, band: (f64, f64), x0: f64, config: &SimConfig) -> Result<SimReport> {
    let h = |x: f64| spec.h(x);
    estimate_cost_with(spec, band, x0, config, h, spec.c1, spec.c2)
}

/// [`estimate_cost`] with an arbitrary holding cost and constant marginal
/// costs.
pub fn estimate_cost_with<H: Fn(f64) -> f64 + Sync>(
    spec: &OuSpec,
    band: (f64, f64),
    x0: f64,
    config: &SimConfig,
    h: H,
    c1: f64,
    c2: f64,
) -> Result<SimReport> {
    check_inputs(spec, band, x0, config)?;
    let shift = config.shift(spec.sigma);
    let (lo, hi) = (band.0 + shift, band.1 - shift);
    let sup_h = (h(band.0).max(h(band.1))).max(h(0.5 * (band.0 + band.1)));
    let truncation_bound = (-spec.r * config.horizon).exp() * sup_h / spec.r;

    // start outside the band: pay the jump, then regenerate at the boundary
    let (start, jump_cost) = if x0 < lo {
        (lo, c1 * (lo - x0))
    } else if x0 > hi {
        (hi, c2 * (x0 - hi))
    } else {
        (x0, 0.0)
    };
    let kernel = Reflected {
        euler: Euler::new(spec, config.dt),
        lo,
        hi,
        r: spec.r,
        h: &h,
    };
    let steps = n_steps(config);
    let regenerative = config.method == CostMethod::Regenerative;
    // a cycle from a boundary point ends at the first crossing back over a
    // level just inside it
    let level = if regenerative {
        Some(start.clamp(lo + 1e-12 * (hi - lo), hi - 1e-12 * (hi - lo)))
    } else {
        None
    };
    let paths: Vec<PathSummary> = (0..config.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut noise = Noise::new(config.seed, i, config.antithetic);
            kernel.run(level.unwrap_or(start), &mut noise, steps, level, |_| {}, i)
        })
        .collect::<Result<_>>()?;
    let capped_paths = paths.iter().filter(|p| p.capped).count();
    let costs: Vec<f64> = paths.iter().map(|p| p.cost(c1, c2)).collect();
    let xi: Vec<f64> = paths.iter().map(|p| p.xi_discounted).collect();
    let eta: Vec<f64> = paths.iter().map(|p| p.eta_discounted).collect();
    let (cost_mean, cost_stderr, xi_mean, eta_mean) = if regenerative {
        let gaps: Vec<f64> = paths.iter().map(|p| p.discount_gap).collect();
        let (c, se) = ratio_stderr(&costs, &gaps, config.antithetic);
        let (x, _) = ratio_stderr(&xi, &gaps, config.antithetic);
        let (e, _) = ratio_stderr(&eta, &gaps, config.antithetic);
        (c, se, x, e)
    } else {
        let (c, se) = mean_stderr(&costs, config.antithetic);
        (
            c,
            se,
            mean_stderr(&xi, config.antithetic).0,
            mean_stderr(&eta, config.antithetic).0,
        )
    };
    let (xi_jump, eta_jump) = if x0 < lo {
        (lo - x0, 0.0)
    } else if x0 > hi {
        (0.0, x0 - hi)
    } else {
        (0.0, 0.0)
    };
    Ok(SimReport {
        cost_mean: cost_mean + jump_cost,
        cost_stderr,
        truncation_bound,
        xi_total_mean: xi_mean + xi_jump,
        eta_total_mean: eta_mean + eta_jump,
        exit_stats: None,
        band,
        x0,
        config: *config,
        capped_paths,
    })
}

/// One row of [`policy_gap`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub label: String,
    pub band: (f64, f64),
    pub cost_mean: f64,
    pub cost_stderr: f64,
    /// Analytic cost of reflecting at this band.
    pub band_cost: f64,
    /// `cost_mean − v(x0)`.
    pub gap: f64,
}

/// Perturbation of the optimal band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Perturbation {
    /// Scale the width about the centre by `1 + f`.
    Width(f64),
    Shift(f64),
    /// Absolute `(Δa, Δb)`.
    Offsets(f64, f64),
}

impl Perturbation {
    pub fn apply(&self, (a, b): (f64, f64)) -> (f64, f64) {
        match *self {
            Self::Width(f) => {
                let c = 0.5 * (a + b);
                let h = 0.5 * (b - a) * (1.0 + f);
                (c - h, c + h)
            }
            Self::Shift(d) => (a + d, b + d),
            Self::Offsets(da, db) => (a + da, b + db),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Self::Width(f) => format!("width {:+}%", f * 100.0),
            Self::Shift(d) => format!("shift {d:+}"),
            Self::Offsets(da, db) => format!("offsets ({da:+}, {db:+})"),
        }
    }

    /// `±10%`, `±25%` width and `±0.01` shift.
    pub fn standard_set() -> Vec<Self> {
        vec![
            Self::Width(0.10),
            Self::Width(-0.10),
            Self::Width(0.25),
            Self::Width(-0.25),
            Self::Shift(0.01),
            Self::Shift(-0.01),
        ]
    }
}

/// Estimated cost of the optimal band and of each perturbation, compared
/// with the analytic optimal value `v(x0)`. The first row is the optimal
/// band itself.
pub fn policy_gap(
    spec: &OuSpec,
    x0: f64,
    perturbations: &[Perturbation],
    config: &SimConfig,
) -> Result<Vec<GapRow>> {
    let sol = solve_ou_band(spec)?;
    let v = sol.u(x0)?;
    let optimal = (sol.a_star, sol.b_star);
    let problem = ou_problem(spec)?;
    let mut bands = vec![("optimal".to_string(), optimal)];
    for p in perturbations {
        let band = p.apply(optimal);
        if !(band.0 < band.1) {
            return Err(domain(format!("perturbation {} collapses the band", p.label())));
        }
        bands.push((p.label(), band));
    }
    bands
        .into_iter()
        .map(|(label, band)| {
            let rep = estimate_cost(spec, band, x0, config)?;
            let band_cost = problem.policy(band.0, band.1)?.value(x0)?.v;
            Ok(GapRow {
                label,
                band,
                cost_mean: rep.cost_mean,
                cost_stderr: rep.cost_stderr,
                band_cost,
                gap: rep.cost_mean - v,
            })
        })
        .collect()
}

/// Estimate with standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Monte Carlo estimate of `v′(x)` from the stopping game: the unreflected
/// hat process (for OU the same dynamics) killed at rate `r + ρ`, stopped at
/// the first exit from `band`, with running payoff `h′` and terminal
/// payoffs `−c₁` at `a`, `+c₂` at `b`.
pub fn dynkin_game_value(spec: &OuSpec, band: (f64, f64), x: f64, config: &SimConfig) -> Result<Estimate> {
    check_inputs(spec, band, x, config)?;
    if !(band.0 < x && x < band.1) {
        return Err(domain(format!("x = {x} must lie inside ({}, {})", band.0, band.1)));
    }
    let k = spec.r + spec.rho;
    let theta = spec.theta;
    let h_prime = |y: f64| y - theta;
    let (c1, c2) = (spec.c1, spec.c2);
    let payoffs = absorbed(spec, band, x, config, k, |side, disc, _| match side {
        Side::Lower => -disc * c1,
        Side::Upper => disc * c2,
        Side::None => 0.0,
    }, h_prime)?;
    let values: Vec<f64> = payoffs.iter().map(|p| p.value).collect();
    let (mean, stderr) = mean_stderr(&values, config.antithetic);
    Ok(Estimate { mean, stderr })
}

/// Exit side frequencies and mean exit time of absorbed paths from `x0`.
pub fn simulate_exit(spec: &OuSpec, band: (f64, f64), x0: f64, config: &SimConfig) -> Result<ExitStats> {
    check_inputs(spec, band, x0, config)?;
    if !(band.0 <= x0 && x0 <= band.1) {
        return Err(domain(format!("x0 = {x0} outside the band ({}, {})", band.0, band.1)));
    }
    let outcomes = absorbed(spec, band, x0, config, 0.0, |_, _, _| 0.0, |_| 0.0)?;
    let lower: Vec<f64> = outcomes
        .iter()
        .map(|o| if o.side == Side::Lower { 1.0 } else { 0.0 })
        .collect();
    let times: Vec<f64> = outcomes.iter().map(|o| o.time).collect();
    let (p, pse) = mean_stderr(&lower, config.antithetic);
    let (t, tse) = mean_stderr(&times, config.antithetic);
    Ok(ExitStats {
        p_lower: p,
        p_lower_stderr: pse,
        mean_time: t,
        mean_time_stderr: tse,
        unexited: outcomes.iter().filter(|o| o.side == Side::None).count(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Lower,
    Upper,
    None,
}

struct Absorbed {
    side: Side,
    time: f64,
    value: f64,
}

/// Paths stopped at the first exit from the (corrected) band, with running
/// reward `f` discounted at rate `k` and terminal reward `g(side, e^{−kτ}, τ)`.
fn absorbed<G, F>(
    spec: &OuSpec,
    band: (f64, f64),
    x0: f64,
    config: &SimConfig,
    k: f64,
    g: G,
    f: F,
) -> Result<Vec<Absorbed>>
where
    G: Fn(Side, f64, f64) -> f64 + Sync,
    F: Fn(f64) -> f64 + Sync,
{
    let shift = config.shift(spec.sigma);
    let (lo, hi) = (band.0 + shift, band.1 - shift);
    let euler = Euler::new(spec, config.dt);
    let dt = config.dt;
    let decay = (-k * dt).exp();
    let steps = n_steps(config);
    (0..config.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut noise = Noise::new(config.seed, i, config.antithetic);
            let mut x = x0;
            let mut disc = 1.0;
            let mut fx = f(x);
            let mut acc = 0.0;
            if x <= lo || x >= hi {
                let side = if x <= lo { Side::Lower } else { Side::Upper };
                return Ok(Absorbed {
                    side,
                    time: 0.0,
                    value: g(side, 1.0, 0.0),
                });
            }
            for n in 0..steps {
                let next = euler.step(x, noise.next());
                if !next.is_finite() {
                    return Err(non_finite(i, n as f64 * dt));
                }
                let side = if next <= lo {
                    Side::Lower
                } else if next >= hi {
                    Side::Upper
                } else {
                    Side::None
                };
                if side != Side::None {
                    let level = if side == Side::Lower { lo } else { hi };
                    let frac = (level - x) / (next - x);
                    let dc = disc * (-k * frac * dt).exp();
                    acc += 0.5 * frac * dt * (disc * fx + dc * f(level));
                    let tau = (n as f64 + frac) * dt;
                    return Ok(Absorbed {
                        side,
                        time: tau,
                        value: acc + g(side, dc, tau),
                    });
                }
                let dn = disc * decay;
                let fnext = f(next);
                acc += 0.5 * dt * (disc * fx + dn * fnext);
                x = next;
                disc = dn;
                fx = fnext;
            }
            Ok(Absorbed {
                side: Side::None,
                time: steps as f64 * dt,
                value: acc + g(Side::None, disc, steps as f64 * dt),
            })
        })
        .collect()
}

/// Exactly discretised OU log-rate sampled every `dt` years, returned as
/// `(time, rate)` with `rate = e^{X}`.
pub fn simulate_ou_series(spec: &OuSpec, x0: f64, dt: f64, n: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    if !(dt > 0.0 && spec.rho > 0.0 && spec.sigma >= 0.0) {
        return Err(domain("need dt > 0, rho > 0, sigma ≥ 0"));
    }
    let phi = (-spec.rho * dt).exp();
    let sd = spec.sigma * ((1.0 - phi * phi) / (2.0 * spec.rho)).sqrt();
    let mut noise = Noise::new(seed, 0, false);
    let mut x = x0;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        out.push((i as f64 * dt, x.exp()));
        x = spec.m + phi * (x - spec.m) + sd * noise.next();
    }
    Ok(out)
}

/// Write a `time,rate` CSV.
pub fn write_rate_series(path: &Path, series: &[(f64, f64)]) -> Result<()> {
    let mut wr = csv::Writer::from_path(path)?;
    wr.write_record(["time", "rate"])?;
    for &(t, r) in series {
        wr.write_record([format!("{t:.10}"), format!("{r:.12}")])?;
    }
    wr.flush()?;
    Ok(())
}
