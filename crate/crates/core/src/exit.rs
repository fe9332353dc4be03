//! Exit side and expected exit time of the uncontrolled OU process from a
//! band `[a, b]`. Times are in years.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::numerics::{integrate, Tolerance};
use crate::ou::{fmt9, OuSpec};
use crate::special::{dawson, erfc};

/// `e^{−ref²/2} ∫₀^z e^{y²/2} dy`, via the Dawson function.
fn scaled_g(z: f64, reference: f64) -> f64 {
    SQRT_2 * (0.5 * (z * z - reference * reference)).exp() * dawson(z * FRAC_1_SQRT_2)
}

/// `∫₀^z e^{y²/2} dy`.
pub fn erfi_integral(z: f64) -> f64 {
    scaled_g(z, 0.0)
}

fn check(spec: &OuSpec, band: (f64, f64), x: f64) -> Result<(f64, f64, f64)> {
    spec.validate()?;
    let (a, b) = band;
    if !(a < b) {
        return Err(domain(format!("band needs a < b, got ({a}, {b})")));
    }
    if !(a <= x && x <= b) {
        return Err(domain(format!("x = {x} outside the band [{a}, {b}]")));
    }
    Ok((spec.z(a), spec.z(x), spec.z(b)))
}

/// `(P{exit at a}, P{exit at b})` starting from `x`.
pub fn exit_probabilities(spec: &OuSpec, band: (f64, f64), x: f64) -> Result<(f64, f64)> {
    let (za, zx, zb) = check(spec, band, x)?;
    let p = lower_probability(za, zx, zb);
    Ok((p, 1.0 - p))
}

fn lower_probability(za: f64, zx: f64, zb: f64) -> f64 {
    let r = za.abs().max(zb.abs());
    let gb = scaled_g(zb, r);
    let num = gb - scaled_g(zx, r);
    let den = gb - scaled_g(za, r);
    (num / den).clamp(0.0, 1.0)
}

/// `∫_w^{zb} e^{−u²/2} du`.
fn inner(w: f64, zb: f64) -> f64 {
    (0.5 * PI).sqrt() * (erfc(w * FRAC_1_SQRT_2) - erfc(zb * FRAC_1_SQRT_2))
}

/// `∫_z^{zb} e^{w²/2} ∫_w^{zb} e^{−u²/2} du dw`.
fn outer(z: f64, zb: f64) -> Result<f64> {
    if z >= zb {
        return Ok(0.0);
    }
    let f = |w: f64| {
        let i = inner(w, zb);
        if i <= 0.0 {
            0.0
        } else {
            (0.5 * w * w + i.ln()).exp()
        }
    };
    Ok(integrate(f, z, zb, Tolerance::new(1e-300, 1e-12))?.value)
}

/// Expected time (years) to leave `[a, b]` from `x`, solving
/// `½σ²q″ + ρ(m − x)q′ + 1 = 0`, `q(a) = q(b) = 0`.
pub fn expected_exit_time(spec: &OuSpec, band: (f64, f64), x: f64) -> Result<f64> {
    let (za, zx, zb) = check(spec, band, x)?;
    if x == band.0 || x == band.1 {
        return Ok(0.0);
    }
    let ja = outer(za, zb)?;
    let jx = outer(zx, zb)?;
    let q = (ja * lower_probability(za, zx, zb) - jx) / spec.rho;
    Ok(q.max(0.0))
}

/// Exit statistics on a uniform grid over the band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitProfile {
    pub band: (f64, f64),
    pub grid: Vec<f64>,
    pub p_lower: Vec<f64>,
    pub p_upper: Vec<f64>,
    pub expected_time: Vec<f64>,
}

pub fn exit_profile(spec: &OuSpec, band: (f64, f64), n_points: usize) -> Result<ExitProfile> {
    if n_points < 2 {
        return Err(domain(format!("need at least 2 grid points, got {n_points}")));
    }
    let (a, b) = band;
    let grid: Vec<f64> = (0..n_points)
        .map(|i| {
            if i == n_points - 1 {
                b
            } else {
                a + (b - a) * i as f64 / (n_points - 1) as f64
            }
        })
        .collect();
    let rows = grid
        .par_iter()
        .map(|&x| {
            let (pl, pu) = exit_probabilities(spec, band, x)?;
            Ok((pl, pu, expected_exit_time(spec, band, x)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExitProfile {
        band,
        grid,
        p_lower: rows.iter().map(|r| r.0).collect(),
        p_upper: rows.iter().map(|r| r.1).collect(),
        expected_time: rows.iter().map(|r| r.2).collect(),
    })
}

impl ExitProfile {
    /// Grid point with the largest expected exit time.
    pub fn argmax_time(&self) -> (f64, f64) {
        let mut best = (self.grid[0], self.expected_time[0]);
        for (&x, &q) in self.grid.iter().zip(&self.expected_time) {
            if q > best.1 {
                best = (x, q);
            }
        }
        best
    }

    /// CSV `x,p_lower,p_upper,q_years`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["x", "p_lower", "p_upper", "q_years"])?;
        for i in 0..self.grid.len() {
            wr.write_record([
                fmt9(self.grid[i]),
                fmt9(self.p_lower[i]),
                fmt9(self.p_upper[i]),
                fmt9(self.expected_time[i]),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut p = Self {
            band: (f64::NAN, f64::NAN),
            grid: vec![],
            p_lower: vec![],
            p_upper: vec![],
            expected_time: vec![],
        };
        for rec in rd.deserialize() {
            let (x, pl, pu, q): (f64, f64, f64, f64) = rec?;
            p.grid.push(x);
            p.p_lower.push(pl);
            p.p_upper.push(pu);
            p.expected_time.push(q);
        }
        if let (Some(&a), Some(&b)) = (p.grid.first(), p.grid.last()) {
            p.band = (a, b);
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec() -> OuSpec {
        OuSpec::default()
    }

    fn shifted() -> OuSpec {
        OuSpec {
            theta: spec().m + 0.02,
            ..spec()
        }
    }

    #[test]
    fn scaled_g_matches_quadrature() {
        for i in 0..=40 {
            let z = -4.0 + 0.2 * i as f64;
            let q = integrate(|y: f64| (0.5 * y * y).exp(), 0.0, z, Tolerance::new(1e-15, 1e-14))
                .unwrap()
                .value;
            let g = erfi_integral(z);
            assert!((g - q).abs() <= 1e-10 * q.abs().max(1e-3), "z = {z}: {g} vs {q}");
        }
    }

    #[test]
    fn boundary_cases() {
        let band = (1.98707, 2.03214);
        assert_eq!(exit_probabilities(&spec(), band, band.0).unwrap(), (1.0, 0.0));
        assert_eq!(exit_probabilities(&spec(), band, band.1).unwrap(), (0.0, 1.0));
        assert_eq!(expected_exit_time(&spec(), band, band.0).unwrap(), 0.0);
        assert_eq!(expected_exit_time(&spec(), band, band.1).unwrap(), 0.0);
        assert!(exit_probabilities(&spec(), band, 2.1).is_err());
        assert!(expected_exit_time(&spec(), band, 1.9).is_err());
    }

    #[test]
    fn symmetric_band_midpoint() {
        let m = spec().m;
        let (pl, pu) = exit_probabilities(&spec(), (m - 0.0225, m + 0.0225), m).unwrap();
        assert!((pl - 0.5).abs() < 1e-12 && (pu - 0.5).abs() < 1e-12);
    }

    #[test]
    fn symmetric_profile() {
        let m = spec().m;
        let p = exit_profile(&spec(), (m - 0.0225, m + 0.0225), 41).unwrap();
        for i in 0..41 {
            let j = 40 - i;
            assert!((p.expected_time[i] - p.expected_time[j]).abs() < 1e-8);
            assert!((p.p_lower[i] - p.p_upper[j]).abs() < 1e-8);
        }
        assert!((p.argmax_time().0 - m).abs() < 1e-12);
    }

    #[test]
    fn profile_invariants() {
        let band = (2.0071, 2.05217);
        let p = exit_profile(&shifted(), band, 101).unwrap();
        for i in 0..101 {
            assert!((p.p_lower[i] + p.p_upper[i] - 1.0).abs() < 1e-10);
            assert!(p.expected_time[i] >= 0.0);
            if i > 0 {
                assert!(p.p_upper[i] > p.p_upper[i - 1]);
            }
        }
        assert_eq!(p.expected_time[0], 0.0);
        assert_eq!(p.expected_time[100], 0.0);
    }

    #[test]
    fn exit_time_solves_its_ode() {
        let s = shifted();
        let band = (2.0071, 2.05217);
        let h = 2e-4;
        let q = |x: f64| expected_exit_time(&s, band, x).unwrap();
        for i in 1..=50 {
            let x = band.0 + (band.1 - band.0) * i as f64 / 51.0;
            let d1 = (q(x + h) - q(x - h)) / (2.0 * h);
            let d2 = (q(x + h) - 2.0 * q(x) + q(x - h)) / (h * h);
            let res = 0.5 * s.sigma * s.sigma * d2 + s.rho * (s.m - x) * d1 + 1.0;
            assert!(res.abs() < 1e-4, "x = {x}: {res}");
        }
    }

    #[test]
    fn brownian_limit() {
        // with negligible mean reversion q → (x − a)(b − x)/σ²
        let s = OuSpec {
            rho: 1e-9,
            ..spec()
        };
        let band = (1.98, 2.04);
        for &x in &[1.99, 2.0, 2.02, 2.035] {
            let q = expected_exit_time(&s, band, x).unwrap();
            let bm = (x - band.0) * (band.1 - x) / (s.sigma * s.sigma);
            assert!(((q - bm) / bm).abs() < 1e-6, "{q} vs {bm}");
            let (pl, _) = exit_probabilities(&s, band, x).unwrap();
            assert!((pl - (band.1 - x) / (band.1 - band.0)).abs() < 1e-6);
        }
    }

    #[test]
    fn wide_bands_do_not_overflow() {
        let s = OuSpec {
            rho: 1.0,
            sigma: 0.05,
            ..spec()
        };
        // z spans about ±25
        let band = (s.m - 0.9, s.m + 0.9);
        let (pl, pu) = exit_probabilities(&s, band, s.m + 0.3).unwrap();
        assert!(pl.is_finite() && pu.is_finite() && (pl + pu - 1.0).abs() < 1e-12);
        assert!((pl - 0.5).abs() < 1e-6);
        let q = expected_exit_time(&s, band, s.m).unwrap();
        assert!(q.is_finite() && q > 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let p = exit_profile(&shifted(), (2.0071, 2.05217), 11).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x,p_lower,p_upper,q_years\n"));
        let back = ExitProfile::read_csv(buf.as_slice()).unwrap();
        for i in 0..11 {
            assert!((back.expected_time[i] - p.expected_time[i]).abs() <= 1e-8 * p.expected_time[i].abs().max(1e-9));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn probabilities_normalised(t in 0.0f64..1.0, w in 0.001f64..0.3, c in -0.2f64..0.2) {
            let s = spec();
            let band = (s.m + c - w, s.m + c + w);
            let x = band.0 + t * (band.1 - band.0);
            let (pl, pu) = exit_probabilities(&s, band, x).unwrap();
            prop_assert!((pl + pu - 1.0).abs() < 1e-10);
            prop_assert!((0.0..=1.0).contains(&pl));
        }
    }
}
