//! Globally adaptive 21-point Gauss–Kronrod quadrature.
//!
//! The interval with the largest error estimate is bisected until the summed
//! estimate drops below `max(abs, rel * |I|)`. Error estimates follow the
//! QUADPACK rescaling so smooth integrands are not over-refined.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_656_603_581,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// Gauss weights for the odd-indexed Kronrod nodes XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

const MAX_SEGMENTS: usize = 4000;

/// Absolute and relative tolerance pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel }
    }

    pub const fn relative(rel: f64) -> Self {
        Self { abs: 0.0, rel }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-12,
            rel: 1e-10,
        }
    }
}

/// Quadrature result with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    // ∫|f| over the segment, used for the roundoff floor
    abs_value: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = (200.0 * scaled / res_asc).powf(1.5);
        scaled = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        scaled = scaled.max(50.0 * f64::EPSILON * res_abs);
    }
    scaled
}

fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center);
    let mut res_k = f_center * WGK[10];
    let mut res_abs = res_k.abs();
    let mut res_g = 0.0;
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (f_center - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let abs_half = half.abs();
    let value = res_k * half;
    let error = rescale_error((res_k - res_g) * half, res_abs * abs_half, res_asc * abs_half);
    Segment {
        a,
        b,
        value,
        error,
        abs_value: res_abs * abs_half,
    }
}

/// Integrate `f` over the finite interval `[a, b]`.
///
/// Reversed limits give the negated integral. Non-finite integrand values or
/// failure to meet the tolerance within the segment budget are reported as
/// [`Error::Numerical`] carrying the achieved error.
pub fn integrate<F>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Integral>
where
    F: Fn(f64) -> f64,
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(crate::error::domain(format!(
            "integration limits must be finite, got [{a}, {b}]"
        )));
    }
    if a == b {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
        });
    }
    let first = gk21(&f, a, b);
    let mut total = first.value;
    let mut total_err = first.error;
    let mut total_abs = first.abs_value;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    // below ~100 ulp of ∫|f| the error estimate is roundoff, not truncation
    let target = |total: f64, total_abs: f64| tol.target(total).max(100.0 * f64::EPSILON * total_abs);
    while total_err > target(total, total_abs) {
        if !total.is_finite() {
            return Err(Error::Numerical {
                what: "quadrature (non-finite integrand)".into(),
                achieved: f64::INFINITY,
                requested: tol.target(0.0),
            });
        }
        if heap.len() >= MAX_SEGMENTS {
            return Err(Error::Numerical {
                what: format!("quadrature on [{a}, {b}]"),
                achieved: total_err,
                requested: tol.target(total),
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        if worst.error == 0.0 {
            // only drift in the running sum is left
            heap.push(worst);
            break;
        }
        let mid = 0.5 * (worst.a + worst.b);
        if mid == worst.a || mid == worst.b {
            // interval exhausted at machine precision; accept its contribution
            let target = target(total, total_abs);
            if worst.error > target {
                return Err(Error::Numerical {
                    what: format!("quadrature on [{a}, {b}] (roundoff)"),
                    achieved: total_err,
                    requested: target,
                });
            }
            heap.push(Segment { error: 0.0, ..worst });
            continue;
        }
        let left = gk21(&f, worst.a, mid);
        let right = gk21(&f, mid, worst.b);
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        total_abs += left.abs_value + right.abs_value - worst.abs_value;
        heap.push(left);
        heap.push(right);
        // refresh to avoid drift from repeated add/subtract
        if heap.len() % 64 == 0 {
            total = heap.iter().map(|s| s.value).sum();
            total_err = heap.iter().map(|s| s.error).sum();
            total_abs = heap.iter().map(|s| s.abs_value).sum();
        }
    }
    let value: f64 = heap.iter().map(|s| s.value).sum();
    let error: f64 = heap.iter().map(|s| s.error).sum();
    if !value.is_finite() {
        return Err(Error::Numerical {
            what: "quadrature (non-finite integrand)".into(),
            achieved: f64::INFINITY,
            requested: tol.target(0.0),
        });
    }
    Ok(Integral { value, error })
}

/// Oriented integral `∫_start^limit f`, where `limit` may be infinite.
///
/// Panels of length `scale`, `2 scale`, `4 scale`, ... are added until a panel
/// contributes less than the tolerance and the integrand at the panel end has
/// fallen below `1e-16` of its running maximum, or `limit` is reached.
pub fn integrate_tail<F>(
    f: F,
    start: f64,
    limit: f64,
    scale: f64,
    tol: Tolerance,
) -> Result<Integral>
where
    F: Fn(f64) -> f64,
{
    let upward = limit >= start;
    let sign = if upward { 1.0 } else { -1.0 };
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(crate::error::domain(format!("tail scale must be positive, got {scale}")));
    }
    let mut lo = start;
    let mut width = scale;
    let mut total = 0.0;
    let mut total_err = 0.0;
    let mut running_max = f(start).abs();
    for _ in 0..80 {
        let mut hi = lo + sign * width;
        let mut reached_limit = false;
        if (upward && hi >= limit) || (!upward && hi <= limit) {
            hi = limit;
            reached_limit = true;
        }
        // Tighter per-panel tolerance keeps the accumulated error within budget.
        let panel_tol = Tolerance::new(tol.abs * 0.25, tol.rel * 0.25);
        let piece = integrate(&f, lo.min(hi), lo.max(hi), panel_tol)?;
        total += piece.value;
        total_err += piece.error;
        let end_val = f(hi).abs();
        running_max = running_max.max(end_val);
        if reached_limit {
            return Ok(Integral {
                value: sign * total,
                error: total_err,
            });
        }
        let small_piece = piece.value.abs() <= tol.target(total).max(f64::MIN_POSITIVE);
        let small_integrand = end_val <= 1e-16 * running_max || end_val == 0.0;
        if small_piece && small_integrand {
            return Ok(Integral {
                value: sign * total,
                error: total_err + piece.value.abs(),
            });
        }
        lo = hi;
        width *= 2.0;
    }
    Err(Error::Numerical {
        what: format!("tail integral from {start} towards {limit}"),
        achieved: total_err,
        requested: tol.target(total),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_weights_sum_to_two() {
        let k: f64 = 2.0 * WGK[..10].iter().sum::<f64>() + WGK[10];
        let g: f64 = 2.0 * WG.iter().sum::<f64>();
        assert!((k - 2.0).abs() < 1e-15);
        assert!((g - 2.0).abs() < 1e-15);
    }

    #[test]
    fn single_panel_is_exact_for_high_degree_polynomials() {
        // Kronrod 21 integrates degree 31 exactly, Gauss 10 degree 19.
        for deg in [0, 5, 19, 30, 31] {
            let seg = gk21(&|x: f64| x.powi(deg), -1.0, 1.0);
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((seg.value - exact).abs() < 1e-14, "degree {deg}");
        }
    }

    #[test]
    fn oscillatory_and_peaked_integrands() {
        let v = integrate(|x: f64| (10.0 * x).sin(), 0.0, std::f64::consts::PI, Tolerance::default())
            .unwrap()
            .value;
        assert!(v.abs() < 1e-12);
        let v = integrate(|x: f64| 1.0 / (1e-4 + x * x), -1.0, 1.0, Tolerance::relative(1e-12))
            .unwrap()
            .value;
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((v - exact).abs() / exact < 1e-11);
    }

    #[test]
    fn reversed_limits_negate() {
        let f = |x: f64| x.exp();
        let a = integrate(f, 0.0, 1.0, Tolerance::default()).unwrap().value;
        let b = integrate(f, 1.0, 0.0, Tolerance::default()).unwrap().value;
        assert!((a + b).abs() < 1e-14);
    }

    #[test]
    fn gaussian_tails() {
        let f = |x: f64| (-0.5 * x * x).exp();
        let half = (std::f64::consts::PI / 2.0).sqrt();
        let up = integrate_tail(f, 0.0, f64::INFINITY, 1.0, Tolerance::relative(1e-13)).unwrap();
        assert!((up.value - half).abs() < 1e-12);
        // oriented like `integrate`: from start to limit
        let down = integrate_tail(f, 0.0, f64::NEG_INFINITY, 1.0, Tolerance::relative(1e-13)).unwrap();
        assert!((down.value + half).abs() < 1e-12, "{}", down.value);
        let finite = integrate_tail(f, 0.0, 1.5, 0.1, Tolerance::relative(1e-13)).unwrap();
        let direct = integrate(f, 0.0, 1.5, Tolerance::relative(1e-13)).unwrap();
        assert!((finite.value - direct.value).abs() < 1e-13);
    }

    #[test]
    fn non_integrable_tail_reports_failure() {
        let r = integrate_tail(|_| 1.0, 0.0, f64::INFINITY, 1.0, Tolerance::default());
        assert!(matches!(r, Err(Error::Numerical { .. })));
    }
}
