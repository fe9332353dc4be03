//! Maximum likelihood estimation of OU parameters from sampled rates.

use proptest::prelude::*;
use target_zone::mc::simulate_ou_series;
use target_zone::ou::{fit_ou_mle, OuSpec};
use target_zone::Error;

fn truth() -> OuSpec {
    OuSpec { rho: 1.5, sigma: 0.03, ..OuSpec::default() }
}

#[test]
fn recovers_parameters_within_standard_errors() {
    let t = truth();
    let mut hits = [0; 3];
    let reps = 20;
    for seed in 0..reps {
        let s = simulate_ou_series(&t, t.m, 1.0 / 250.0, 5000, seed).unwrap();
        let f = fit_ou_mle(&s).unwrap();
        hits[0] += ((f.rho - t.rho).abs() < 2.0 * f.se_rho) as usize;
        hits[1] += ((f.m - t.m).abs() < 2.0 * f.se_m) as usize;
        hits[2] += ((f.sigma - t.sigma).abs() < 2.0 * f.se_sigma) as usize;
    }
    // ~95% coverage each; 15 of 20 is far in the tail if the errors are right
    for h in hits {
        assert!(h >= 15, "{hits:?}");
    }
}

#[test]
fn reversed_series_gives_same_estimates() {
    // a stationary Gaussian AR(1) is time reversible, and so is its exact likelihood;
    // the tolerance is the optimiser's, far below the standard errors
    let t = truth();
    let s = simulate_ou_series(&t, t.m, 1.0 / 250.0, 2000, 4).unwrap();
    let dt = s[1].0 - s[0].0;
    let rev: Vec<(f64, f64)> = s.iter().rev().enumerate().map(|(i, &(_, y))| (i as f64 * dt, y)).collect();
    let (a, b) = (fit_ou_mle(&s).unwrap(), fit_ou_mle(&rev).unwrap());
    assert!((a.rho - b.rho).abs() < 1e-6 * a.rho, "{} {}", a.rho, b.rho);
    assert!((a.sigma - b.sigma).abs() < 1e-6 * a.sigma);
    assert!((a.m - b.m).abs() < 1e-8);
}

#[test]
fn rejects_bad_series() {
    let t = truth();
    let s = simulate_ou_series(&t, t.m, 0.01, 100, 1).unwrap();
    assert!(matches!(fit_ou_mle(&s[..10]), Err(Error::Ingestion(_))));
    let mut gap = s.clone();
    gap.remove(50);
    assert!(matches!(fit_ou_mle(&gap), Err(Error::Ingestion(_))));
    let mut neg = s.clone();
    neg[3].1 = -1.0;
    assert!(matches!(fit_ou_mle(&neg), Err(Error::Ingestion(_))));
    let flat: Vec<(f64, f64)> = (0..100).map(|i| (i as f64, 7.46)).collect();
    assert!(matches!(fit_ou_mle(&flat), Err(Error::Calibration(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn scaling_the_rate_shifts_only_the_mean(k in 0.5f64..2.0, seed in 0u64..100) {
        let t = truth();
        let s = simulate_ou_series(&t, t.m, 1.0 / 250.0, 500, seed).unwrap();
        let scaled: Vec<(f64, f64)> = s.iter().map(|&(t, y)| (t, k * y)).collect();
        let (a, b) = (fit_ou_mle(&s).unwrap(), fit_ou_mle(&scaled).unwrap());
        prop_assert!((a.rho - b.rho).abs() < 1e-6 * a.rho);
        prop_assert!((a.sigma - b.sigma).abs() < 1e-6 * a.sigma);
        prop_assert!((b.m - a.m - k.ln()).abs() < 1e-8);
    }

    #[test]
    fn rescaling_time_rescales_rates(f in 0.25f64..4.0, seed in 0u64..100) {
        let t = truth();
        let s = simulate_ou_series(&t, t.m, 1.0 / 250.0, 500, seed).unwrap();
        let stretched: Vec<(f64, f64)> = s.iter().map(|&(t, y)| (f * t, y)).collect();
        let (a, b) = (fit_ou_mle(&s).unwrap(), fit_ou_mle(&stretched).unwrap());
        prop_assert!((a.rho - f * b.rho).abs() < 1e-6 * a.rho);
        prop_assert!((a.sigma - f.sqrt() * b.sigma).abs() < 1e-6 * a.sigma);
    }
}
