//! The general solver with numerically integrated fundamental solutions,
//! checked against the closed-form OU solution.

use std::sync::Arc;

use target_zone::diffusion::{fundamental_numeric, DiffusionModel, FundamentalPair, Tag};
use target_zone::free_boundary::{hjb_residual, ControlProblem, CostModel};
use target_zone::ou::{ou_hat_pair, solve_ou_band, OuSpec};

fn numeric_ou(spec: &OuSpec, anchor: f64) -> (DiffusionModel, FundamentalPair, FundamentalPair) {
    let OuSpec { rho, m, sigma, r, .. } = *spec;
    let model = DiffusionModel::new(
        Arc::new(move |x| rho * (m - x)),
        Arc::new(move |_| -rho),
        Arc::new(move |_| sigma),
        Arc::new(|_| 0.0),
        f64::NEG_INFINITY,
        f64::INFINITY,
        r,
        anchor,
    )
    .unwrap();
    let sd = spec.stationary_sd();
    let model = model.with_tabulated_scale(m - 12.0 * sd, m + 12.0 * sd, 2000).unwrap();
    let grid: Vec<f64> = (0..=200).map(|i| m - 3.0 * sd + 6.0 * sd * i as f64 / 200.0).collect();
    let base = fundamental_numeric(&model, Tag::Base, &grid).unwrap();
    let hat = fundamental_numeric(&model, Tag::Hat, &grid).unwrap();
    (model, base, hat)
}

fn numeric_problem(spec: &OuSpec, anchor: f64) -> ControlProblem {
    let (model, base, hat) = numeric_ou(spec, anchor);
    let theta = spec.theta;
    let cost = CostModel::constant(
        Arc::new(move |x: f64| 0.5 * (x - theta).powi(2)),
        Arc::new(move |x| x - theta),
        spec.c1,
        spec.c2,
        &model,
    );
    ControlProblem::new(model, cost, base, hat).unwrap()
}

#[test]
fn numeric_pairs_reproduce_closed_form_band() {
    let spec = OuSpec::default();
    let closed = solve_ou_band(&spec).unwrap();
    let sol = numeric_problem(&spec, spec.m).solve().unwrap();
    assert!((sol.a_star - closed.a_star).abs() < 1e-6, "{} {}", sol.a_star, closed.a_star);
    assert!((sol.b_star - closed.b_star).abs() < 1e-6, "{} {}", sol.b_star, closed.b_star);
    let (v, w) = (sol.u(spec.m).unwrap(), closed.u(spec.m).unwrap());
    assert!((v - w).abs() < 1e-8 * w.abs(), "{v} {w}");
}

#[test]
fn numeric_hat_psi_is_closed_form_up_to_a_constant() {
    let spec = OuSpec::default();
    let (_, _, hat) = numeric_ou(&spec, spec.m);
    let closed = ou_hat_pair(&spec).unwrap();
    let sd = spec.stationary_sd();
    let xs: Vec<f64> = (0..=40).map(|i| spec.m - 3.0 * sd + 6.0 * sd * i as f64 / 40.0).collect();
    for psi_side in [true, false] {
        let ratio = |x: f64| {
            if psi_side {
                hat.psi(x).unwrap() / closed.psi(x).unwrap()
            } else {
                hat.phi(x).unwrap() / closed.phi(x).unwrap()
            }
        };
        let r0 = ratio(xs[0]);
        for &x in &xs {
            let r = ratio(x);
            assert!((r / r0 - 1.0).abs() < 1e-5, "x = {x}: {r} vs {r0}");
        }
    }
}

#[test]
fn band_does_not_depend_on_anchor() {
    let spec = OuSpec { theta: OuSpec::default().m + 0.01, ..OuSpec::default() };
    let sd = spec.stationary_sd();
    let s1 = numeric_problem(&spec, spec.m).solve().unwrap();
    let s2 = numeric_problem(&spec, spec.m + 0.7 * sd).solve().unwrap();
    assert!((s1.a_star - s2.a_star).abs() < 1e-7);
    assert!((s1.b_star - s2.b_star).abs() < 1e-7);
}

#[test]
fn asymmetric_volatility_band_satisfies_hjb() {
    let (rho, m, s0, r) = (0.05, 2.0, 0.02, 0.02);
    let w = 0.05;
    let model = DiffusionModel::new(
        Arc::new(move |x| rho * (m - x)),
        Arc::new(move |_| -rho),
        Arc::new(move |x: f64| s0 * (1.0 + 0.4 * ((x - m) / w).tanh())),
        Arc::new(move |x: f64| s0 * 0.4 / (w * ((x - m) / w).cosh().powi(2))),
        f64::NEG_INFINITY,
        f64::INFINITY,
        r,
        m,
    )
    .unwrap();
    let ls = model.length_scale();
    let model = model.with_tabulated_scale(m - 40.0 * ls, m + 40.0 * ls, 4000).unwrap();
    let grid: Vec<f64> = (0..=400).map(|i| m - 4.0 * ls + 8.0 * ls * i as f64 / 400.0).collect();
    let base = fundamental_numeric(&model, Tag::Base, &grid).unwrap();
    let hat = fundamental_numeric(&model, Tag::Hat, &grid).unwrap();
    let cost = CostModel::constant(
        Arc::new(move |x: f64| 0.5 * (x - m).powi(2)),
        Arc::new(move |x| x - m),
        0.02,
        0.04,
        &model,
    );
    let p = ControlProblem::new(model, cost, base, hat).unwrap();
    let (t1, t2) = p.x_tilde();
    let sol = p.solve().unwrap();
    assert!(sol.a_star < t1 && t2 < sol.b_star);
    // selling is dearer than buying, so the band reaches further up
    assert!(sol.b_star - m > m - sol.a_star);
    let xs: Vec<f64> = (0..200).map(|i| m - 3.0 * ls + 6.0 * ls * i as f64 / 199.0).collect();
    let rep = hjb_residual(&sol, &xs).unwrap();
    assert!(rep.inside_max < 1e-6 && rep.outside_min > -1e-8 && rep.gradient_violation < 1e-8, "{rep:?}");
}
