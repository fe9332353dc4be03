//! The free-boundary solver on a diffusion with no closed forms: mean
//! reversion with volatility that is higher above the mean than below it,
//! and different buying and selling costs. Fundamental solutions come from
//! ODE integration and Rh from Green-kernel quadrature.
//!
//! cargo run --release --example general_diffusion

use std::sync::Arc;

use target_zone::diffusion::{fundamental_numeric, DiffusionModel, Tag};
use target_zone::free_boundary::{hjb_residual, ControlProblem, CostModel};

fn main() -> target_zone::Result<()> {
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
    )?;
    let ls = model.length_scale();
    let model = model.with_tabulated_scale(m - 40.0 * ls, m + 40.0 * ls, 4000)?;
    let grid: Vec<f64> = (0..=400).map(|i| m - 4.0 * ls + 8.0 * ls * i as f64 / 400.0).collect();
    let base = fundamental_numeric(&model, Tag::Base, &grid)?;
    let hat = fundamental_numeric(&model, Tag::Hat, &grid)?;

    let cost = CostModel::constant(
        Arc::new(move |x: f64| 0.5 * (x - m).powi(2)),
        Arc::new(move |x| x - m),
        0.02,
        0.04,
        &model,
    );
    let problem = ControlProblem::new(model, cost, base, hat)?;
    let (t1, t2) = problem.x_tilde();
    println!("sign changes x̃ = ({t1:.5}, {t2:.5})");

    let sol = problem.solve()?;
    println!("band ({:.5}, {:.5}), Θ(b*) = {:.1e}", sol.a_star, sol.b_star, sol.theta_residual);
    println!("smooth fit {:?}", sol.smooth_fit);

    let grid: Vec<f64> = (0..200).map(|i| m - 3.0 * ls + 6.0 * ls * i as f64 / 199.0).collect();
    println!("{:?}", hjb_residual(&sol, &grid)?);
    Ok(())
}
