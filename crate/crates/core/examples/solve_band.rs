//! Optimal DKK/EUR band at c₁ = c₂ = 0.0335, its value function and the HJB
//! residuals on a wide grid.
//!
//! cargo run --release --example solve_band

use target_zone::free_boundary::hjb_residual;
use target_zone::ou::{solve_ou_band, OuSpec};

fn main() -> target_zone::Result<()> {
    let spec = OuSpec::default();
    let sol = solve_ou_band(&spec)?;
    println!("a* = {:.6}  b* = {:.6}", sol.a_star, sol.b_star);
    println!("A = {:.6}  B = {:.6}  Θ(b*) = {:.2e}", sol.coeff_a(), sol.coeff_b(), sol.theta_residual);
    println!("smooth fit {:?}", sol.smooth_fit);

    println!("\n{:>10} {:>12} {:>12}", "x", "v(x)", "v'(x)");
    for i in 0..=8 {
        let x = sol.a_star - 0.01 + (sol.b_star - sol.a_star + 0.02) * i as f64 / 8.0;
        let v = sol.value(x)?;
        println!("{x:>10.5} {:>12.6} {:>12.6}", v.v, v.d1);
    }

    let sd = spec.stationary_sd();
    let grid: Vec<f64> = (0..1000)
        .map(|i| spec.m - 10.0 * sd + 20.0 * sd * i as f64 / 999.0)
        .collect();
    let rep = hjb_residual(&sol, &grid)?;
    println!("\nHJB on 1000 points: {rep:?}");
    Ok(())
}
