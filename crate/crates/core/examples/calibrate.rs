//! Which proportional cost makes the optimal band as wide as the official
//! ±2.25% DKK/EUR fluctuation band?
//!
//! cargo run --release --example calibrate

use target_zone::cli::default_calibration_target;
use target_zone::ou::{calibrate_costs, solve_ou_band, OuSpec};

fn main() -> target_zone::Result<()> {
    let spec = OuSpec::default();
    let (a, b) = default_calibration_target(&spec);
    println!("target band ({a:.5}, {b:.5}), width {:.5}", b - a);

    let c = calibrate_costs(&spec, a, b)?;
    let sol = solve_ou_band(&spec.with_cost(c))?;
    println!("c = {c:.6}");
    println!("band ({:.5}, {:.5}), width error {:.1e}", sol.a_star, sol.b_star, (sol.b_star - sol.a_star) - (b - a));
    Ok(())
}
