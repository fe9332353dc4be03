//! Exit side probabilities and expected exit times (years) of the free
//! process from the optimal band, for θ = m and θ = m + 0.02.
//!
//! cargo run --release --example exit_profile [-- out.csv]

use target_zone::exit::exit_profile;
use target_zone::ou::{solve_ou_band, OuSpec};

fn main() -> target_zone::Result<()> {
    let base = OuSpec::default();
    for delta in [0.0, 0.02] {
        let spec = OuSpec { theta: base.m + delta, ..base };
        let sol = solve_ou_band(&spec)?;
        let band = (sol.a_star, sol.b_star);
        let p = exit_profile(&spec, band, 201)?;
        let (x, q) = p.argmax_time();
        println!("θ − m = {delta}: band ({:.5}, {:.5})", band.0, band.1);
        println!("  longest expected stay {q:.4} y at x = {x:.5}");
        for i in (0..201).step_by(40) {
            println!(
                "  x = {:.5}  P(exit at a) = {:.4}  E[τ] = {:.4} y",
                p.grid[i], p.p_lower[i], p.expected_time[i]
            );
        }
        if let Some(path) = std::env::args().nth(1) {
            let path = format!("{path}.{delta}");
            p.write_csv(std::fs::File::create(&path)?)?;
            println!("  wrote {path}");
        }
    }
    Ok(())
}
