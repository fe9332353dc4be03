//! How the optimal band moves with m, σ, c₁, c₂ and θ.
//!
//! cargo run --release --example sweep

use target_zone::cli::linspace;
use target_zone::ou::{sweep, OuSpec, SweepParam};

fn main() -> target_zone::Result<()> {
    let spec = OuSpec::default();
    let cases = [
        (SweepParam::M, spec.m - 0.02, spec.m + 0.02),
        (SweepParam::Sigma, 0.01, 0.02),
        (SweepParam::C1, 0.02, 0.05),
        (SweepParam::C2, 0.02, 0.05),
        (SweepParam::Theta, spec.theta - 0.02, spec.theta + 0.02),
    ];
    for (param, lo, hi) in cases {
        let res = sweep(&spec, param, &linspace(lo, hi, 5))?;
        let (da, db) = param.expected_directions();
        println!(
            "{:>6}: a* {} ({}), b* {} ({})",
            param.name(),
            if da > 0.0 { "up" } else { "down" },
            res.a_verdict,
            if db > 0.0 { "up" } else { "down" },
            res.b_verdict
        );
        for r in &res.rows {
            println!("        {:.5}  ({:.5}, {:.5})", r.value, r.a_star, r.b_star);
        }
    }
    Ok(())
}
