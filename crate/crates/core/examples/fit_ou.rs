//! Estimate ρ, m, σ from a `time,rate` CSV. Without an argument, a synthetic
//! ten-year daily series is simulated first.
//!
//! cargo run --release --example fit_ou [-- rates.csv]

use std::path::PathBuf;

use target_zone::mc::{simulate_ou_series, write_rate_series};
use target_zone::ou::{fit_ou_mle, read_rate_series, OuSpec};

fn main() -> target_zone::Result<()> {
    let path = match std::env::args().nth(1) {
        Some(p) => PathBuf::from(p),
        None => {
            let truth = OuSpec { rho: 2.0, sigma: 0.02, ..OuSpec::default() };
            let series = simulate_ou_series(&truth, truth.m, 1.0 / 250.0, 2500, 42)?;
            let p = std::env::temp_dir().join("synthetic_rates.csv");
            write_rate_series(&p, &series)?;
            println!("simulated rho = {}, m = {:.5}, sigma = {} into {}", truth.rho, truth.m, truth.sigma, p.display());
            p
        }
    };
    let fit = fit_ou_mle(&read_rate_series(&path)?)?;
    println!("rho   = {:.4} ± {:.4}", fit.rho, fit.se_rho);
    println!("m     = {:.5} ± {:.5}", fit.m, fit.se_m);
    println!("sigma = {:.5} ± {:.5}", fit.sigma, fit.se_sigma);
    if let Some(w) = fit.warning {
        println!("warning: {w}");
    }
    Ok(())
}
