//! Monte Carlo cost of reflecting the rate at the optimal band and at
//! perturbed bands, against the analytic value v(m).
//!
//! cargo run --release --example simulate [-- paths]

use target_zone::mc::{policy_gap, Perturbation, SimConfig};
use target_zone::ou::{solve_ou_band, OuSpec};

fn main() -> target_zone::Result<()> {
    let spec = OuSpec::default();
    let paths = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10_000);
    let cfg = SimConfig { n_paths: paths, ..SimConfig::default() };
    let v = solve_ou_band(&spec)?.u(spec.m)?;
    println!("analytic v(m) = {v:.6}, {paths} regeneration cycles, dt = {}", cfg.dt);
    println!("{:>16} {:>20} {:>10} {:>10} {:>9}", "band", "", "MC", "exact", "gap/se");
    for row in policy_gap(&spec, spec.m, &Perturbation::standard_set(), &cfg)? {
        println!(
            "{:>16} ({:.5}, {:.5}) {:>10.6} {:>10.6} {:>+9.2}",
            row.label,
            row.band.0,
            row.band.1,
            row.cost_mean,
            row.band_cost,
            row.gap / row.cost_stderr
        );
    }
    Ok(())
}
