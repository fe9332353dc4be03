//! v′ as the value of a stopping game: simulate the free process from x,
//! stop at the first exit from the optimal band, pay −c₁ at a* and +c₂ at b*.
//!
//! cargo run --release --example dynkin

use target_zone::mc::{dynkin_game_value, SimConfig};
use target_zone::ou::{solve_ou_band, OuSpec};

fn main() -> target_zone::Result<()> {
    let spec = OuSpec { theta: OuSpec::default().m + 0.01, ..OuSpec::default() };
    let sol = solve_ou_band(&spec)?;
    let band = (sol.a_star, sol.b_star);
    let cfg = SimConfig { n_paths: 20_000, ..SimConfig::default() };
    println!("band ({:.5}, {:.5})", band.0, band.1);
    for i in 1..6 {
        let x = band.0 + (band.1 - band.0) * i as f64 / 6.0;
        let est = dynkin_game_value(&spec, band, x, &cfg)?;
        let exact = sol.u_prime(x)?;
        println!(
            "x = {x:.5}  game {:+.5} ± {:.5}  v' {:+.5}  z = {:+.2}",
            est.mean,
            est.stderr,
            exact,
            (est.mean - exact) / est.stderr
        );
    }
    Ok(())
}
