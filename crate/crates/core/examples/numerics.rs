//! Adaptive Gauss–Kronrod quadrature (finite and semi-infinite) and Brent
//! root finding.
//!
//! cargo run --release --example numerics

use target_zone::numerics::{brent, integrate, integrate_tail, BrentOptions, Tolerance};

fn main() -> target_zone::Result<()> {
    let tol = Tolerance::default();
    let r = integrate(|x: f64| (x * x).sin(), 0.0, 10.0, tol)?;
    println!("∫₀¹⁰ sin x² dx = {:.15} (error {:.1e})", r.value, r.error);

    let g = integrate_tail(|x: f64| (-0.5 * x * x).exp(), 0.0, f64::INFINITY, 1.0, tol)?;
    println!("∫₀^∞ e^(-x²/2) dx = {:.15} (√(π/2) = {:.15})", g.value, (std::f64::consts::PI / 2.0).sqrt());

    let root = brent(|x: f64| Ok(x.cos() - x), 0.0, 1.0, BrentOptions::default())?;
    println!("cos x = x at {root:.15}");
    Ok(())
}
