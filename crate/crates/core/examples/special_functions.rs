//! Parabolic cylinder functions of negative order and the helpers behind
//! them.
//!
//! cargo run --release --example special_functions

use target_zone::special::{dawson, erfc, gamma, pcf_d, CylinderOrder};

fn main() -> target_zone::Result<()> {
    println!("Γ(0.5)² = {:.15} (π = {:.15})", gamma(0.5)?.powi(2), std::f64::consts::PI);
    println!("erfc(1) = {:.15}, F(1) = {:.15}", erfc(1.0), dawson(1.0));

    // D_{-1}(x) = e^{x²/4} √(π/2) erfc(x/√2)
    let d = CylinderOrder::new(-1.0)?;
    for x in [-2.0, 0.0, 2.0] {
        let closed = (x * x / 4.0f64).exp() * (std::f64::consts::PI / 2.0).sqrt() * erfc(x / 2f64.sqrt());
        println!("D_-1({x:+}) = {:.12}  closed form {:.12}", pcf_d(d, x)?, closed);
    }

    // the orders used by the DKK/EUR example
    for alpha in [-5.0, -6.0] {
        let o = CylinderOrder::new(alpha)?;
        let row: Vec<String> = [-2.0, -1.0, 0.0, 1.0, 2.0]
            .iter()
            .map(|&x| format!("{:.6e}", pcf_d(o, x).unwrap()))
            .collect();
        println!("D_{alpha}: {}", row.join("  "));
    }
    Ok(())
}
