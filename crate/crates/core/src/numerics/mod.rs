//! Numerical building blocks shared by every model: adaptive quadrature and
//! bracketed root finding.

pub mod quad;
pub mod roots;

pub use quad::{integrate, integrate_tail, Integral, Tolerance};
pub use roots::{brent, expand_bracket, BrentOptions};
