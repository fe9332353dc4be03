//! Optimal exchange-rate target zones.
//!
//! A central bank keeps the log exchange rate inside a band by buying or
//! selling at proportional costs. The optimal band `(a*, b*)` solves a
//! free-boundary problem built from the fundamental solutions of a
//! one-dimensional diffusion. This crate provides
//!
//! - the diffusion machinery (scale and speed densities, Green kernels,
//!   resolvents, numeric fundamental solutions) in [`diffusion`],
//! - the general free-boundary solver and HJB diagnostics in [`free_boundary`],
//! - the Ornstein–Uhlenbeck case in closed form, calibration, sweeps and
//!   estimation in [`ou`],
//! - exit probabilities and expected exit times in [`exit`],
//! - Monte Carlo verification in [`mc`],
//! - the `band-solve` command line in [`cli`].
//!
//! See the `examples/` directory for one runnable program per capability.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod cli;
pub mod diffusion;
pub mod error;
pub mod exit;
pub mod free_boundary;
pub mod mc;
pub mod numerics;
pub mod ou;
pub mod special;

pub use error::{Error, Result};
