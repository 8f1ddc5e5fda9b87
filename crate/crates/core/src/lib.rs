//! Asymptotic integration of f'' + P(z) f = 0 with polynomial P.
//!
//! The crate is organised bottom-up: [`branch`] fixes roots and arguments
//! on explicit cuts, [`equation`] derives the constants of P and its
//! normalized form Q, [`liouville`] maps each sector to the perturbed sine
//! equation, [`volterra`] builds the asymptotic solutions of that equation,
//! [`ode`] integrates the original equation along complex paths and
//! [`zeros`] locates, counts and classifies.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod branch;
pub mod config;
pub mod equation;
pub mod error;
pub mod liouville;
pub mod ode;
pub mod poly;
pub mod quad;
pub mod report;
pub mod volterra;
pub mod zeros;

pub use error::{AtlasError, Result};
pub use num_complex::Complex64;
