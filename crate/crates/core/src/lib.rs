//! Optimal payoff design in a complete Black–Scholes-type market under a
//! budget and a tail-risk constraint.
//!
//! Payoffs are represented by their quantile functions against the
//! decreasing kernel quantile `Q = F_{dQ/dP}^{-1}`, so prices and
//! expectations reduce to one-dimensional integrals on `(0, 1)`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod error;
pub mod io;
pub mod market;
pub mod quadrature;
pub mod quantile;
pub mod risk;
pub mod search;
pub mod solve;
pub mod special;
pub mod utility;

pub use error::{Error, Result};
