//! Coulomb gas correlation functions and SLE martingale observables.
//!
//! The crate builds conformal field theory correlation functions from charge
//! divisors, derives SLE drifts from their partition functions, integrates
//! Loewner flows, and checks by Monte Carlo that the resulting observables are
//! martingales.
//!
//! The deterministic kernels are generic over the scalar type (`f32`/`f64`);
//! the Monte Carlo layers work in `f64`.

// `!(x > 0)` is used deliberately so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod charges;
pub mod coulomb;
pub mod driver;
pub mod error;
pub mod loewner;
pub mod observables;
pub mod partition;
pub mod scalar;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Real;

/// `f64` divisor.
pub type Divisor64 = charges::Divisor<f64>;
/// `f64` double divisor.
pub type DoubleDivisor64 = charges::DoubleDivisor<f64>;
/// `f64` marked point.
pub type Point64 = charges::Point<f64>;
/// `f64` SLE parameters.
pub type SleParams64 = partition::SleParams<f64>;
