//! Arithmetic substrates: exact rationals, a high-precision fixed-point log
//! domain, an emulated binary float format, and prime tables.

pub mod exact;
pub mod fixed;
pub mod fpa;
pub mod primes;

pub use exact::ExactScalar;
pub use fixed::Fixed;
pub use fpa::{fpa_arith, fpa_round, FpaFormat, FpaOp, FpaValue};
pub use primes::{largest_prime_at_most, primes_first, PrimeTable};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("no prime is at most {0}")]
    NoPrime(f64),
    #[error("invalid float format: exponent bits {exp_bits}, significand bits {frac_bits}")]
    InvalidFormat { exp_bits: u32, frac_bits: u32 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
