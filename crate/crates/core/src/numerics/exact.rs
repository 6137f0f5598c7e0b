//! Exact rational scalars.
//!
//! Exact scoring never evaluates a logarithm: for rational predictions the
//! likelihood `e^{-N L}` is itself rational, so it is carried as a
//! `BigRational` and the logarithm is only materialized (as a [`Fixed`]) when a
//! numeric score has to be emitted.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;

use super::fixed::Fixed;
use super::fpa::FpaFormat;
use super::NumericsError;

pub type ExactScalar = BigRational;

pub fn ratio(num: u64, den: u64) -> ExactScalar {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn integer(n: u64) -> ExactScalar {
    BigRational::from_integer(BigInt::from(n))
}

/// Correctly rounded binary64 value.
pub fn to_f64(x: &ExactScalar) -> f64 {
    FpaFormat::BINARY64.round_rational(x).get()
}

/// `ln x` with `frac` fractional bits.
pub fn ln(x: &ExactScalar, frac: u32) -> Result<Fixed, NumericsError> {
    Fixed::ln_rational(x, frac)
}

/// Product of many small factors, batching into `u128` before touching the
/// big integer.
pub fn product<I: IntoIterator<Item = u64>>(factors: I) -> BigInt {
    let mut acc = BigInt::one();
    let mut chunk: u128 = 1;
    for f in factors {
        match chunk.checked_mul(f as u128) {
            Some(c) => chunk = c,
            None => {
                acc *= chunk;
                chunk = f as u128;
            }
        }
    }
    acc * chunk
}
