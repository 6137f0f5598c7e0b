//! Binary fixed-point numbers over `BigInt`, used wherever scores must be
//! carried in the log domain at a chosen absolute precision.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Neg, Sub};
use std::sync::OnceLock;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::fpa::FpaFormat;
use super::NumericsError;

/// Default number of fractional bits for log-domain work.
pub const DEFAULT_FRAC_BITS: u32 = 256;

/// Extra bits carried internally by the transcendental functions.
const GUARD_BITS: u32 = 32;

/// Precision at which `ln 2` and `ln 3` are cached.
const CACHE_BITS: u32 = 2048;

/// The value `raw / 2^frac`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Fixed {
    raw: BigInt,
    frac: u32,
}

/// `x / 2^s`, rounded to nearest (ties toward +inf).
fn shr_round(x: &BigInt, s: u32) -> BigInt {
    if s == 0 {
        return x.clone();
    }
    (x + (BigInt::one() << (s - 1))) >> s
}

fn shift(x: &BigInt, by: i64) -> BigInt {
    if by >= 0 {
        x << by as u64
    } else {
        shr_round(x, (-by) as u32)
    }
}

/// `atanh(1/q) * 2^w`, truncated.
fn atanh_inv(q: u64, w: u32) -> BigInt {
    let q2 = BigInt::from(q) * q;
    let mut term = (BigInt::one() << w) / q;
    let mut sum = BigInt::zero();
    let mut k: u64 = 0;
    while !term.is_zero() {
        sum += &term / (2 * k + 1);
        term /= &q2;
        k += 1;
    }
    sum
}

fn constants_raw(w: u32) -> (BigInt, BigInt) {
    let w2 = w + 16;
    let ln2 = atanh_inv(3, w2) << 1u32;
    let ln3 = &ln2 + (atanh_inv(5, w2) << 1u32);
    (shr_round(&ln2, 16), shr_round(&ln3, 16))
}

fn cached_constants() -> &'static (BigInt, BigInt) {
    static CACHE: OnceLock<(BigInt, BigInt)> = OnceLock::new();
    CACHE.get_or_init(|| constants_raw(CACHE_BITS))
}

fn ln2_raw(w: u32) -> BigInt {
    if w + 8 <= CACHE_BITS {
        shr_round(&cached_constants().0, CACHE_BITS - w)
    } else {
        constants_raw(w).0
    }
}

fn ln3_raw(w: u32) -> BigInt {
    if w + 8 <= CACHE_BITS {
        shr_round(&cached_constants().1, CACHE_BITS - w)
    } else {
        constants_raw(w).1
    }
}

fn bit_len(k: i64) -> u32 {
    64 - k.unsigned_abs().leading_zeros()
}

/// `ln(n * 2^e2)` for positive `n`, returned with `frac` fractional bits.
fn ln_scaled(n: &BigInt, e2: i64, frac: u32) -> Fixed {
    debug_assert!(n.is_positive());
    let b = n.bits() as i64;
    let mut e = b - 1 + e2;
    let w = frac + GUARD_BITS + bit_len(e + 1);
    let one = BigInt::one() << w;
    // mantissa in [1, 2) at precision w
    let mut m = shift(n, w as i64 - (b - 1));
    if &m * &m > (BigInt::from(2) << (2 * w)) {
        m = shr_round(&m, 1);
        e += 1;
    }
    let y = ((&m - &one) << w) / (&m + &one);
    // series on |y| so that truncation drives the terms to zero
    let y2 = (&y * &y) >> w;
    let mut term = y.abs();
    let mut sum = BigInt::zero();
    let mut k: u64 = 0;
    while !term.is_zero() {
        sum += &term / (2 * k + 1);
        term = (&term * &y2) >> w;
        k += 1;
    }
    if y.is_negative() {
        sum = -sum;
    }
    let total = (sum << 1u32) + ln2_raw(w) * e;
    Fixed { raw: shr_round(&total, w - frac), frac }
}

impl Fixed {
    pub fn from_raw(raw: BigInt, frac: u32) -> Self {
        Fixed { raw, frac }
    }

    pub fn raw(&self) -> &BigInt {
        &self.raw
    }

    pub fn frac(&self) -> u32 {
        self.frac
    }

    pub fn zero(frac: u32) -> Self {
        Fixed { raw: BigInt::zero(), frac }
    }

    pub fn one(frac: u32) -> Self {
        Fixed { raw: BigInt::one() << frac, frac }
    }

    pub fn from_int(n: impl Into<BigInt>, frac: u32) -> Self {
        Fixed { raw: n.into() << frac, frac }
    }

    /// Nearest fixed-point value to the rational `x`.
    pub fn from_rational(x: &BigRational, frac: u32) -> Self {
        let num = x.numer() << frac;
        let den = x.denom();
        let (q, r) = num.div_mod_floor(den);
        let raw = if (r << 1u32) >= *den { q + 1 } else { q };
        Fixed { raw, frac }
    }

    /// Nearest fixed-point value to `x` (exact when `x` has no bits below `2^-frac`).
    pub fn from_f64(x: f64, frac: u32) -> Result<Self, NumericsError> {
        let r = BigRational::from_float(x)
            .ok_or_else(|| NumericsError::InvalidArgument(format!("non-finite value {x}")))?;
        Ok(Self::from_rational(&r, frac))
    }

    pub fn to_rational(&self) -> BigRational {
        BigRational::new(self.raw.clone(), BigInt::one() << self.frac)
    }

    /// Correctly rounded conversion to binary64.
    pub fn to_f64(&self) -> f64 {
        FpaFormat::BINARY64.round_rational(&self.to_rational()).get()
    }

    /// Cheap conversion with a relative error of a few ulps.
    pub fn approx_f64(&self) -> f64 {
        let b = self.raw.bits();
        let s = b.saturating_sub(60);
        let top = (&self.raw >> s).to_i64().expect("60-bit value") as f64;
        top * 2f64.powi(s as i32 - self.frac as i32)
    }

    /// Same value at a different number of fractional bits (rounded).
    pub fn rescale(&self, frac: u32) -> Fixed {
        Fixed { raw: shift(&self.raw, frac as i64 - self.frac as i64), frac }
    }

    fn aligned(&self, other: &Fixed) -> (BigInt, BigInt, u32) {
        match self.frac.cmp(&other.frac) {
            Ordering::Equal => (self.raw.clone(), other.raw.clone(), self.frac),
            Ordering::Less => (self.rescale(other.frac).raw, other.raw.clone(), other.frac),
            Ordering::Greater => (self.raw.clone(), other.rescale(self.frac).raw, self.frac),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.raw.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.raw.is_negative()
    }

    pub fn abs(&self) -> Fixed {
        Fixed { raw: self.raw.abs(), frac: self.frac }
    }

    pub fn mul(&self, other: &Fixed) -> Fixed {
        let (a, b, f) = self.aligned(other);
        Fixed { raw: shr_round(&(a * b), f), frac: f }
    }

    pub fn div(&self, other: &Fixed) -> Result<Fixed, NumericsError> {
        if other.is_zero() {
            return Err(NumericsError::Domain("division by zero".into()));
        }
        let (a, b, f) = self.aligned(other);
        let (q, r) = (a << f).div_mod_floor(&b);
        let raw = if (r << 1u32).abs() >= b.abs() { q + 1 } else { q };
        Ok(Fixed { raw, frac: f })
    }

    pub fn mul_int(&self, k: i64) -> Fixed {
        Fixed { raw: &self.raw * k, frac: self.frac }
    }

    pub fn div_int(&self, k: i64) -> Result<Fixed, NumericsError> {
        if k == 0 {
            return Err(NumericsError::Domain("division by zero".into()));
        }
        let k = BigInt::from(k);
        let (q, r) = self.raw.div_mod_floor(&k);
        let raw = if (r << 1u32).abs() >= k.abs() { q + 1 } else { q };
        Ok(Fixed { raw, frac: self.frac })
    }

    /// Nearest integer (ties toward +inf).
    pub fn round_to_int(&self) -> BigInt {
        shr_round(&self.raw, self.frac)
    }

    pub fn floor_to_int(&self) -> BigInt {
        &self.raw >> self.frac
    }

    pub fn ln2(frac: u32) -> Fixed {
        Fixed { raw: ln2_raw(frac), frac }
    }

    pub fn ln3(frac: u32) -> Fixed {
        Fixed { raw: ln3_raw(frac), frac }
    }

    /// `e^self`, accurate to about one unit in the last fractional place
    /// relative to the result.
    pub fn exp(&self) -> Fixed {
        let f = self.frac;
        let xf = self.approx_f64();
        if xf < -((f + 2) as f64) * std::f64::consts::LN_2 {
            return Fixed::zero(f);
        }
        let k = (xf / std::f64::consts::LN_2).round() as i64;
        let w = f + GUARD_BITS + bit_len(k);
        let one = BigInt::one() << w;
        let r = (&self.raw << (w - f)) - ln2_raw(w) * k;
        let mut sum = one.clone();
        let mut term = one;
        let mut n: u64 = 1;
        while !term.is_zero() {
            term = ((&term * &r) >> w) / n;
            sum += &term;
            n += 1;
        }
        Fixed { raw: shift(&sum, k - (w - f) as i64), frac: f }
    }

    pub fn ln(&self) -> Result<Fixed, NumericsError> {
        if !self.raw.is_positive() {
            return Err(NumericsError::Domain("ln of non-positive value".into()));
        }
        Ok(ln_scaled(&self.raw, -(self.frac as i64), self.frac))
    }

    pub fn ln_bigint(n: &BigInt, frac: u32) -> Result<Fixed, NumericsError> {
        if !n.is_positive() {
            return Err(NumericsError::Domain("ln of non-positive value".into()));
        }
        Ok(ln_scaled(n, 0, frac))
    }

    pub fn ln_rational(x: &BigRational, frac: u32) -> Result<Fixed, NumericsError> {
        if !x.is_positive() {
            return Err(NumericsError::Domain("ln of non-positive value".into()));
        }
        let w = frac + 4;
        let a = ln_scaled(x.numer(), 0, w);
        let b = ln_scaled(x.denom(), 0, w);
        Ok((a - b).rescale(frac))
    }

    /// `ln(1 + e^self)`.
    pub fn softplus(&self) -> Fixed {
        let f = self.frac;
        let w = f + 8;
        let z = self.rescale(w);
        let tail = z.abs().neg().exp();
        let log1p = (Fixed::one(w) + tail).ln().expect("1 + e^x is positive");
        let pos = if z.is_negative() { Fixed::zero(w) } else { z };
        (pos + log1p).rescale(f)
    }
}

impl Ord for Fixed {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b, _) = self.aligned(other);
        a.cmp(&b)
    }
}

impl PartialOrd for Fixed {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Add for Fixed {
    type Output = Fixed;
    fn add(self, rhs: Fixed) -> Fixed {
        &self + &rhs
    }
}

impl Add<&Fixed> for &Fixed {
    type Output = Fixed;
    fn add(self, rhs: &Fixed) -> Fixed {
        if self.frac == rhs.frac {
            return Fixed { raw: &self.raw + &rhs.raw, frac: self.frac };
        }
        let (a, b, f) = self.aligned(rhs);
        Fixed { raw: a + b, frac: f }
    }
}

impl Sub for Fixed {
    type Output = Fixed;
    fn sub(self, rhs: Fixed) -> Fixed {
        &self - &rhs
    }
}

impl Sub<&Fixed> for &Fixed {
    type Output = Fixed;
    fn sub(self, rhs: &Fixed) -> Fixed {
        if self.frac == rhs.frac {
            return Fixed { raw: &self.raw - &rhs.raw, frac: self.frac };
        }
        let (a, b, f) = self.aligned(rhs);
        Fixed { raw: a - b, frac: f }
    }
}

impl Neg for Fixed {
    type Output = Fixed;
    fn neg(self) -> Fixed {
        Fixed { raw: -self.raw, frac: self.frac }
    }
}

impl fmt::Display for Fixed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

impl From<&Fixed> for f64 {
    fn from(x: &Fixed) -> f64 {
        x.to_f64()
    }
}

/// Sign of a fixed-point value as -1, 0 or 1.
pub fn signum(x: &Fixed) -> i32 {
    match x.raw.sign() {
        Sign::Minus => -1,
        Sign::NoSign => 0,
        Sign::Plus => 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Pow;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// First `n` decimal digits after the point of `x >= 0`, truncated.
    fn decimals(x: &Fixed, n: u32) -> String {
        let scaled = (&x.raw * BigInt::from(10u32).pow(n)) >> x.frac;
        scaled.to_string()
    }

    const E_50: &str = "271828182845904523536028747135266249775724709369995";
    const LN2_50: &str = "69314718055994530941723212145817656807550013436025";
    const LN3_50: &str = "109861228866810969139524523692252570464749055782274";

    #[test]
    fn constants_to_fifty_digits() {
        assert_eq!(decimals(&Fixed::ln2(256), 50), LN2_50);
        assert_eq!(decimals(&Fixed::ln3(256), 50), LN3_50);
        assert_eq!(decimals(&Fixed::one(256).exp(), 50), E_50);
        assert_eq!(decimals(&Fixed::ln2(3000), 50), LN2_50);
    }

    #[test]
    fn f64_conversions() {
        assert_eq!(Fixed::ln2(200).to_f64(), std::f64::consts::LN_2);
        assert_eq!(Fixed::ln3(200).to_f64(), 3f64.ln());
        let x = Fixed::from_f64(-1.375, 10).unwrap();
        assert_eq!(x.to_f64(), -1.375);
        assert_eq!(x.round_to_int(), BigInt::from(-1));
        assert_eq!(x.floor_to_int(), BigInt::from(-2));
        assert!((Fixed::ln3(128).approx_f64() - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn exp_and_ln_are_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let tol = Fixed::from_raw(BigInt::one() << 60u32, 256);
        for _ in 0..200 {
            let x = Fixed::from_f64(rng.random_range(-40.0..40.0), 256).unwrap();
            let back = x.exp().ln().unwrap();
            assert!((&back - &x).abs() < tol, "x={x}");
        }
        for _ in 0..200 {
            let x = Fixed::from_f64(rng.random_range(1e-6..1e6), 256).unwrap();
            let back = x.ln().unwrap().exp();
            let rel = (&back - &x).abs().div(&x).unwrap();
            assert!(rel < tol, "x={x}");
        }
    }

    #[test]
    fn huge_and_tiny_exponents() {
        let x = Fixed::from_int(1000, 64);
        let e = x.exp();
        assert!((e.ln().unwrap().to_f64() - 1000.0).abs() < 1e-12);
        assert!(Fixed::from_int(-1000, 64).exp().is_zero());
        let big = BigInt::from(3) << 100u32;
        let l = Fixed::ln_bigint(&big, 128).unwrap();
        let expect = (&Fixed::ln2(200).mul_int(100) + &Fixed::ln3(200)).rescale(128);
        assert!((&l - &expect).abs() <= Fixed::from_raw(BigInt::from(2), 128));
    }

    #[test]
    fn ln_of_rationals() {
        let r = BigRational::new(BigInt::from(2304), BigInt::from(55));
        let l = Fixed::ln_rational(&r, 128).unwrap();
        assert!((l.to_f64() - (2304f64 / 55.0).ln()).abs() < 1e-14);
        assert!(Fixed::ln_rational(&BigRational::zero(), 64).is_err());
        assert!(Fixed::zero(8).ln().is_err());
    }

    #[test]
    fn softplus_values() {
        assert_eq!(Fixed::zero(128).softplus(), Fixed::ln2(128));
        let big = Fixed::from_int(500, 128);
        assert_eq!(big.softplus(), big);
        let neg = Fixed::from_int(-30, 128).softplus().to_f64();
        assert!((neg - (-30f64).exp()).abs() < 1e-25);
        let x = Fixed::from_f64(1.5, 128).unwrap().softplus().to_f64();
        assert!((x - (1.0 + 1.5f64.exp()).ln()).abs() < 1e-15);
    }

    #[test]
    fn arithmetic_and_ordering() {
        let a = Fixed::from_f64(2.5, 16).unwrap();
        let b = Fixed::from_f64(0.5, 32).unwrap();
        assert_eq!((&a + &b).to_f64(), 3.0);
        assert_eq!((&a - &b).to_f64(), 2.0);
        assert_eq!(a.mul(&b).to_f64(), 1.25);
        assert_eq!(a.div(&b).unwrap().to_f64(), 5.0);
        assert_eq!(a.div_int(2).unwrap().to_f64(), 1.25);
        assert!(a > b);
        assert!(a.div(&Fixed::zero(4)).is_err());
        assert_eq!(signum(&(-a)), -1);
    }
}
