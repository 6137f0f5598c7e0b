//! Emulated binary floating point with a configurable exponent width and
//! significand precision.
//!
//! Values are carried in an `f64` that is guaranteed to lie on the format's
//! grid. Every elementary operation computes the exact result (or an exact
//! error term next to the hardware result) and then rounds to nearest, ties
//! to even. Formats are restricted to those whose grid is a subset of
//! binary64, which covers everything from tiny teaching formats up to
//! binary64 itself.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use super::NumericsError;

/// A binary float format: one sign bit, `exp_bits` exponent bits and a
/// significand of `frac_bits` bits of precision (hidden bit included).
///
/// `FpaFormat::new(11, 53)` is IEEE-754 binary64 and `FpaFormat::new(8, 24)`
/// is binary32. The exponent range is the IEEE one: `emax = 2^(exp_bits-1) - 1`,
/// `emin = 1 - emax`, with gradual underflow below `2^emin`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FpaFormat {
    exp_bits: u32,
    frac_bits: u32,
}

impl fmt::Display for FpaFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "fmt({},{})", self.exp_bits, self.frac_bits)
    }
}

/// Exact power of two as an `f64`, valid for `-1074 <= e <= 1023`.
pub(crate) fn pow2(e: i32) -> f64 {
    debug_assert!((-1074..=1023).contains(&e), "pow2 exponent {e}");
    if e >= -1022 {
        f64::from_bits(((e + 1023) as u64) << 52)
    } else {
        f64::from_bits(1u64 << (e + 1074))
    }
}

/// `floor(log2 |x|)` for finite non-zero `x`, including f64 subnormals.
pub(crate) fn exponent_of(x: f64) -> i32 {
    let bits = x.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    if biased == 0 {
        let m = bits & ((1u64 << 52) - 1);
        -1074 + (63 - m.leading_zeros() as i32)
    } else {
        biased - 1023
    }
}

impl FpaFormat {
    pub const BINARY64: FpaFormat = FpaFormat { exp_bits: 11, frac_bits: 53 };
    pub const BINARY32: FpaFormat = FpaFormat { exp_bits: 8, frac_bits: 24 };

    pub fn new(exp_bits: u32, frac_bits: u32) -> Result<Self, NumericsError> {
        if !(2..=11).contains(&exp_bits) || !(2..=53).contains(&frac_bits) {
            return Err(NumericsError::InvalidFormat { exp_bits, frac_bits });
        }
        Ok(FpaFormat { exp_bits, frac_bits })
    }

    /// Default split of a `phi`-bit budget: `(phi - 1) / 2` bits each for the
    /// exponent and the significand (the extra bit of an even `phi` goes to the
    /// significand).
    pub fn with_total_bits(phi: u32) -> Result<Self, NumericsError> {
        let rest = phi.saturating_sub(1);
        Self::new(rest / 2, rest - rest / 2)
    }

    pub fn exp_bits(&self) -> u32 {
        self.exp_bits
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    /// Total bit budget `1 + exp_bits + frac_bits`.
    pub fn phi(&self) -> u32 {
        1 + self.exp_bits + self.frac_bits
    }

    /// Significand precision in bits.
    pub fn precision(&self) -> u32 {
        self.frac_bits
    }

    pub fn emax(&self) -> i32 {
        (1 << (self.exp_bits - 1)) - 1
    }

    pub fn emin(&self) -> i32 {
        1 - self.emax()
    }

    pub fn is_binary64(&self) -> bool {
        *self == Self::BINARY64
    }

    pub fn max_finite(&self) -> f64 {
        let p = self.frac_bits as i32;
        // (2^p - 1) * 2^(emax - p + 1), split to stay inside f64 range
        ((1u64 << p) - 1) as f64 * pow2(self.emax() - p + 1)
    }

    pub fn min_positive(&self) -> f64 {
        pow2(self.emin() - self.frac_bits as i32 + 1)
    }

    pub fn min_normal(&self) -> f64 {
        pow2(self.emin())
    }

    fn quantum_exp(&self, x: f64) -> i32 {
        exponent_of(x).max(self.emin()) - (self.frac_bits as i32 - 1)
    }

    fn overflow_check(&self, r: f64) -> f64 {
        if r.abs() > self.max_finite() {
            f64::INFINITY.copysign(r)
        } else {
            r
        }
    }

    /// Round an `f64` to nearest, ties to even.
    pub fn round_f64(&self, x: f64) -> f64 {
        if x == 0.0 || !x.is_finite() || self.is_binary64() {
            return x;
        }
        let q = pow2(self.quantum_exp(x));
        self.overflow_check((x / q).round_ties_even() * q)
    }

    /// Correctly round the exact value `hi + lo`, where `hi` is the nearest
    /// binary64 value to it. Only the sign of `lo` is consulted.
    fn round_pair(&self, hi: f64, lo: f64) -> f64 {
        if self.is_binary64() || lo == 0.0 || hi == 0.0 || !hi.is_finite() {
            return self.round_f64(hi);
        }
        let q = pow2(self.quantum_exp(hi));
        let t = hi / q;
        let fl = t.floor();
        if t - fl == 0.5 {
            let k = if lo > 0.0 { fl + 1.0 } else { fl };
            self.overflow_check(k * q)
        } else {
            self.round_f64(hi)
        }
    }

    /// Round an exact rational to nearest, ties to even.
    pub fn round_rational(&self, x: &BigRational) -> FpaValue {
        if x.is_zero() {
            return FpaValue(0.0);
        }
        let negative = x.is_negative();
        let n = x.numer().abs();
        let d = x.denom().abs();
        let mut e = n.bits() as i64 - d.bits() as i64;
        let below = if e >= 0 { n < (&d << e as usize) } else { (&n << (-e) as usize) < d };
        if below {
            e -= 1;
        }
        let sign = if negative { -1.0 } else { 1.0 };
        if e > self.emax() as i64 {
            return FpaValue(f64::INFINITY * sign);
        }
        let e = e.max(self.emin() as i64);
        let qe = e - (self.frac_bits as i64 - 1);
        let (num, den) = if qe >= 0 { (n, d << qe as usize) } else { (n << (-qe) as usize, d) };
        let (mut k, rem): (BigInt, BigInt) = num.div_rem(&den);
        match (rem << 1usize).cmp(&den) {
            Ordering::Greater => k += 1,
            Ordering::Equal if k.is_odd() => k += 1,
            _ => {}
        }
        let k = u64::try_from(&k).expect("rounded significand fits in 54 bits") as f64;
        FpaValue(self.overflow_check(sign * k * pow2(qe as i32)))
    }

    /// Round an exact integer.
    pub fn round_u64(&self, n: u64) -> FpaValue {
        if n < (1u64 << 53) {
            FpaValue(self.round_f64(n as f64))
        } else {
            self.round_rational(&BigRational::from_integer(BigInt::from(n)))
        }
    }

    /// Correctly rounded quotient of two exact integers.
    pub fn round_ratio(&self, num: u64, den: u64) -> Result<FpaValue, NumericsError> {
        if den == 0 {
            return Err(NumericsError::Domain("division by zero".into()));
        }
        if num < (1u64 << 53) && den < (1u64 << 53) {
            let (a, b) = (num as f64, den as f64);
            let q = a / b;
            if self.is_binary64() || q == 0.0 || q.abs() >= 1e-290 {
                let r = (-q).mul_add(b, a);
                return Ok(FpaValue(self.round_pair(q, r)));
            }
        }
        Ok(self.round_rational(&BigRational::new(BigInt::from(num), BigInt::from(den))))
    }

    /// Whether `x` lies on this format's grid (infinities included).
    pub fn contains(&self, x: f64) -> bool {
        !x.is_nan() && self.round_f64(x) == x
    }

    pub fn value(&self, x: f64) -> Result<FpaValue, NumericsError> {
        if self.contains(x) {
            Ok(FpaValue(x))
        } else {
            Err(NumericsError::InvalidArgument(format!("{x} is not representable in {self}")))
        }
    }

    pub fn add(&self, a: FpaValue, b: FpaValue) -> FpaValue {
        let s = a.0 + b.0;
        if self.is_binary64() || !s.is_finite() {
            return FpaValue(self.round_f64(s));
        }
        let bb = s - a.0;
        let err = (a.0 - (s - bb)) + (b.0 - bb);
        FpaValue(self.round_pair(s, err))
    }

    pub fn sub(&self, a: FpaValue, b: FpaValue) -> FpaValue {
        self.add(a, FpaValue(-b.0))
    }

    pub fn mul(&self, a: FpaValue, b: FpaValue) -> FpaValue {
        let p = a.0 * b.0;
        if self.is_binary64() || !p.is_finite() || p == 0.0 {
            return FpaValue(self.round_f64(p));
        }
        if p.abs() < 1e-290 {
            return self.exact_fallback(a, b, |x, y| x * y);
        }
        let err = a.0.mul_add(b.0, -p);
        FpaValue(self.round_pair(p, err))
    }

    pub fn div(&self, a: FpaValue, b: FpaValue) -> Result<FpaValue, NumericsError> {
        if b.0 == 0.0 {
            return Err(NumericsError::Domain("division by zero".into()));
        }
        let q = a.0 / b.0;
        if self.is_binary64() || !q.is_finite() || q == 0.0 {
            return Ok(FpaValue(self.round_f64(q)));
        }
        if q.abs() < 1e-290 {
            return Ok(self.exact_fallback(a, b, |x, y| x / y));
        }
        // a - q*b is exact; its sign relative to b says which side of q the quotient lies
        let r = (-q).mul_add(b.0, a.0);
        Ok(FpaValue(self.round_pair(q, r * b.0.signum())))
    }

    /// Natural log, computed in binary64 and rounded (faithful, not
    /// guaranteed correctly rounded).
    pub fn ln(&self, a: FpaValue) -> Result<FpaValue, NumericsError> {
        if !(a.0 > 0.0) {
            return Err(NumericsError::Domain(format!("ln of non-positive value {}", a.0)));
        }
        Ok(FpaValue(self.round_f64(a.0.ln())))
    }

    /// Exponential, computed in binary64 and rounded.
    pub fn exp(&self, a: FpaValue) -> FpaValue {
        FpaValue(self.round_f64(a.0.exp()))
    }

    fn exact_fallback(
        &self,
        a: FpaValue,
        b: FpaValue,
        op: impl Fn(BigRational, BigRational) -> BigRational,
    ) -> FpaValue {
        let x = BigRational::from_float(a.0).expect("finite operand");
        let y = BigRational::from_float(b.0).expect("finite operand");
        self.round_rational(&op(x, y))
    }

    /// Neighbouring grid value of `x` in the direction of `target`.
    pub fn next_toward(&self, x: FpaValue, target: f64) -> FpaValue {
        let v = x.0;
        if v == target || v.is_nan() || target.is_nan() {
            return x;
        }
        let up = target > v;
        if v.is_infinite() {
            return FpaValue(self.max_finite().copysign(v));
        }
        if v == 0.0 {
            let m = self.min_positive();
            return FpaValue(if up { m } else { -m });
        }
        let away = up == (v > 0.0);
        let qe = self.quantum_exp(v);
        let mut step = pow2(qe);
        let a = v.abs();
        if !away && exponent_of(a) > self.emin() && a == pow2(exponent_of(a)) {
            step = pow2(qe - 1);
        }
        let r = if up { v + step } else { v - step };
        FpaValue(self.overflow_check(r))
    }

    /// Bit pattern laid out as sign, biased exponent, stored fraction
    /// (`frac_bits - 1` bits). For binary64 this is exactly `f64::to_bits`.
    pub fn encode(&self, v: FpaValue) -> u64 {
        let x = v.0;
        let stored = self.frac_bits - 1;
        let sign = (x.is_sign_negative() as u64) << (self.exp_bits + stored);
        let all_ones = (1u64 << self.exp_bits) - 1;
        if x.is_nan() {
            return (all_ones << stored) | (1u64 << (stored.max(1) - 1));
        }
        if x.is_infinite() {
            return sign | (all_ones << stored);
        }
        if x == 0.0 {
            return sign;
        }
        let a = x.abs();
        let e = exponent_of(a);
        if e < self.emin() {
            let frac = (a / pow2(self.emin() - stored as i32)) as u64;
            sign | frac
        } else {
            let biased = (e + self.emax()) as u64;
            let frac = (a / pow2(e - stored as i32)) as u64 - (1u64 << stored);
            sign | (biased << stored) | frac
        }
    }

    pub fn decode(&self, bits: u64) -> Result<FpaValue, NumericsError> {
        let stored = self.frac_bits - 1;
        let width = self.exp_bits + stored + 1;
        if width < 64 && bits >> width != 0 {
            return Err(NumericsError::InvalidArgument(format!("bit pattern {bits:#x} is wider than {width} bits")));
        }
        let sign = if (bits >> (self.exp_bits + stored)) & 1 == 1 { -1.0 } else { 1.0 };
        let all_ones = (1u64 << self.exp_bits) - 1;
        let biased = (bits >> stored) & all_ones;
        let frac = bits & ((1u64 << stored) - 1);
        let a = if biased == all_ones {
            if frac == 0 {
                f64::INFINITY
            } else {
                f64::NAN
            }
        } else if biased == 0 {
            frac as f64 * pow2(self.emin() - stored as i32)
        } else {
            let e = biased as i32 - self.emax();
            ((1u64 << stored) + frac) as f64 * pow2(e - stored as i32)
        };
        Ok(FpaValue(sign * a))
    }
}

/// A value on the grid of some [`FpaFormat`]. Overflow is carried as a signed
/// infinity sentinel.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
pub struct FpaValue(f64);

impl FpaValue {
    pub const ZERO: FpaValue = FpaValue(0.0);
    pub const ONE: FpaValue = FpaValue(1.0);

    pub fn get(self) -> f64 {
        self.0
    }

    pub fn is_overflow(self) -> bool {
        self.0.is_infinite()
    }

    pub fn neg(self) -> FpaValue {
        FpaValue(-self.0)
    }

    pub fn abs(self) -> FpaValue {
        FpaValue(self.0.abs())
    }
}

impl fmt::Display for FpaValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Round `x` into `fmt`.
pub fn fpa_round(x: f64, fmt: FpaFormat) -> FpaValue {
    FpaValue(fmt.round_f64(x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FpaOp {
    Add,
    Sub,
    Mul,
    Div,
    Ln,
    Exp,
}

/// Apply `op` in `fmt`. `b` is ignored by the unary operations.
pub fn fpa_arith(op: FpaOp, a: FpaValue, b: FpaValue, fmt: FpaFormat) -> Result<FpaValue, NumericsError> {
    match op {
        FpaOp::Add => Ok(fmt.add(a, b)),
        FpaOp::Sub => Ok(fmt.sub(a, b)),
        FpaOp::Mul => Ok(fmt.mul(a, b)),
        FpaOp::Div => fmt.div(a, b),
        FpaOp::Ln => fmt.ln(a),
        FpaOp::Exp => Ok(fmt.exp(a)),
    }
}

impl From<FpaValue> for f64 {
    fn from(v: FpaValue) -> f64 {
        v.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn all_values(fmt: FpaFormat) -> Vec<f64> {
        let width = fmt.phi() - 1;
        (0..(1u64 << width)).map(|b| fmt.decode(b).unwrap().get()).filter(|x| x.is_finite()).collect()
    }

    fn nearest_by_enumeration(fmt: FpaFormat, x: f64) -> f64 {
        let vals = all_values(fmt);
        let mut best = vals[0];
        for &v in &vals {
            let (dv, db) = ((v - x).abs(), (best - x).abs());
            let even = |y: f64| fmt.encode(FpaValue(y)) & 1 == 0;
            if dv < db || (dv == db && even(v) && !even(best)) {
                best = v;
            }
        }
        best
    }

    #[test]
    fn one_point_three_in_tiny_format() {
        let fmt = FpaFormat::new(3, 3).unwrap();
        assert_eq!(fpa_round(1.3, fmt).get(), 1.25);
        assert_eq!(nearest_by_enumeration(fmt, 1.3), 1.25);
    }

    #[test]
    fn rounding_matches_enumeration_in_small_formats() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (e, p) in [(3, 3), (3, 4), (4, 5), (2, 2)] {
            let fmt = FpaFormat::new(e, p).unwrap();
            let max = fmt.max_finite();
            for _ in 0..2_000 {
                let x: f64 = rng.random_range(-max..max);
                assert_eq!(fpa_round(x, fmt).get(), nearest_by_enumeration(fmt, x), "{fmt} x={x}");
            }
        }
    }

    #[test]
    fn representable_values_are_fixed_points() {
        let fmt = FpaFormat::new(4, 4).unwrap();
        for v in all_values(fmt) {
            assert_eq!(fpa_round(v, fmt).get(), v);
            assert_eq!(fmt.round_rational(&BigRational::from_float(v).unwrap()).get(), v);
        }
    }

    #[test]
    fn overflow_and_underflow() {
        let fmt = FpaFormat::new(3, 3).unwrap();
        // emax = 3, max = 1.75 * 8 = 14
        assert_eq!(fmt.max_finite(), 14.0);
        assert!(fpa_round(15.0, fmt).is_overflow());
        assert_eq!(fpa_round(14.9, fmt).get(), 14.0);
        assert!(fpa_round(-20.0, fmt).get() == f64::NEG_INFINITY);
        // emin = -2, smallest subnormal 2^-4
        assert_eq!(fmt.min_positive(), 0.0625);
        assert_eq!(fpa_round(0.03, fmt).get(), 0.0);
        assert_eq!(fpa_round(0.04, fmt).get(), 0.0625);
        assert_eq!(FpaFormat::BINARY64.max_finite(), f64::MAX);
        assert_eq!(FpaFormat::BINARY32.max_finite(), f32::MAX as f64);
        assert_eq!(FpaFormat::BINARY32.min_positive(), f32::from_bits(1) as f64);
    }

    #[test]
    fn binary64_encoding_is_hardware_encoding() {
        let fmt = FpaFormat::BINARY64;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let x = f64::from_bits(rng.random::<u64>());
            if x.is_nan() {
                continue;
            }
            let v = fmt.value(x).unwrap();
            assert_eq!(fmt.encode(v), x.to_bits());
            assert_eq!(fmt.decode(x.to_bits()).unwrap().get().to_bits(), x.to_bits());
        }
    }

    #[test]
    fn binary32_encoding_is_hardware_encoding() {
        let fmt = FpaFormat::BINARY32;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let x = f32::from_bits(rng.random::<u32>());
            if x.is_nan() {
                continue;
            }
            let v = fmt.value(x as f64).unwrap();
            assert_eq!(fmt.encode(v), x.to_bits() as u64);
        }
    }

    #[test]
    fn small_format_round_trips_every_pattern() {
        let fmt = FpaFormat::new(3, 4).unwrap();
        for bits in 0..(1u64 << 6) {
            let v = fmt.decode(bits).unwrap();
            if v.get().is_nan() {
                continue;
            }
            assert_eq!(fmt.encode(v), bits);
        }
    }

    fn random_f32(rng: &mut ChaCha8Rng) -> f32 {
        loop {
            let x = f32::from_bits(rng.random::<u32>());
            if x.is_finite() {
                return x;
            }
        }
    }

    #[test]
    fn binary32_arithmetic_matches_hardware() {
        let fmt = FpaFormat::BINARY32;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..200_000 {
            let (a, b) = if i % 2 == 0 {
                (random_f32(&mut rng), random_f32(&mut rng))
            } else {
                (rng.random_range(-4.0f32..4.0), rng.random_range(-4.0f32..4.0))
            };
            let (fa, fb) = (FpaValue(a as f64), FpaValue(b as f64));
            assert_eq!(fmt.add(fa, fb).get(), (a + b) as f64, "{a} + {b}");
            assert_eq!(fmt.sub(fa, fb).get(), (a - b) as f64, "{a} - {b}");
            assert_eq!(fmt.mul(fa, fb).get(), (a * b) as f64, "{a} * {b}");
            if b != 0.0 {
                assert_eq!(fmt.div(fa, fb).unwrap().get(), (a / b) as f64, "{a} / {b}");
            }
        }
    }

    #[test]
    fn binary64_arithmetic_matches_exact_rounding() {
        let fmt = FpaFormat::BINARY64;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20_000 {
            let a: f64 = rng.random_range(-1e6..1e6);
            let b: f64 = rng.random_range(-1e6..1e6);
            let (ra, rb) = (BigRational::from_float(a).unwrap(), BigRational::from_float(b).unwrap());
            let (fa, fb) = (FpaValue(a), FpaValue(b));
            assert_eq!(fmt.add(fa, fb), fmt.round_rational(&(&ra + &rb)));
            assert_eq!(fmt.mul(fa, fb), fmt.round_rational(&(&ra * &rb)));
            assert_eq!(fmt.div(fa, fb).unwrap(), fmt.round_rational(&(&ra / &rb)));
            assert_eq!(fmt.mul(fa, fb).get(), a * b);
        }
    }

    #[test]
    fn generic_path_matches_exact_rounding() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (e, p) in [(5, 11), (6, 6), (11, 40)] {
            let fmt = FpaFormat::new(e, p).unwrap();
            for _ in 0..5_000 {
                let a = fmt.round_f64(rng.random_range(-100.0..100.0));
                let b = fmt.round_f64(rng.random_range(-100.0..100.0));
                let (ra, rb) = (BigRational::from_float(a).unwrap(), BigRational::from_float(b).unwrap());
                let (fa, fb) = (FpaValue(a), FpaValue(b));
                assert_eq!(fmt.add(fa, fb), fmt.round_rational(&(&ra + &rb)), "{fmt} {a}+{b}");
                assert_eq!(fmt.mul(fa, fb), fmt.round_rational(&(&ra * &rb)), "{fmt} {a}*{b}");
                if b != 0.0 {
                    assert_eq!(fmt.div(fa, fb).unwrap(), fmt.round_rational(&(&ra / &rb)), "{fmt} {a}/{b}");
                }
            }
        }
    }

    #[test]
    fn ratio_rounding_is_correct() {
        let fmt = FpaFormat::new(3, 3).unwrap();
        // 11/12 = 0.91666: grid spacing 1/8 below 1 → 0.875 or 1.0
        assert_eq!(fmt.round_ratio(11, 12).unwrap().get(), 0.875);
        let b64 = FpaFormat::BINARY64;
        assert_eq!(b64.round_ratio(2, 3).unwrap().get(), 2.0 / 3.0);
        assert!(b64.round_ratio(1, 0).is_err());
    }

    #[test]
    fn identities_and_domain_errors() {
        let fmt = FpaFormat::new(5, 11).unwrap();
        let x = fmt.value(1.5).unwrap();
        assert_eq!(fmt.add(x, FpaValue::ZERO), x);
        assert_eq!(fmt.ln(FpaValue::ONE).unwrap(), FpaValue::ZERO);
        assert!(fmt.ln(FpaValue::ZERO).is_err());
        assert!(fmt.ln(FpaValue(-1.0)).is_err());
        assert!(fmt.div(x, FpaValue::ZERO).is_err());
        assert_eq!(fpa_arith(FpaOp::Exp, FpaValue::ZERO, FpaValue::ZERO, fmt).unwrap(), FpaValue::ONE);
    }

    #[test]
    fn next_toward_walks_the_grid() {
        let fmt = FpaFormat::new(3, 3).unwrap();
        let one = FpaValue(1.0);
        assert_eq!(fmt.next_toward(one, 2.0).get(), 1.25);
        assert_eq!(fmt.next_toward(one, 0.0).get(), 0.875);
        assert_eq!(fmt.next_toward(FpaValue(0.0), 1.0).get(), 0.0625);
        assert!(fmt.next_toward(FpaValue(14.0), 100.0).is_overflow());
        assert_eq!(fmt.next_toward(FpaValue(f64::INFINITY), 0.0).get(), 14.0);
    }

    #[test]
    fn default_split() {
        let f = FpaFormat::with_total_bits(13).unwrap();
        assert_eq!((f.exp_bits(), f.frac_bits(), f.phi()), (6, 6, 13));
        assert!(FpaFormat::with_total_bits(4).is_err());
        assert!(FpaFormat::new(12, 53).is_err());
        assert!(FpaFormat::new(11, 54).is_err());
    }
}
