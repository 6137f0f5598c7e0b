//! Labelings, weight vectors, prediction vectors and matrices, and log-loss
//! evaluation in either arithmetic model.
//!
//! Attacks are designed on weights `v`, which map to probabilities through
//! `f(x) = x / (1 + x)`. With that substitution the binary log-loss becomes
//!
//! ```text
//! L_v(σ) = -(1/N) ln( ∏_{σ_i = 1} v_i / ∏_i (1 + v_i) )
//! ```
//!
//! and for rational `v` the likelihood inside the logarithm is rational, which
//! is what the exact model carries around.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::exact::{self, ExactScalar};
use crate::numerics::fixed::{Fixed, DEFAULT_FRAC_BITS};
use crate::numerics::{FpaFormat, FpaValue, NumericsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("labeling must be non-empty")]
    Empty,
    #[error("label {value} at position {index} is outside 1..={k}")]
    LabelOutOfRange { index: usize, value: u32, k: u32 },
    #[error("bit {value} at position {index} is not 0 or 1")]
    NotABit { index: usize, value: u8 },
    #[error("class count must be at least 2, got {0}")]
    TooFewClasses(u32),
    #[error("weight at position {0} is not strictly positive")]
    NonPositiveWeight(usize),
    #[error("probability at position {0} is outside the open interval (0, 1)")]
    NotAProbability(usize),
    #[error("row {0} does not sum to 1")]
    NotStochastic(usize),
    #[error("matrix has {got} classes, labeling has {expected}")]
    ClassMismatch { expected: u32, got: u32 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Hidden binary ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryLabeling(Vec<u8>);

impl BinaryLabeling {
    pub fn new(bits: Vec<u8>) -> Result<Self, LossError> {
        if bits.is_empty() {
            return Err(LossError::Empty);
        }
        if let Some((index, &value)) = bits.iter().enumerate().find(|(_, &b)| b > 1) {
            return Err(LossError::NotABit { index, value });
        }
        Ok(BinaryLabeling(bits))
    }

    pub fn zeros(n: usize) -> Result<Self, LossError> {
        Self::new(vec![0; n])
    }

    /// Labeling whose bit `i` is bit `i` of `index`.
    pub fn from_index(index: u64, n: usize) -> Result<Self, LossError> {
        Self::new((0..n).map(|i| ((index >> i) & 1) as u8).collect())
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self, LossError> {
        Self::new((0..n).map(|_| rng.random_range(0..=1u8)).collect())
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i] == 1
    }

    pub fn flip(&mut self, i: usize) {
        self.0[i] ^= 1;
    }

    pub fn ones(&self) -> usize {
        self.0.iter().filter(|&&b| b == 1).count()
    }

    pub fn hamming(&self, other: &BinaryLabeling) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }

    /// The same labels as classes `1` (bit 0) and `2` (bit 1).
    pub fn to_kary(&self) -> KaryLabeling {
        KaryLabeling { classes: self.0.iter().map(|&b| b as u32 + 1).collect(), k: 2 }
    }
}

/// Hidden K-ary ground truth with classes `1..=k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KaryLabeling {
    classes: Vec<u32>,
    k: u32,
}

impl KaryLabeling {
    pub fn new(classes: Vec<u32>, k: u32) -> Result<Self, LossError> {
        if k < 2 {
            return Err(LossError::TooFewClasses(k));
        }
        if classes.is_empty() {
            return Err(LossError::Empty);
        }
        if let Some((index, &value)) = classes.iter().enumerate().find(|(_, &c)| c == 0 || c > k) {
            return Err(LossError::LabelOutOfRange { index, value, k });
        }
        Ok(KaryLabeling { classes, k })
    }

    pub fn random<R: Rng + ?Sized>(n: usize, k: u32, rng: &mut R) -> Result<Self, LossError> {
        Self::new((0..n).map(|_| rng.random_range(1..=k)).collect(), k)
    }

    pub fn classes(&self) -> &[u32] {
        &self.classes
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Binary view of a two-class labeling.
    pub fn to_binary(&self) -> Option<BinaryLabeling> {
        (self.k == 2).then(|| BinaryLabeling(self.classes.iter().map(|&c| (c - 1) as u8).collect()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Labeling {
    Binary(BinaryLabeling),
    Kary(KaryLabeling),
}

impl Labeling {
    pub fn len(&self) -> usize {
        match self {
            Labeling::Binary(b) => b.len(),
            Labeling::Kary(k) => k.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of classes (2 for binary).
    pub fn k(&self) -> u32 {
        match self {
            Labeling::Binary(_) => 2,
            Labeling::Kary(k) => k.k(),
        }
    }

    /// Label values as integers: bits for binary, classes for K-ary.
    pub fn values(&self) -> Vec<u32> {
        match self {
            Labeling::Binary(b) => b.bits().iter().map(|&x| x as u32).collect(),
            Labeling::Kary(k) => k.classes().to_vec(),
        }
    }
}

/// One entry of a weight vector.
#[derive(Debug, Clone, PartialEq)]
pub enum Weight {
    Int(u64),
    Rational(Arc<BigRational>),
    /// `v = e^z`; used when `v` is far outside any float range.
    Ln(f64),
}

impl Weight {
    fn is_positive(&self) -> bool {
        match self {
            Weight::Int(n) => *n > 0,
            Weight::Rational(r) => r.is_positive(),
            Weight::Ln(z) => z.is_finite(),
        }
    }

    /// `ln v` with `frac` fractional bits.
    pub fn ln(&self, frac: u32) -> Result<Fixed, NumericsError> {
        match self {
            Weight::Int(n) => Fixed::ln_bigint(&BigInt::from(*n), frac),
            Weight::Rational(r) => Fixed::ln_rational(r, frac),
            Weight::Ln(z) => Fixed::from_f64(*z, frac),
        }
    }

    /// `ln(1 + v)` with `frac` fractional bits.
    pub fn ln_one_plus(&self, frac: u32) -> Result<Fixed, NumericsError> {
        match self {
            Weight::Int(n) => Fixed::ln_bigint(&(BigInt::from(*n) + 1u32), frac),
            Weight::Rational(r) => Fixed::ln_rational(&(r.as_ref() + BigRational::one()), frac),
            Weight::Ln(z) => Ok(Fixed::from_f64(*z, frac)?.softplus()),
        }
    }

    pub fn as_rational(&self) -> Option<BigRational> {
        match self {
            Weight::Int(n) => Some(exact::integer(*n)),
            Weight::Rational(r) => Some(r.as_ref().clone()),
            Weight::Ln(_) => None,
        }
    }
}

/// Strictly positive weights, the pre-image of a prediction vector under `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<Weight>);

impl WeightVector {
    pub fn new(entries: Vec<Weight>) -> Result<Self, LossError> {
        if entries.is_empty() {
            return Err(LossError::Empty);
        }
        if let Some(i) = entries.iter().position(|w| !w.is_positive()) {
            return Err(LossError::NonPositiveWeight(i));
        }
        Ok(WeightVector(entries))
    }

    pub fn from_ints(values: &[u64]) -> Result<Self, LossError> {
        Self::new(values.iter().map(|&v| Weight::Int(v)).collect())
    }

    pub fn from_rationals(values: Vec<BigRational>) -> Result<Self, LossError> {
        Self::new(values.into_iter().map(|r| Weight::Rational(Arc::new(r))).collect())
    }

    pub fn from_ln(values: Vec<f64>) -> Result<Self, LossError> {
        Self::new(values.into_iter().map(Weight::Ln).collect())
    }

    pub fn entries(&self) -> &[Weight] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ln_entries(&self, frac: u32) -> Result<Vec<Fixed>, NumericsError> {
        self.0.iter().map(|w| w.ln(frac)).collect()
    }
}

/// A probability strictly inside `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Prob {
    Ratio {
        num: u64,
        den: u64,
    },
    Big(Arc<BigRational>),
    /// `1 / (1 + e^{-z})`, exactly the image of the weight `e^z`.
    LogOdds(f64),
}

impl Prob {
    pub const HALF: Prob = Prob::Ratio { num: 1, den: 2 };

    pub fn ratio(num: u64, den: u64) -> Result<Prob, LossError> {
        if num == 0 || num >= den {
            return Err(LossError::NotAProbability(0));
        }
        Ok(Prob::Ratio { num, den })
    }

    pub fn from_rational(r: BigRational) -> Result<Prob, LossError> {
        if !r.is_positive() || r >= BigRational::one() {
            return Err(LossError::NotAProbability(0));
        }
        match (r.numer().to_u64(), r.denom().to_u64()) {
            (Some(num), Some(den)) => Ok(Prob::Ratio { num, den }),
            _ => Ok(Prob::Big(Arc::new(r))),
        }
    }

    fn is_valid(&self) -> bool {
        match self {
            Prob::Ratio { num, den } => *num > 0 && num < den,
            Prob::Big(r) => r.is_positive() && r.as_ref() < &BigRational::one(),
            Prob::LogOdds(z) => z.is_finite(),
        }
    }

    pub fn to_rational(&self) -> Option<BigRational> {
        match self {
            Prob::Ratio { num, den } => Some(exact::ratio(*num, *den)),
            Prob::Big(r) => Some(r.as_ref().clone()),
            Prob::LogOdds(_) => None,
        }
    }

    /// `1 - u`.
    pub fn complement(&self) -> Prob {
        match self {
            Prob::Ratio { num, den } => Prob::Ratio { num: den - num, den: *den },
            Prob::Big(r) => Prob::Big(Arc::new(BigRational::one() - r.as_ref())),
            Prob::LogOdds(z) => Prob::LogOdds(-z),
        }
    }

    pub fn approx_f64(&self) -> f64 {
        match self {
            Prob::Ratio { num, den } => *num as f64 / *den as f64,
            Prob::Big(r) => exact::to_f64(r),
            Prob::LogOdds(z) => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// `-ln u` with `frac` fractional bits.
    fn neg_ln_fixed(&self, frac: u32) -> Fixed {
        match self {
            Prob::Ratio { num, den } => {
                let a = Fixed::ln_bigint(&BigInt::from(*den), frac).expect("positive");
                let b = Fixed::ln_bigint(&BigInt::from(*num), frac).expect("positive");
                &a - &b
            }
            Prob::Big(r) => -Fixed::ln_rational(r, frac).expect("positive"),
            Prob::LogOdds(z) => Fixed::from_f64(-z, frac).expect("finite").softplus(),
        }
    }

    /// `ln u` evaluated in `fmt`; `-inf` when `u` rounds to zero.
    fn fpa_ln(&self, fmt: FpaFormat) -> FpaValue {
        match self {
            Prob::LogOdds(z) => fmt.value_or_round(-softplus_f64(-z)),
            _ => {
                let u = self.fpa_value(fmt);
                fpa_ln_or_neg_inf(u, fmt)
            }
        }
    }

    /// `ln(1 - u)` evaluated in `fmt` as `ln(1 ⊖ round(u))`.
    fn fpa_ln_complement(&self, fmt: FpaFormat) -> FpaValue {
        match self {
            Prob::LogOdds(z) => fmt.value_or_round(-softplus_f64(*z)),
            _ => {
                let u = self.fpa_value(fmt);
                fpa_ln_or_neg_inf(fmt.sub(FpaValue::ONE, u), fmt)
            }
        }
    }

    /// `u` rounded into `fmt`.
    pub fn fpa_value(&self, fmt: FpaFormat) -> FpaValue {
        match self {
            Prob::Ratio { num, den } => fmt.round_ratio(*num, *den).expect("den > 0"),
            Prob::Big(r) => fmt.round_rational(r),
            Prob::LogOdds(z) => fmt.value_or_round(1.0 / (1.0 + (-z).exp())),
        }
    }
}

fn fpa_ln_or_neg_inf(u: FpaValue, fmt: FpaFormat) -> FpaValue {
    if u.get() <= 0.0 {
        fmt.value_or_round(f64::NEG_INFINITY)
    } else {
        fmt.ln(u).expect("positive argument")
    }
}

/// `ln(1 + e^z)` in binary64.
pub fn softplus_f64(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl FpaFormat {
    fn value_or_round(&self, x: f64) -> FpaValue {
        crate::numerics::fpa_round(x, *self)
    }
}

/// Binary prediction vector with entries in `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionVector(Vec<Prob>);

impl PredictionVector {
    pub fn new(entries: Vec<Prob>) -> Result<Self, LossError> {
        if entries.is_empty() {
            return Err(LossError::Empty);
        }
        if let Some(i) = entries.iter().position(|p| !p.is_valid()) {
            return Err(LossError::NotAProbability(i));
        }
        Ok(PredictionVector(entries))
    }

    pub fn uniform_half(n: usize) -> Result<Self, LossError> {
        Self::new(vec![Prob::HALF; n])
    }

    pub fn entries(&self) -> &[Prob] {
        &self.0
    }

    /// Replace entry `i`, so a long query can be reused across chunks.
    pub fn set(&mut self, i: usize, p: Prob) -> Result<(), LossError> {
        if !p.is_valid() {
            return Err(LossError::NotAProbability(i));
        }
        self.0[i] = p;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Row-stochastic `N x K` prediction matrix with rational entries in `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    rows: Vec<Vec<Prob>>,
    k: u32,
}

impl PredictionMatrix {
    pub fn new(rows: Vec<Vec<Prob>>) -> Result<Self, LossError> {
        let first = rows.first().ok_or(LossError::Empty)?;
        let k = first.len() as u32;
        if k < 2 {
            return Err(LossError::TooFewClasses(k));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() as u32 != k {
                return Err(LossError::ClassMismatch { expected: k, got: row.len() as u32 });
            }
            if row.iter().any(|p| !p.is_valid() || matches!(p, Prob::LogOdds(_))) {
                return Err(LossError::NotAProbability(i));
            }
            if !row_sums_to_one(row) {
                return Err(LossError::NotStochastic(i));
            }
        }
        Ok(PredictionMatrix { rows, k })
    }

    /// Every entry `1/k`.
    pub fn uniform(n: usize, k: u32) -> Result<Self, LossError> {
        Self::new(vec![vec![Prob::Ratio { num: 1, den: k as u64 }; k as usize]; n])
    }

    pub fn rows(&self) -> &[Vec<Prob>] {
        &self.rows
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn row_sums_to_one(row: &[Prob]) -> bool {
    if let Prob::Ratio { den, .. } = row[0] {
        let mut total: u128 = 0;
        let same_den = row.iter().all(|p| match p {
            Prob::Ratio { num, den: d } if *d == den => {
                total += *num as u128;
                true
            }
            _ => false,
        });
        if same_den {
            return total == den as u128;
        }
    }
    let sum: BigRational = row.iter().map(|p| p.to_rational().expect("rational entry")).sum();
    sum.is_one()
}

/// `u_i = v_i / (1 + v_i)`.
pub fn logistic_map(v: &WeightVector) -> PredictionVector {
    let entries = v
        .entries()
        .iter()
        .map(|w| match w {
            Weight::Int(n) if *n < u64::MAX => Prob::Ratio { num: *n, den: n + 1 },
            Weight::Int(n) => Prob::Big(Arc::new(BigRational::new(BigInt::from(*n), BigInt::from(*n) + 1u32))),
            Weight::Rational(r) => {
                let u = r.as_ref() / (r.as_ref() + BigRational::one());
                Prob::from_rational(u).expect("f maps positive weights into (0, 1)")
            }
            Weight::Ln(z) => Prob::LogOdds(*z),
        })
        .collect();
    PredictionVector(entries)
}

/// Arithmetic model of a scoring server.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arithmetic {
    /// Exact rationals, with logarithms carried at high fixed precision.
    Apa,
    /// Emulated floating point, rounding after every operation.
    Fpa(FpaFormat),
}

impl fmt::Display for Arithmetic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arithmetic::Apa => write!(f, "apa"),
            Arithmetic::Fpa(fmt) => write!(f, "{fmt}"),
        }
    }
}

/// The numeric payload of a score.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoreValue {
    /// Exact likelihood `e^{-N L}`; the loss is `-(1/N) ln` of it.
    Likelihood(ExactScalar),
    /// The loss itself, in fixed point.
    Log(Fixed),
    /// The loss as a value of an emulated float format.
    Float(FpaValue),
}

/// A log-loss score over `n` data points.
#[derive(Debug, Clone, PartialEq)]
pub struct LossScore {
    n: usize,
    value: ScoreValue,
}

impl LossScore {
    pub fn new(n: usize, value: ScoreValue) -> Self {
        LossScore { n, value }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn value(&self) -> &ScoreValue {
        &self.value
    }

    pub fn likelihood(&self) -> Option<&ExactScalar> {
        match &self.value {
            ScoreValue::Likelihood(r) => Some(r),
            _ => None,
        }
    }

    /// The loss with `frac` fractional bits.
    pub fn to_fixed(&self, frac: u32) -> Fixed {
        match &self.value {
            ScoreValue::Likelihood(r) => {
                let l = Fixed::ln_rational(r, frac + 8).expect("likelihood is positive");
                (-l).div_int(self.n as i64).expect("n > 0").rescale(frac)
            }
            ScoreValue::Log(x) => x.rescale(frac),
            ScoreValue::Float(v) => Fixed::from_f64(v.get(), frac.max(1100))
                .map(|x| x.rescale(frac))
                .unwrap_or_else(|_| Fixed::from_int(if v.get() > 0.0 { 1i64 << 40 } else { -(1i64 << 40) }, frac)),
        }
    }

    pub fn to_f64(&self) -> f64 {
        match &self.value {
            ScoreValue::Float(v) => v.get(),
            ScoreValue::Log(x) => x.to_f64(),
            ScoreValue::Likelihood(_) => self.to_fixed(96).to_f64(),
        }
    }
}

impl fmt::Display for LossScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

fn check_len(expected: usize, got: usize) -> Result<(), LossError> {
    if expected != got {
        return Err(LossError::LengthMismatch { expected, got });
    }
    Ok(())
}

/// Exact binary log-loss.
pub fn binary_log_loss(u: &PredictionVector, sigma: &BinaryLabeling) -> Result<LossScore, LossError> {
    binary_log_loss_in(u, sigma, Arithmetic::Apa)
}

/// Binary log-loss evaluated in the given arithmetic model.
pub fn binary_log_loss_in(
    u: &PredictionVector,
    sigma: &BinaryLabeling,
    arith: Arithmetic,
) -> Result<LossScore, LossError> {
    check_len(u.len(), sigma.len())?;
    let n = u.len();
    let pairs = u.entries().iter().zip(sigma.bits().iter().copied());
    match arith {
        Arithmetic::Apa if u.entries().iter().all(|p| !matches!(p, Prob::LogOdds(_))) => {
            Ok(LossScore::new(n, ScoreValue::Likelihood(exact_likelihood(pairs))))
        }
        Arithmetic::Apa => Ok(LossScore::new(n, ScoreValue::Log(fixed_binary_loss(pairs, n)))),
        Arithmetic::Fpa(fmt) => Ok(LossScore::new(n, ScoreValue::Float(fpa_mean_loss(pairs, n, fmt, true)))),
    }
}

/// Exact product of `u_i^{σ_i} (1 - u_i)^{1 - σ_i}` over rational entries.
fn exact_likelihood<'a>(pairs: impl Iterator<Item = (&'a Prob, u8)>) -> BigRational {
    let mut nums: Vec<u64> = Vec::new();
    let mut dens: Vec<u64> = Vec::new();
    let mut big = BigRational::one();
    for (p, s) in pairs {
        match p {
            Prob::Ratio { num, den } => {
                nums.push(if s == 1 { *num } else { den - num });
                dens.push(*den);
            }
            Prob::Big(r) => {
                if s == 1 {
                    big *= r.as_ref();
                } else {
                    big *= BigRational::one() - r.as_ref();
                }
            }
            Prob::LogOdds(_) => unreachable!("caller filters log-odds entries"),
        }
    }
    big * BigRational::new(exact::product(nums), exact::product(dens))
}

/// `(1/N) Σ -ln(term)` in fixed point, memoizing repeated entries.
fn fixed_binary_loss<'a>(pairs: impl Iterator<Item = (&'a Prob, u8)>, n: usize) -> Fixed {
    let frac = DEFAULT_FRAC_BITS;
    let mut memo: HashMap<(u64, u64, u8), Fixed> = HashMap::new();
    let mut sum = Fixed::zero(frac);
    for (p, s) in pairs {
        let key = match p {
            Prob::Ratio { num, den } => Some((*num, *den, s)),
            Prob::LogOdds(z) => Some((z.to_bits(), u64::MAX, s)),
            Prob::Big(_) => None,
        };
        let term = |p: &Prob| if s == 1 { p.neg_ln_fixed(frac) } else { p.complement().neg_ln_fixed(frac) };
        match key {
            Some(k) => {
                let t = memo.entry(k).or_insert_with(|| term(p));
                sum = &sum + t;
            }
            None => sum = &sum + &term(p),
        }
    }
    sum.div_int(n as i64).expect("n > 0")
}

/// Rounded running sum of `ln` terms in index order, then one rounded
/// division by `N`. `binary` selects `ln u` / `ln(1 - u)` by the label bit;
/// otherwise the entry is used as is.
fn fpa_mean_loss<'a>(pairs: impl Iterator<Item = (&'a Prob, u8)>, n: usize, fmt: FpaFormat, binary: bool) -> FpaValue {
    let term = |p: &Prob, s: u8| if !binary || s == 1 { p.fpa_ln(fmt) } else { p.fpa_ln_complement(fmt) };
    if fmt.is_binary64() {
        // Plain f64 addition is already binary64 rounding.
        let mut sum = 0.0f64;
        let mut last: Option<&Prob> = None;
        let (mut t0, mut t1) = (0u64, 0u64);
        for (p, s) in pairs {
            if last != Some(p) {
                last = Some(p);
                (t0, t1) = (term(p, 0).get().to_bits(), term(p, 1).get().to_bits());
            }
            // Select by mask: random labels would defeat a branch.
            let mask = ((s != 0) as u64).wrapping_neg();
            sum += f64::from_bits((t0 & !mask) | (t1 & mask));
        }
        return fmt.div(fmt.value_or_round(-sum), fmt.round_u64(n as u64)).expect("n > 0");
    }
    let mut sum = FpaValue::ZERO;
    // Both label variants of the most recent distinct entry.
    let mut last: Option<(&Prob, [Option<FpaValue>; 2])> = None;
    for (p, s) in pairs {
        let slot = s.min(1) as usize;
        let v = match &mut last {
            Some((q, cache)) if *q == p => *cache[slot].get_or_insert_with(|| term(p, s)),
            _ => {
                let v = term(p, s);
                let mut cache = [None, None];
                cache[slot] = Some(v);
                last = Some((p, cache));
                v
            }
        };
        sum = fmt.add(sum, v);
    }
    fmt.div(sum.neg(), fmt.round_u64(n as u64)).expect("n > 0")
}

/// Exact loss from weights: `-(1/N) ln(∏_{σ=1} v_i / ∏ (1 + v_i))`.
pub fn loss_from_weights(v: &WeightVector, sigma: &BinaryLabeling) -> Result<LossScore, LossError> {
    check_len(v.len(), sigma.len())?;
    let n = v.len();
    let all_rational = v.entries().iter().all(|w| !matches!(w, Weight::Ln(_)));
    if all_rational {
        let mut num = BigRational::one();
        let mut den = BigRational::one();
        let mut int_num: Vec<u64> = Vec::new();
        let mut int_den = BigInt::one();
        for (w, &s) in v.entries().iter().zip(sigma.bits()) {
            match w {
                Weight::Int(x) => {
                    if s == 1 {
                        int_num.push(*x);
                    }
                    int_den *= BigInt::from(*x) + 1u32;
                }
                other => {
                    let r = other.as_rational().expect("rational weight");
                    den *= &r + BigRational::one();
                    if s == 1 {
                        num *= r;
                    }
                }
            }
        }
        let ints = BigRational::new(exact::product(int_num), int_den);
        return Ok(LossScore::new(n, ScoreValue::Likelihood(ints * num / den)));
    }
    let frac = DEFAULT_FRAC_BITS;
    let mut sum = Fixed::zero(frac);
    for (w, &s) in v.entries().iter().zip(sigma.bits()) {
        sum = &sum + &w.ln_one_plus(frac)?;
        if s == 1 {
            sum = &sum - &w.ln(frac)?;
        }
    }
    Ok(LossScore::new(n, ScoreValue::Log(sum.div_int(n as i64)?)))
}

/// Exact K-ary log-loss `-(1/N) Σ ln u_{i, σ_i}`.
pub fn kary_log_loss(u: &PredictionMatrix, sigma: &KaryLabeling) -> Result<LossScore, LossError> {
    kary_log_loss_in(u, sigma, Arithmetic::Apa)
}

/// K-ary log-loss evaluated in the given arithmetic model.
pub fn kary_log_loss_in(u: &PredictionMatrix, sigma: &KaryLabeling, arith: Arithmetic) -> Result<LossScore, LossError> {
    check_len(u.len(), sigma.len())?;
    if u.k() != sigma.k() {
        return Err(LossError::ClassMismatch { expected: sigma.k(), got: u.k() });
    }
    let n = u.len();
    let picked = u.rows().iter().zip(sigma.classes()).map(|(row, &c)| (&row[c as usize - 1], 1u8));
    match arith {
        Arithmetic::Apa => Ok(LossScore::new(n, ScoreValue::Likelihood(exact_likelihood(picked)))),
        Arithmetic::Fpa(fmt) => Ok(LossScore::new(n, ScoreValue::Float(fpa_mean_loss(picked, n, fmt, false)))),
    }
}
