//! Noise-free attacks: prime-product encodings read back by factorization.
//!
//! A query with weights `v_i` (predictions `v_i / (1 + v_i)`) has likelihood
//! `∏_{σ_i = 1} v_i / ∏ (1 + v_i)`. Multiplying the observed `e^{-N ℓ}` by the
//! known denominator leaves `∏_{σ_i = 1} v_i`, and with pairwise co-prime
//! weights the labels are read off by trial division.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::loss::{
    Arithmetic, BinaryLabeling, KaryLabeling, LossScore, PredictionMatrix, PredictionVector, Prob, ScoreValue,
};
use crate::numerics::fixed::Fixed;
use crate::numerics::{largest_prime_at_most, primes_first, FpaFormat, FpaValue};
use crate::oracle::LossOracle;

use super::{require_binary, require_kary, AttackError, Recovery};

/// How many labels each query of a chunked attack covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChunkPolicy {
    /// Largest `m` with `p_m <= 2^{(φ-5)/4}`.
    Theory,
    /// Largest `m` whose prime product (times an error margin growing with
    /// `N`) fits in the significand.
    Budget,
    /// Caller-chosen `m`.
    Fixed(usize),
}

impl fmt::Display for ChunkPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChunkPolicy::Theory => write!(f, "theory"),
            ChunkPolicy::Budget => write!(f, "budget"),
            ChunkPolicy::Fixed(m) => write!(f, "fixed:{m}"),
        }
    }
}

impl FromStr for ChunkPolicy {
    type Err = AttackError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "theory" => Ok(ChunkPolicy::Theory),
            "budget" => Ok(ChunkPolicy::Budget),
            _ => s
                .strip_prefix("fixed:")
                .and_then(|m| m.parse().ok())
                .map(ChunkPolicy::Fixed)
                .ok_or_else(|| AttackError::InvalidArgument(format!("unknown chunk policy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPlan {
    pub m: usize,
    pub query_count: usize,
    pub policy: ChunkPolicy,
}

fn require_phi(fmt: FpaFormat) -> Result<(), AttackError> {
    if fmt.phi() < 9 {
        return Err(AttackError::Infeasible(format!("{fmt} has φ = {} < 9", fmt.phi())));
    }
    Ok(())
}

/// Bits available for the integer `q` when it is recovered from an `N`-point
/// score: the significand minus guard bits for the error accumulated over
/// `N` rounded log terms.
fn budget_bits(fmt: FpaFormat, n: usize) -> f64 {
    fmt.precision() as f64 - 4.0 - (2.0 * (n as f64).log2()).ceil()
}

/// Chunk size for [`multi_query_binary_attack`].
pub fn plan_chunks(n: usize, arith: Arithmetic, policy: ChunkPolicy) -> Result<ChunkPlan, AttackError> {
    if n == 0 {
        return Err(AttackError::InvalidArgument("N must be positive".into()));
    }
    let m = match (policy, arith) {
        (ChunkPolicy::Fixed(0), _) => return Err(AttackError::InvalidArgument("chunk size must be positive".into())),
        (ChunkPolicy::Fixed(m), Arithmetic::Fpa(fmt)) => {
            require_phi(fmt)?;
            m
        }
        (ChunkPolicy::Fixed(m), Arithmetic::Apa) => m,
        (_, Arithmetic::Apa) => n,
        (ChunkPolicy::Theory, Arithmetic::Fpa(fmt)) => {
            require_phi(fmt)?;
            let x = 2f64.powf((fmt.phi() as f64 - 5.0) / 4.0);
            largest_prime_at_most(x)?.0
        }
        (ChunkPolicy::Budget, Arithmetic::Fpa(fmt)) => {
            require_phi(fmt)?;
            let bits = budget_bits(fmt, n);
            let mut used = 0.0;
            let mut m = 0;
            for &p in primes_first(n.min(64))?.iter() {
                used += ((p + 1) as f64).log2();
                if used > bits {
                    break;
                }
                m += 1;
            }
            if m == 0 {
                return Err(AttackError::Infeasible(format!("{fmt} cannot hold one label per query at N = {n}")));
            }
            m
        }
    };
    let m = m.min(n);
    Ok(ChunkPlan { m, query_count: n.div_ceil(m), policy })
}

/// Block size for [`multi_query_kary_attack`]: rows and classes are both cut
/// into blocks of `m`. The theory policy uses the budget rule.
pub fn plan_kary_chunks(n: usize, k: u32, arith: Arithmetic, policy: ChunkPolicy) -> Result<ChunkPlan, AttackError> {
    if n == 0 || k < 2 {
        return Err(AttackError::InvalidArgument("need N >= 1 and K >= 2".into()));
    }
    let k = k as usize;
    let full = n.max(k);
    let m = match (policy, arith) {
        (ChunkPolicy::Fixed(0), _) => return Err(AttackError::InvalidArgument("chunk size must be positive".into())),
        (ChunkPolicy::Fixed(m), _) => m.min(full),
        (_, Arithmetic::Apa) => full,
        (_, Arithmetic::Fpa(fmt)) => {
            require_phi(fmt)?;
            let bits = budget_bits(fmt, n) - (k as f64).log2().ceil();
            let primes = primes_first(n.min(64))?;
            let cost = |m: usize| -> f64 {
                let e = m.min(k) as f64;
                primes.iter().take(m.min(n)).map(|&p| e * (p as f64).log2()).sum()
            };
            let mut m = 0;
            while m < full.min(64) && cost(m + 1) <= bits {
                m += 1;
            }
            if m == 0 {
                return Err(AttackError::Infeasible(format!(
                    "{fmt} cannot resolve one label per query at N = {n}, K = {k}"
                )));
            }
            m
        }
    };
    Ok(ChunkPlan { m, query_count: n.div_ceil(m) * k.div_ceil(m), policy })
}

/// Recover `q = e^{-N ℓ} · ∏ factors · base^shift` from a score, provided the
/// score pins it down to an integer.
pub(crate) fn extract_integer(
    score: &LossScore,
    factors: &[BigInt],
    base: u64,
    shift: u64,
    arith: Arithmetic,
) -> Option<BigInt> {
    let n = score.n() as u64;
    match score.value() {
        ScoreValue::Likelihood(l) => {
            let scale = factors.iter().fold(BigInt::one(), |acc, f| acc * f) * BigInt::from(base).pow(shift as u32);
            let q = l * BigRational::from_integer(scale);
            q.is_integer().then(|| q.to_integer())
        }
        ScoreValue::Log(x) => {
            let f = x.frac();
            let mut acc = Fixed::ln_bigint(&BigInt::from(base), f).ok()?.mul_int(shift as i64);
            for fac in factors {
                acc = &acc + &Fixed::ln_bigint(fac, f).ok()?;
            }
            let ln_q = &acc - &x.mul_int(n as i64);
            let bits = ln_q.approx_f64() / std::f64::consts::LN_2;
            if !(bits < f as f64 - (n as f64).log2() - 8.0) {
                return None;
            }
            let q = ln_q.exp();
            let r = q.round_to_int();
            let err = (&q - &Fixed::from_int(r.clone(), f)).abs();
            (err < Fixed::from_raw(BigInt::one() << (f - 2), f)).then_some(r)
        }
        ScoreValue::Float(l) => {
            let Arithmetic::Fpa(fmt) = arith else { return None };
            let l = *l;
            if !l.get().is_finite() {
                return None;
            }
            let round_int = |b: &BigInt| match b.to_u64() {
                Some(v) => fmt.round_u64(v),
                None => fmt.round_rational(&BigRational::from_integer(b.clone())),
            };
            let mut acc = FpaValue::ZERO;
            for fac in factors {
                acc = fmt.add(acc, fmt.ln(round_int(fac)).ok()?);
            }
            if shift > 0 {
                let ln_base = fmt.ln(fmt.round_u64(base)).ok()?;
                acc = fmt.add(acc, fmt.mul(fmt.round_u64(shift), ln_base));
            }
            let q = fmt.exp(fmt.sub(acc, fmt.mul(fmt.round_u64(n), l))).get();
            let limit = 2f64.powi(fmt.precision() as i32 - 3);
            if !(q.is_finite() && q < limit) {
                return None;
            }
            let r = q.round();
            ((q - r).abs() < 0.25).then(|| BigInt::from(r as u64))
        }
    }
}

/// Exponent of each weight in `q`, requiring every exponent to be at most
/// `max_exp` and nothing else to remain.
fn split_powers(mut q: BigInt, weights: &[u64], max_exp: u32) -> Option<Vec<u32>> {
    if !q.is_positive() {
        return None;
    }
    let mut out = Vec::with_capacity(weights.len());
    for &w in weights {
        let w = BigInt::from(w);
        let mut e = 0;
        loop {
            let (d, r) = q.div_rem(&w);
            if !r.is_zero() {
                break;
            }
            q = d;
            e += 1;
            if e > max_exp {
                return None;
            }
        }
        out.push(e);
    }
    q.is_one().then_some(out)
}

/// One query with the first `N` primes as weights.
pub fn single_query_binary_attack(oracle: &dyn LossOracle) -> Result<Recovery<BinaryLabeling>, AttackError> {
    let weights = primes_first(oracle.len())?.into_vec();
    single_query_binary_attack_with(oracle, &weights)
}

/// One query with caller-supplied weights, which must be pairwise co-prime
/// and at least 2.
pub fn single_query_binary_attack_with(
    oracle: &dyn LossOracle,
    weights: &[u64],
) -> Result<Recovery<BinaryLabeling>, AttackError> {
    require_binary(oracle)?;
    let n = oracle.len();
    if weights.len() != n {
        return Err(AttackError::InvalidArgument(format!("{} weights for {n} labels", weights.len())));
    }
    if weights.iter().any(|&w| w < 2 || w == u64::MAX) {
        return Err(AttackError::InvalidArgument("weights must lie in [2, u64::MAX)".into()));
    }
    let u = PredictionVector::new(weights.iter().map(|&w| Prob::ratio(w, w + 1)).collect::<Result<_, _>>()?)?;
    let score = oracle.query_binary(&u)?;
    let factors: Vec<BigInt> = weights.iter().map(|&w| BigInt::from(w) + 1u32).collect();
    let decoded =
        extract_integer(&score, &factors, 2, 0, oracle.arithmetic()).and_then(|q| split_powers(q, weights, 1));
    Ok(match decoded {
        Some(e) => Recovery {
            labels: BinaryLabeling::new(e.into_iter().map(|x| x as u8).collect())?,
            unresolved: Vec::new(),
            queries: 1,
            out_of_contract: false,
        },
        None => Recovery {
            labels: BinaryLabeling::zeros(n)?,
            unresolved: (0..n).collect(),
            queries: 1,
            out_of_contract: false,
        },
    })
}

/// Chunked attack: each query puts the primes `p_1..p_m` on one chunk and
/// `1/2` everywhere else.
pub fn multi_query_binary_attack(
    oracle: &dyn LossOracle,
    plan: &ChunkPlan,
) -> Result<Recovery<BinaryLabeling>, AttackError> {
    require_binary(oracle)?;
    let n = oracle.len();
    if plan.m == 0 || plan.m > n {
        return Err(AttackError::InvalidArgument(format!("chunk size {} for N = {n}", plan.m)));
    }
    let primes = primes_first(plan.m)?;
    let arith = oracle.arithmetic();
    let mut u = PredictionVector::uniform_half(n)?;
    let mut bits = vec![0u8; n];
    let mut unresolved = Vec::new();
    let mut queries = 0;
    for lo in (0..n).step_by(plan.m) {
        let hi = (lo + plan.m).min(n);
        let w = &primes[..hi - lo];
        for (j, &p) in w.iter().enumerate() {
            u.set(lo + j, Prob::ratio(p, p + 1)?)?;
        }
        let score = oracle.query_binary(&u)?;
        queries += 1;
        for i in lo..hi {
            u.set(i, Prob::HALF)?;
        }
        let factors: Vec<BigInt> = w.iter().map(|&p| BigInt::from(p + 1)).collect();
        let shift = (n - w.len()) as u64;
        match extract_integer(&score, &factors, 2, shift, arith).and_then(|q| split_powers(q, w, 1)) {
            Some(e) => {
                for (j, x) in e.into_iter().enumerate() {
                    bits[lo + j] = x as u8;
                }
            }
            None => unresolved.extend(lo..hi),
        }
    }
    Ok(Recovery { labels: BinaryLabeling::new(bits)?, unresolved, queries, out_of_contract: false })
}

fn powers(p: u64, count: usize) -> Vec<BigInt> {
    let mut out = Vec::with_capacity(count);
    let mut x = BigInt::one();
    for _ in 0..count {
        out.push(x.clone());
        x *= p;
    }
    out
}

fn stochastic_row(weights: &[BigInt]) -> Result<(Vec<Prob>, BigInt), AttackError> {
    let total: BigInt = weights.iter().sum();
    let row = weights
        .iter()
        .map(|w| Prob::from_rational(BigRational::new(w.clone(), total.clone())))
        .collect::<Result<_, _>>()?;
    Ok((row, total))
}

/// One query: row `i` is proportional to `1, p_i, p_i^2, …, p_i^{K-1}`, so the
/// exponent of `p_i` in the recovered integer is `σ_i - 1`.
pub fn single_query_kary_attack(oracle: &dyn LossOracle) -> Result<Recovery<KaryLabeling>, AttackError> {
    require_kary(oracle)?;
    let n = oracle.len();
    let k = oracle.classes();
    let primes = primes_first(n)?;
    let mut rows = Vec::with_capacity(n);
    let mut totals = Vec::with_capacity(n);
    for &p in primes.iter() {
        let (row, total) = stochastic_row(&powers(p, k as usize))?;
        rows.push(row);
        totals.push(total);
    }
    let score = oracle.query_kary(&PredictionMatrix::new(rows)?)?;
    let decoded =
        extract_integer(&score, &totals, 1, 0, oracle.arithmetic()).and_then(|q| split_powers(q, &primes, k - 1));
    Ok(match decoded {
        Some(e) => Recovery {
            labels: KaryLabeling::new(e.into_iter().map(|x| x + 1).collect(), k)?,
            unresolved: Vec::new(),
            queries: 1,
            out_of_contract: false,
        },
        None => Recovery {
            labels: KaryLabeling::new(vec![1; n], k)?,
            unresolved: (0..n).collect(),
            queries: 1,
            out_of_contract: false,
        },
    })
}

/// Block attack: for a row block `D` and a class block `C = [c, c + |C|)`,
/// row `j` of `D` gives class `k ∈ C` weight `p_j^{k-c+1}` and every other
/// class weight 1; rows outside `D` are uniform. A non-zero exponent `e` of
/// `p_j` then means `σ = c + e - 1`, and zero means "not in this block".
/// Class blocks stop once every row of `D` is resolved.
pub fn multi_query_kary_attack(
    oracle: &dyn LossOracle,
    plan: &ChunkPlan,
) -> Result<Recovery<KaryLabeling>, AttackError> {
    require_kary(oracle)?;
    let n = oracle.len();
    let k = oracle.classes() as usize;
    if plan.m == 0 {
        return Err(AttackError::InvalidArgument("block size must be positive".into()));
    }
    let arith = oracle.arithmetic();
    let rows_per = plan.m.min(n);
    let classes_per = plan.m.min(k);
    let primes = primes_first(rows_per)?;
    let uniform_row: Vec<Prob> = vec![Prob::ratio(1, k as u64)?; k];
    let mut labels = vec![0u32; n];
    let mut unresolved = Vec::new();
    let mut queries = 0;

    for lo in (0..n).step_by(rows_per) {
        let hi = (lo + rows_per).min(n);
        let w = &primes[..hi - lo];
        let mut pending = hi - lo;
        let mut failed = false;
        for c0 in (0..k).step_by(classes_per) {
            if pending == 0 {
                break;
            }
            let c1 = (c0 + classes_per).min(k);
            let mut rows = vec![uniform_row.clone(); n];
            let mut totals = Vec::with_capacity(w.len());
            for (j, &p) in w.iter().enumerate() {
                let mut weights = vec![BigInt::one(); k];
                let mut x = BigInt::from(p);
                for wk in &mut weights[c0..c1] {
                    *wk = x.clone();
                    x *= p;
                }
                let (row, total) = stochastic_row(&weights)?;
                rows[lo + j] = row;
                totals.push(total);
            }
            let score = oracle.query_kary(&PredictionMatrix::new(rows)?)?;
            queries += 1;
            let shift = (n - w.len()) as u64;
            let decoded = extract_integer(&score, &totals, k as u64, shift, arith)
                .and_then(|q| split_powers(q, w, (c1 - c0) as u32));
            match decoded {
                Some(e) => {
                    for (j, x) in e.into_iter().enumerate() {
                        if x > 0 {
                            if labels[lo + j] != 0 {
                                failed = true;
                            }
                            labels[lo + j] = (c0 as u32) + x;
                            pending = pending.saturating_sub(1);
                        }
                    }
                }
                None => failed = true,
            }
            if failed {
                break;
            }
        }
        for i in lo..hi {
            if failed || labels[i] == 0 {
                labels[i] = 1;
                unresolved.push(i);
            }
        }
    }
    Ok(Recovery { labels: KaryLabeling::new(labels, k as u32)?, unresolved, queries, out_of_contract: false })
}
