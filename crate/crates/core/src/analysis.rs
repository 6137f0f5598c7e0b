//! Brute-force oracles for the combinatorics behind the robust attacks.
//!
//! `μ(S)` is the smallest gap between two distinct subset sums of `S`, and
//! `Δ(v)` the smallest gap between the losses of two distinct labelings under
//! weights `v`. Since `L_v(σ) = (Σ ln(1 + v_i) - Σ_{σ_i = 1} ln v_i) / N`,
//! `Δ(v) = μ(ln v) / N`; the two are computed here by different algorithms
//! so each can check the other.

use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use serde::Serialize;
use thiserror::Error;

use crate::loss::{LossError, WeightVector};
use crate::numerics::fixed::Fixed;
use crate::numerics::NumericsError;

/// Largest set handled by the enumerations.
pub const SIZE_CAP: usize = 24;
/// Above this size `Δ` is taken from the meet-in-the-middle `μ`.
const BRUTE_FORCE_CAP: usize = 16;
/// Largest `n` for the exhaustive `‖S‖∞` search.
pub const LINF_CAP: usize = 6;
const WORK_FRAC: u32 = 128;
/// Computed gaps this small are checked for an exact tie between products.
const TIE_TOLERANCE: f64 = 1e-20;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("size {n} exceeds the cap of {cap}")]
    TooLarge { n: usize, cap: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// A minimum gap and a pair realizing it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    /// Minimum subset-sum gap (for `μ`) or `N Δ` (for `Δ`).
    pub mu: f64,
    /// Minimum loss gap; `None` for plain sets.
    pub delta: Option<f64>,
    /// Two distinct subsets (membership masks) or labelings at the minimum.
    pub witness: (Vec<u8>, Vec<u8>),
}

/// Integer keys `round(x 2^s)` with `s` chosen so that any signed sum of all
/// keys stays below `2^125`.
fn to_keys(values: &[Fixed]) -> Result<(Vec<i128>, u32), AnalysisError> {
    let frac = values.iter().map(Fixed::frac).min().unwrap_or(WORK_FRAC);
    let total = values.iter().fold(Fixed::zero(frac), |acc, x| &acc + &x.abs());
    let int_bits = (total.floor_to_int() + 1u32).bits() as i64;
    let scale = (124 - int_bits).min(frac as i64);
    if scale < 1 {
        return Err(AnalysisError::InvalidInput("values too large for the working precision".into()));
    }
    let scale = scale as u32;
    let keys = values.iter().map(|x| x.rescale(scale).raw().to_i128().expect("bounded")).collect();
    Ok((keys, scale))
}

fn from_key(d: u128, scale: u32) -> f64 {
    d as f64 * 2f64.powi(-(scale as i32))
}

/// All signed combinations `Σ ε_i k_i`, `ε ∈ {-1, 0, 1}^n`, tagged with
/// their base-3 code (digit 1 is `+1`, digit 2 is `-1`).
fn signed_sums(keys: &[i128]) -> Vec<(i128, u32)> {
    let mut out = vec![(0i128, 0u32)];
    let mut place = 1u32;
    for &k in keys {
        let len = out.len();
        out.reserve(2 * len);
        for i in 0..len {
            let (s, c) = out[i];
            out.push((s + k, c + place));
            out.push((s - k, c + 2 * place));
        }
        place *= 3;
    }
    out
}

fn decode_code(mut code: u32, n: usize) -> Vec<i8> {
    (0..n)
        .map(|_| {
            let d = code % 3;
            code /= 3;
            match d {
                0 => 0,
                1 => 1,
                _ => -1,
            }
        })
        .collect()
}

/// `min |Σ ε_i k_i|` over non-zero `ε`, by meet in the middle.
fn min_signed_combo(keys: &[i128]) -> (u128, Vec<i8>) {
    let half = keys.len() / 2;
    let (ka, kb) = keys.split_at(half);
    let mut a: Vec<(i128, u32)> = signed_sums(ka).into_iter().filter(|&(_, c)| c != 0).collect();
    let b: Vec<(i128, u32)> = signed_sums(kb).into_iter().filter(|&(_, c)| c != 0).collect();
    a.sort_unstable();
    let mut best: (u128, u32, u32) = (u128::MAX, 0, 0);
    let mut offer = |d: u128, ca: u32, cb: u32| {
        if (d, ca, cb) < best {
            best = (d, ca, cb);
        }
    };
    for &(s, c) in &a {
        offer(s.unsigned_abs(), c, 0);
    }
    for &(s, c) in &b {
        offer(s.unsigned_abs(), 0, c);
        let pos = a.partition_point(|&(x, _)| x < -s);
        for &(x, ca) in a[pos.saturating_sub(1)..(pos + 1).min(a.len())].iter() {
            offer((x + s).unsigned_abs(), ca, c);
        }
    }
    let mut eps = decode_code(best.1, ka.len());
    eps.extend(decode_code(best.2, kb.len()));
    (best.0, eps)
}

fn eps_witness(eps: &[i8]) -> (Vec<u8>, Vec<u8>) {
    (eps.iter().map(|&e| (e == 1) as u8).collect(), eps.iter().map(|&e| (e == -1) as u8).collect())
}

fn mu_of_fixed(values: &[Fixed]) -> Result<GapReport, AnalysisError> {
    if values.is_empty() {
        return Err(AnalysisError::InvalidInput("empty set".into()));
    }
    if values.len() > SIZE_CAP {
        return Err(AnalysisError::TooLarge { n: values.len(), cap: SIZE_CAP });
    }
    let (keys, scale) = to_keys(values)?;
    let (d, eps) = min_signed_combo(&keys);
    Ok(GapReport { mu: from_key(d, scale), delta: None, witness: eps_witness(&eps) })
}

/// `μ(S)` over distinct subsets of a set of positive reals, `|S| <= 24`.
pub fn mu_subset_sums(s: &[f64]) -> Result<GapReport, AnalysisError> {
    if let Some(x) = s.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(AnalysisError::InvalidInput(format!("element {x} is not a positive real")));
    }
    let values = s.iter().map(|&x| Fixed::from_f64(x, WORK_FRAC)).collect::<Result<Vec<_>, _>>()?;
    mu_of_fixed(&values)
}

/// `μ` of arbitrary fixed-point values (signs do not matter).
pub fn mu_subset_sums_fixed(s: &[Fixed]) -> Result<GapReport, AnalysisError> {
    mu_of_fixed(s)
}

/// `Δ(v)`: the smallest loss gap between distinct labelings, `N <= 24`.
/// Up to 16 entries all `2^N` scores are enumerated and sorted; above that
/// the gap comes from `μ(ln v) / N`.
pub fn delta_loss_gap(v: &WeightVector) -> Result<GapReport, AnalysisError> {
    let n = v.len();
    if n > SIZE_CAP {
        return Err(AnalysisError::TooLarge { n, cap: SIZE_CAP });
    }
    let z = v.ln_entries(WORK_FRAC)?;
    if n > BRUTE_FORCE_CAP {
        let mut r = mu_of_fixed(&z)?;
        if r.mu <= TIE_TOLERANCE && exact_tie(v, &r.witness.0, &r.witness.1) {
            r.mu = 0.0;
        }
        r.delta = Some(r.mu / n as f64);
        return Ok(r);
    }
    let (keys, scale) = to_keys(&z)?;
    let mut sums: Vec<(i128, u32)> = Vec::with_capacity(1 << n);
    let mut s = 0i128;
    let mut g = 0u32;
    sums.push((0, 0));
    for i in 1..1u32 << n {
        let b = i.trailing_zeros() as usize;
        g ^= 1 << b;
        s += if g >> b & 1 == 1 { keys[b] } else { -keys[b] };
        sums.push((s, g));
    }
    sums.sort_unstable();
    let mask = |idx: u32| (0..n).map(|j| (idx >> j & 1) as u8).collect::<Vec<u8>>();
    let gaps = sums.windows(2).map(|w| ((w[1].0 - w[0].0) as u128, w[0].1, w[1].1));
    if let Some((_, lo, hi)) = gaps
        .clone()
        .filter(|&(d, ..)| from_key(d, scale) <= TIE_TOLERANCE)
        .find(|&(_, lo, hi)| exact_tie(v, &mask(lo), &mask(hi)))
    {
        return Ok(GapReport { mu: 0.0, delta: Some(0.0), witness: (mask(lo), mask(hi)) });
    }
    let (d, lo, hi) = gaps.min().expect("at least two labelings");
    let mu = from_key(d, scale);
    Ok(GapReport { mu, delta: Some(mu / n as f64), witness: (mask(lo), mask(hi)) })
}

/// Whether two subsets of rational weights have exactly equal products.
fn exact_tie(v: &WeightVector, a: &[u8], b: &[u8]) -> bool {
    let product = |m: &[u8]| {
        v.entries()
            .iter()
            .zip(m)
            .filter(|(_, &x)| x == 1)
            .try_fold(BigRational::one(), |acc, (w, _)| w.as_rational().map(|r| acc * r))
    };
    matches!((product(a), product(b)), (Some(x), Some(y)) if x == y)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RobustnessVerdict {
    /// `Δ(v) > 2τ`.
    pub robust: bool,
    pub report: GapReport,
    /// When not robust: a score within `τ` of both witness labelings' losses.
    pub ambiguous_score: Option<f64>,
}

/// `v` is `τ`-robust iff `Δ(v) > 2τ`; otherwise the witnesses and their
/// midpoint score show why.
pub fn verify_robustness(v: &WeightVector, tau: f64) -> Result<RobustnessVerdict, AnalysisError> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(AnalysisError::InvalidInput(format!("τ = {tau}")));
    }
    let report = delta_loss_gap(v)?;
    let delta = report.delta.expect("set by delta_loss_gap");
    let robust = delta > 2.0 * tau;
    let ambiguous_score = if robust {
        None
    } else {
        let n = v.len();
        let mut offset = Fixed::zero(WORK_FRAC);
        let mut s1 = Fixed::zero(WORK_FRAC);
        let mut s2 = Fixed::zero(WORK_FRAC);
        for (j, w) in v.entries().iter().enumerate() {
            offset = &offset + &w.ln_one_plus(WORK_FRAC)?;
            let z = w.ln(WORK_FRAC)?;
            if report.witness.0[j] == 1 {
                s1 = &s1 + &z;
            }
            if report.witness.1[j] == 1 {
                s2 = &s2 + &z;
            }
        }
        let mid = (offset.mul_int(2) - s1 - s2).div_int(2 * n as i64)?;
        Some(mid.to_f64())
    };
    Ok(RobustnessVerdict { robust, report, ambiguous_score })
}

/// Result of the exhaustive `‖S‖∞` search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinfReport {
    pub n: usize,
    pub gap: u64,
    /// Smallest possible largest element.
    pub min_max: u64,
    /// The first set found at the minimum.
    pub witness: Vec<u64>,
    /// Every set achieving it, each sorted ascending.
    pub all_witnesses: Vec<Vec<u64>>,
}

/// Smallest `max S` over `n`-element sets of positive integers whose subset
/// sums are pairwise at least `gap` apart (`gap = 1`: distinct sums).
pub fn min_linf_distinct_subset_sums(n: usize, gap: u64) -> Result<LinfReport, AnalysisError> {
    if n == 0 || gap == 0 {
        return Err(AnalysisError::InvalidInput("need n >= 1 and gap >= 1".into()));
    }
    if n > LINF_CAP {
        return Err(AnalysisError::TooLarge { n, cap: LINF_CAP });
    }
    // All 2^n sums lie in [0, n M] and are `gap` apart.
    let mut m = ((1u64 << n) - 1).saturating_mul(gap).div_ceil(n as u64).max(gap);
    loop {
        let mut found = Vec::new();
        let mut chosen = vec![m];
        extend(&mut chosen, &[0, m], n, gap, &mut found);
        if !found.is_empty() {
            for s in &mut found {
                s.sort_unstable();
            }
            return Ok(LinfReport { n, gap, min_max: m, witness: found[0].clone(), all_witnesses: found });
        }
        m += 1;
    }
}

/// Depth-first search over strictly decreasing elements below `chosen`'s
/// last, keeping the subset sums `gap`-separated.
fn extend(chosen: &mut Vec<u64>, sums: &[u64], n: usize, gap: u64, found: &mut Vec<Vec<u64>>) {
    if chosen.len() == n {
        found.push(chosen.clone());
        return;
    }
    let remaining = (n - chosen.len()) as u64;
    let top = *chosen.last().expect("non-empty");
    // Differences between existing sums; a new element must avoid each by `gap`.
    let mut diffs: Vec<u64> = Vec::with_capacity(sums.len() * sums.len() / 2);
    for (i, &a) in sums.iter().enumerate() {
        for &b in &sums[..i] {
            diffs.push(a.abs_diff(b));
        }
    }
    for a in (remaining.max(gap)..top).rev() {
        if diffs.iter().any(|&d| a.abs_diff(d) < gap) || a < gap {
            continue;
        }
        let mut next: Vec<u64> = sums.iter().flat_map(|&s| [s, s + a]).collect();
        next.sort_unstable();
        chosen.push(a);
        extend(chosen, &next, n, gap, found);
        chosen.pop();
    }
}

/// Outcome of the discretized search for small robust vectors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBoundReport {
    pub n: usize,
    pub tau: f64,
    /// Grid spacing `r` of the `ln v` values searched.
    pub resolution: f64,
    /// Smallest `‖ln v‖∞` of a `τ`-robust vector on the grid.
    pub grid_min_log_linf: f64,
    /// `2τ (2^N - 1)`: no `τ`-robust vector has `‖ln v‖∞` at or below this.
    pub counting_bound: f64,
    /// `2^N N τ ln 3`, the largest log weight of the constructed vector.
    pub construction_log_linf: f64,
    /// Grid minimizer, as `ln v` values.
    pub witness: Vec<f64>,
    /// The grid search found nothing below the counting bound.
    pub consistent: bool,
}

/// Evidence, at grid resolution `r = 2Nτ / steps`, that `τ`-robust vectors
/// need large entries. A vector is `τ`-robust iff `μ(ln v) > 2Nτ`, and `μ`
/// only depends on `|ln v_i|`, so on the grid this is the integer problem
/// `μ(K) >= steps + 1` solved by [`min_linf_distinct_subset_sums`].
pub fn robust_vector_lower_bound_check(n: usize, tau: f64, steps: u64) -> Result<LowerBoundReport, AnalysisError> {
    if n == 0 || n > LINF_CAP {
        return Err(AnalysisError::TooLarge { n, cap: LINF_CAP });
    }
    if !(tau > 0.0 && tau.is_finite()) || steps == 0 {
        return Err(AnalysisError::InvalidInput(format!("τ = {tau}, steps = {steps}")));
    }
    let r = 2.0 * n as f64 * tau / steps as f64;
    let lin = min_linf_distinct_subset_sums(n, steps + 1)?;
    let grid_min = r * lin.min_max as f64;
    let counting_bound = 2.0 * tau * ((1u64 << n) - 1) as f64;
    let construction = 2f64.powi(n as i32) * n as f64 * tau * 3f64.ln();
    Ok(LowerBoundReport {
        n,
        tau,
        resolution: r,
        grid_min_log_linf: grid_min,
        counting_bound,
        construction_log_linf: construction,
        witness: lin.witness.iter().map(|&k| k as f64 * r).collect(),
        consistent: grid_min > counting_bound,
    })
}
