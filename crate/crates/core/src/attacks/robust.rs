//! Noise-tolerant attacks.
//!
//! Weights `ln v_r = 2^r N τ ln 3` make the subset sums of `ln v` at least
//! `2 N τ ln 3` apart, so scores of distinct labelings differ by more than
//! `2τ` and the nearest candidate to a `τ`-accurate observation is the truth.
//! Scores are handled in the log domain throughout: with
//! `S(σ) = Σ_{σ_i = 1} ln v_i`, the loss is `(Σ softplus(ln v_i) - S(σ)) / N`,
//! so decoding is a nearest-subset-sum search against
//! `t = Σ softplus(ln v_i) - N ℓ`.

use std::sync::Arc;

use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::loss::{softplus_f64, Arithmetic, BinaryLabeling, LossScore, PredictionVector, Prob, WeightVector};
use crate::numerics::fixed::Fixed;
use crate::numerics::FpaFormat;
use crate::oracle::{DecodeProbe, LossOracle};

use super::{require_binary, AttackError, Recovery};

/// Largest chunk searched exhaustively (`2^26` candidates).
pub const EXHAUSTIVE_CAP: usize = 26;

const LN3: f64 = 1.098_612_288_668_109_8;

/// `ln v_r = 2^r · n · τ · ln 3` for `r = 1..=count`.
pub fn robust_log_weights(n: usize, tau: f64, count: usize) -> Result<Vec<f64>, AttackError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(AttackError::InvalidArgument(format!("τ must be positive, got {tau}")));
    }
    if n == 0 || count == 0 {
        return Err(AttackError::InvalidArgument("need at least one label".into()));
    }
    let z: Vec<f64> = (1..=count).map(|r| 2f64.powi(r as i32) * n as f64 * tau * LN3).collect();
    if z.iter().any(|x| !x.is_finite()) {
        return Err(AttackError::InvalidArgument(format!("weights overflow for N = {n}, τ = {tau}")));
    }
    Ok(z)
}

/// The single-query robust weight vector `v_i = 3^{2^i N τ}`, in log form.
pub fn robust_weights(n: usize, tau: f64) -> Result<WeightVector, AttackError> {
    Ok(WeightVector::from_ln(robust_log_weights(n, tau, n)?)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustPlan {
    pub tau: f64,
    pub m: usize,
    pub query_count: usize,
}

impl RobustPlan {
    pub fn new(n: usize, tau: f64, m: usize) -> Result<Self, AttackError> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(AttackError::InvalidArgument(format!("τ must be positive, got {tau}")));
        }
        if m == 0 || m > n {
            return Err(AttackError::InvalidArgument(format!("chunk size {m} for N = {n}")));
        }
        Ok(RobustPlan { tau, m, query_count: n.div_ceil(m) })
    }
}

fn ceil_log2(n: usize) -> usize {
    (usize::BITS - n.saturating_sub(1).leading_zeros()) as usize
}

/// Chunk size `m = min(⌈log₂ N⌉, ⌊log₂((φ - 8) / (N τ ln 2))⌋)`, at least 1.
/// Under exact arithmetic only the `⌈log₂ N⌉` cap applies.
pub fn robust_chunk_size(n: usize, tau: f64, arith: Arithmetic) -> Result<RobustPlan, AttackError> {
    if n == 0 {
        return Err(AttackError::InvalidArgument("N must be positive".into()));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(AttackError::InvalidArgument(format!("τ must be positive, got {tau}")));
    }
    let cap = ceil_log2(n);
    let m = match arith {
        Arithmetic::Apa => cap,
        Arithmetic::Fpa(fmt) => {
            let phi = fmt.phi() as f64;
            let ntl = n as f64 * tau * std::f64::consts::LN_2;
            if phi < 8.0 + ntl.ceil() {
                return Err(AttackError::Infeasible(format!(
                    "{fmt} has φ = {phi} < 8 + ⌈Nτ ln 2⌉ = {}",
                    8.0 + ntl.ceil()
                )));
            }
            let by_precision = ((phi - 8.0) / ntl).log2().floor();
            cap.min(by_precision.max(0.0) as usize)
        }
    };
    RobustPlan::new(n, tau, m.clamp(1, n))
}

/// `τ` covering noise supported on `[a, b]`.
pub fn tau_for_bounded_support(a: f64, b: f64) -> Result<f64, AttackError> {
    if !(a <= b) || !a.is_finite() || !b.is_finite() {
        return Err(AttackError::InvalidArgument(format!("bad support [{a}, {b}]")));
    }
    Ok(a.abs().max(b.abs()))
}

/// `τ = 2(λ + ν)√ln(2/δ)`: sub-exponential noise with parameters `(λ, ν)`
/// stays within `τ` with probability at least `1 - δ`.
pub fn tau_for_subexponential(lambda: f64, nu: f64, delta: f64) -> Result<f64, AttackError> {
    if !(lambda > 0.0 && nu > 0.0 && delta > 0.0 && delta < 1.0) || !lambda.is_finite() || !nu.is_finite() {
        return Err(AttackError::InvalidArgument(format!("bad parameters λ = {lambda}, ν = {nu}, δ = {delta}")));
    }
    Ok(2.0 * (lambda + nu) * (2.0 / delta).ln().sqrt())
}

/// Chunk size `⌈log₂(1/α) - 2⌉` and `τ = 2 α ln 2` for multiplicative noise
/// of rate `α ≤ 1/8`.
pub fn plan_for_multiplicative(alpha: f64) -> Result<(usize, f64), AttackError> {
    if !(alpha > 0.0 && alpha <= 0.125) {
        return Err(AttackError::Infeasible(format!("multiplicative rate α = {alpha} is outside (0, 1/8]")));
    }
    let m = ((1.0 / alpha).log2() - 2.0).ceil().max(1.0) as usize;
    Ok((m, 2.0 * std::f64::consts::LN_2 * alpha))
}

/// Result of a nearest-subset-sum search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decoded {
    /// `Σ σ_j 2^j` over the chosen subset.
    pub index: u64,
    /// `|S(σ) - t|` for the winner.
    pub distance: f64,
    /// The same for the best other candidate (`inf` if there is none).
    pub runner_up: f64,
    /// Another candidate was exactly as close; the lowest index won.
    pub tie: bool,
}

#[derive(Debug, Clone, Copy)]
struct Best {
    d: u128,
    idx: u64,
    second: u128,
    tie: bool,
}

impl Best {
    const EMPTY: Best = Best { d: u128::MAX, idx: u64::MAX, second: u128::MAX, tie: false };

    fn offer(&mut self, d: u128, idx: u64) {
        if d < self.d {
            self.second = self.d;
            self.d = d;
            self.idx = idx;
            self.tie = false;
        } else if d == self.d {
            self.tie = true;
            self.second = d;
            self.idx = self.idx.min(idx);
        } else if d < self.second {
            self.second = d;
        }
    }

    fn merge(mut self, other: Best) -> Best {
        if other.d == u128::MAX {
            return self;
        }
        self.offer(other.d, other.idx);
        if other.tie {
            self.offer(other.d, u64::MAX);
        } else if other.second != u128::MAX {
            self.offer(other.second, u64::MAX);
        }
        self
    }
}

/// Exhaustive argmin of `|Σ_{j ∈ A} z_j - t|` over subsets `A`, on integer
/// keys `round(z_j 2^s)`.
#[derive(Debug, Clone)]
pub struct SubsetDecoder {
    keys: Vec<i128>,
    scale: u32,
    reach: i128,
}

const LOW_BITS: usize = 16;

impl SubsetDecoder {
    pub fn new(z: &[Fixed]) -> Result<Self, AttackError> {
        if z.is_empty() || z.len() > EXHAUSTIVE_CAP {
            return Err(AttackError::TooLarge { n: z.len(), cap: EXHAUSTIVE_CAP });
        }
        let frac = z.iter().map(Fixed::frac).min().unwrap_or(0);
        let total = z.iter().fold(Fixed::zero(frac), |acc, x| &acc + &x.abs());
        // Targets are clamped to twice the total, so keys and sums stay below 2^126.
        let int_bits = (total.floor_to_int() + 1u32).bits() as i64 + 1;
        let scale = (124 - int_bits).min(frac as i64);
        if scale < 1 {
            return Err(AttackError::InsufficientPrecision(format!(
                "weights of magnitude 2^{int_bits} leave no fractional bits"
            )));
        }
        let scale = scale as u32;
        let key = |x: &Fixed| x.rescale(scale).raw().to_i128().expect("bounded above");
        let keys: Vec<i128> = z.iter().map(key).collect();
        let reach = 2 * keys.iter().map(|k| k.abs()).sum::<i128>() + 1;
        Ok(SubsetDecoder { keys, scale, reach })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn decode(&self, target: &Fixed) -> Decoded {
        self.decode_first(self.keys.len(), target)
    }

    /// Search only over subsets of the first `count` weights.
    pub fn decode_first(&self, count: usize, target: &Fixed) -> Decoded {
        let keys = &self.keys[..count.min(self.keys.len())];
        let t = target.rescale(self.scale);
        let t = t.raw().to_i128().unwrap_or(if t.is_negative() { -self.reach } else { self.reach });
        let t = t.clamp(-self.reach, self.reach);
        let best = if keys.len() <= LOW_BITS + 2 {
            scan(keys, 0, 0, t)
        } else {
            let (low, high) = keys.split_at(LOW_BITS);
            (0..1u64 << high.len())
                .into_par_iter()
                .map(|p| {
                    let base: i128 = (0..high.len()).filter(|b| p >> b & 1 == 1).map(|b| high[b]).sum();
                    scan(low, base, p << LOW_BITS, t)
                })
                .reduce(|| Best::EMPTY, Best::merge)
        };
        let unit = 2f64.powi(-(self.scale as i32));
        let to_f64 = |d: u128| if d == u128::MAX { f64::INFINITY } else { d as f64 * unit };
        Decoded { index: best.idx, distance: to_f64(best.d), runner_up: to_f64(best.second), tie: best.tie }
    }
}

/// Gray-code walk over all subsets of `keys`, starting from `base`.
fn scan(keys: &[i128], base: i128, prefix: u64, t: i128) -> Best {
    let mut best = Best::EMPTY;
    let mut s = base;
    let mut g: u64 = 0;
    best.offer((s - t).unsigned_abs(), prefix);
    for i in 1..1u64 << keys.len() {
        let b = i.trailing_zeros() as usize;
        g ^= 1 << b;
        if g >> b & 1 == 1 {
            s += keys[b];
        } else {
            s -= keys[b];
        }
        best.offer((s - t).unsigned_abs(), prefix | g);
    }
    best
}

/// Fractional bits used when decoding: enough to resolve `τ` with room for
/// `N` accumulated roundings.
fn decode_frac(n: usize, tau: f64) -> u32 {
    64 + (-tau.log2()).ceil().max(0.0) as u32 + ceil_log2(n + 1) as u32
}

/// Float scores carry rounding error from `N + 2` operations on values up to
/// the largest log term; refuse unless that stays well inside the slack
/// `N τ (ln 3 - 1)` the separation leaves.
fn check_float_precision(n: usize, tau: f64, z: &[f64], fmt: FpaFormat) -> Result<(), AttackError> {
    let m = z.iter().sum::<f64>() + n as f64 * std::f64::consts::LN_2;
    let err = (n as f64 + 2.0) * m * 2f64.powi(-(fmt.precision() as i32));
    let slack = n as f64 * tau * (LN3 - 1.0) / 2.0;
    if m >= fmt.max_finite() / 2.0 {
        return Err(AttackError::InsufficientPrecision(format!("log weights up to {m:e} overflow {fmt}")));
    }
    if err >= slack {
        return Err(AttackError::InsufficientPrecision(format!(
            "{fmt} rounding error {err:e} exceeds the decoding slack {slack:e}"
        )));
    }
    Ok(())
}

/// What the worst-case adversary sees of the current query's decoder.
struct ChunkProbe {
    z: Vec<f64>,
    offset: f64,
    n: f64,
}

impl DecodeProbe for ChunkProbe {
    fn margin(&self, observed: f64) -> f64 {
        let t = self.offset - self.n * observed;
        let (mut best, mut second) = (f64::INFINITY, f64::INFINITY);
        let mut s = 0.0;
        let mut g: u64 = 0;
        let mut offer = |d: f64| {
            if d < best {
                second = best;
                best = d;
            } else if d < second {
                second = d;
            }
        };
        offer((s - t).abs());
        for i in 1..1u64 << self.z.len() {
            let b = i.trailing_zeros() as usize;
            g ^= 1 << b;
            s += if g >> b & 1 == 1 { self.z[b] } else { -self.z[b] };
            offer((s - t).abs());
        }
        second - best
    }
}

struct ProbeGuard<'a>(&'a dyn LossOracle);

impl Drop for ProbeGuard<'_> {
    fn drop(&mut self) {
        self.0.register_probe(None);
    }
}

/// Single query with `robust_weights(N, τ_max)` and an exhaustive decode;
/// `N` is capped at [`EXHAUSTIVE_CAP`].
pub fn single_query_robust_attack(
    oracle: &dyn LossOracle,
    tau_max: f64,
) -> Result<Recovery<BinaryLabeling>, AttackError> {
    require_binary(oracle)?;
    let n = oracle.len();
    if n > EXHAUSTIVE_CAP {
        return Err(AttackError::TooLarge { n, cap: EXHAUSTIVE_CAP });
    }
    run_chunks(oracle, &RobustPlan::new(n, tau_max, n)?)
}

/// Chunked robust attack with the chunk size from [`robust_chunk_size`].
pub fn multi_query_robust_attack(
    oracle: &dyn LossOracle,
    tau_max: f64,
) -> Result<Recovery<BinaryLabeling>, AttackError> {
    require_binary(oracle)?;
    let plan = robust_chunk_size(oracle.len(), tau_max, oracle.arithmetic())?;
    run_chunks(oracle, &plan)
}

/// Chunked robust attack with an explicit plan.
pub fn multi_query_robust_attack_with_plan(
    oracle: &dyn LossOracle,
    plan: &RobustPlan,
) -> Result<Recovery<BinaryLabeling>, AttackError> {
    require_binary(oracle)?;
    if plan.m > EXHAUSTIVE_CAP {
        return Err(AttackError::TooLarge { n: plan.m, cap: EXHAUSTIVE_CAP });
    }
    run_chunks(oracle, &RobustPlan::new(oracle.len(), plan.tau, plan.m)?)
}

fn run_chunks(oracle: &dyn LossOracle, plan: &RobustPlan) -> Result<Recovery<BinaryLabeling>, AttackError> {
    let n = oracle.len();
    let tau = plan.tau;
    let z = robust_log_weights(n, tau, plan.m)?;
    if let Arithmetic::Fpa(fmt) = oracle.arithmetic() {
        check_float_precision(n, tau, &z, fmt)?;
    }
    let frac = decode_frac(n, tau);
    let zf = z.iter().map(|&x| Fixed::from_f64(x, frac)).collect::<Result<Vec<_>, _>>()?;
    let decoder = SubsetDecoder::new(&zf)?;
    // softplus_prefix[c] = Σ_{j < c} softplus(z_j).
    let mut softplus_prefix = vec![Fixed::zero(frac)];
    for x in &zf {
        let next = softplus_prefix.last().expect("non-empty") + &x.softplus();
        softplus_prefix.push(next);
    }
    let ln2 = Fixed::ln2(frac);
    let slack = n as f64 * tau * (1.0 + (LN3 - 1.0) / 2.0);

    let _guard = ProbeGuard(oracle);
    let mut u = PredictionVector::uniform_half(n)?;
    let mut bits = vec![0u8; n];
    let mut out_of_contract = false;
    let mut queries = 0;
    for lo in (0..n).step_by(plan.m) {
        let size = (lo + plan.m).min(n) - lo;
        for (j, &x) in z[..size].iter().enumerate() {
            u.set(lo + j, Prob::LogOdds(x))?;
        }
        let outside = (n - size) as f64 * std::f64::consts::LN_2;
        let probe = ChunkProbe {
            z: z[..size].to_vec(),
            offset: z[..size].iter().map(|&x| softplus_f64(x)).sum::<f64>() + outside,
            n: n as f64,
        };
        oracle.register_probe(Some(Arc::new(probe)));
        let score = oracle.query_binary(&u)?;
        queries += 1;
        for i in lo..lo + size {
            u.set(i, Prob::HALF)?;
        }
        let d = decode_score(&decoder, size, &softplus_prefix[size], &ln2, n, &score);
        for (j, b) in bits[lo..lo + size].iter_mut().enumerate() {
            *b = (d.index >> j & 1) as u8;
        }
        out_of_contract |= d.tie || d.distance > slack;
    }
    Ok(Recovery { labels: BinaryLabeling::new(bits)?, unresolved: Vec::new(), queries, out_of_contract })
}

/// Nearest labeling to an observed score for arbitrary weights `v`
/// (`N <= EXHAUSTIVE_CAP`), ties to the lowest index.
pub fn decode_with_weights(v: &WeightVector, score: &LossScore) -> Result<(BinaryLabeling, Decoded), AttackError> {
    let n = v.len();
    if n > EXHAUSTIVE_CAP {
        return Err(AttackError::TooLarge { n, cap: EXHAUSTIVE_CAP });
    }
    let frac = 128;
    let z = v.ln_entries(frac)?;
    let mut offset = Fixed::zero(frac);
    for w in v.entries() {
        offset = &offset + &w.ln_one_plus(frac)?;
    }
    let t = &offset - &score.to_fixed(frac).mul_int(n as i64);
    let d = SubsetDecoder::new(&z)?.decode(&t);
    let bits = (0..n).map(|j| (d.index >> j & 1) as u8).collect();
    Ok((BinaryLabeling::new(bits)?, d))
}

fn decode_score(
    decoder: &SubsetDecoder,
    size: usize,
    softplus_sum: &Fixed,
    ln2: &Fixed,
    n: usize,
    score: &LossScore,
) -> Decoded {
    let frac = softplus_sum.frac();
    let loss = score.to_fixed(frac);
    let t = &(softplus_sum + &ln2.mul_int((n - size) as i64)) - &loss.mul_int(n as i64);
    decoder.decode_first(size, &t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::single_query_binary_attack;
    use crate::loss::{loss_from_weights, Labeling};
    use crate::oracle::{BoundedMode, NoiseModel, Oracle, OracleConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn oracle(sigma: &BinaryLabeling, arith: Arithmetic, noise: NoiseModel) -> Oracle {
        Oracle::new(OracleConfig::new(Labeling::Binary(sigma.clone()), arith).with_noise(noise)).unwrap()
    }

    #[test]
    fn weight_examples() {
        let z = robust_log_weights(2, 0.5, 2).unwrap();
        assert!((z[0] - 9f64.ln()).abs() < 1e-14 && (z[1] - 81f64.ln()).abs() < 1e-13);
        let z = robust_log_weights(1, 1.0, 1).unwrap();
        assert!((z[0] - 9f64.ln()).abs() < 1e-14);
        let z = robust_log_weights(12, 0.3, 12).unwrap();
        assert!(z.windows(2).all(|w| w[1] > w[0]));
        assert!(robust_weights(3, 0.0).is_err());
        assert!(robust_weights(3, -1.0).is_err());
    }

    #[test]
    fn two_point_example_tolerates_noise() {
        let sigma = BinaryLabeling::new(vec![0, 1]).unwrap();
        let v = robust_weights(2, 0.5).unwrap();
        let truth = loss_from_weights(&v, &sigma).unwrap().to_f64();
        assert!((truth - (820f64 / 81.0).ln() / 2.0).abs() < 1e-12);
        // All four candidate scores are at least ln 3 apart.
        let mut scores: Vec<f64> = (0..4)
            .map(|i| loss_from_weights(&v, &BinaryLabeling::from_index(i, 2).unwrap()).unwrap().to_f64())
            .collect();
        scores.sort_by(f64::total_cmp);
        assert!(scores.windows(2).all(|w| w[1] - w[0] >= LN3 - 1e-12));
        let noise = NoiseModel::BoundedAdditive { tau: 0.4, mode: BoundedMode::RandomSign, seed: 0 };
        for seed in 0..8 {
            let noise = match noise {
                NoiseModel::BoundedAdditive { tau, mode, .. } => NoiseModel::BoundedAdditive { tau, mode, seed },
                _ => unreachable!(),
            };
            let r = single_query_robust_attack(&oracle(&sigma, Arithmetic::Apa, noise), 0.5).unwrap();
            assert_eq!(r.labels, sigma);
            assert!(!r.out_of_contract);
        }
    }

    #[test]
    fn noiseless_matches_exact_attack() {
        for n in 1..=7 {
            for idx in 0..1u64 << n {
                let sigma = BinaryLabeling::from_index(idx, n).unwrap();
                let o = oracle(&sigma, Arithmetic::Apa, NoiseModel::None);
                let exact = single_query_binary_attack(&oracle(&sigma, Arithmetic::Apa, NoiseModel::None)).unwrap();
                let robust = single_query_robust_attack(&o, 0.25).unwrap();
                assert_eq!(robust.labels, exact.labels);
                assert_eq!(robust.queries, 1);
            }
        }
    }

    #[test]
    fn looser_bound_still_works() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tau = 0.1;
        for seed in 0..10 {
            let sigma = BinaryLabeling::random(8, &mut rng).unwrap();
            let noise = NoiseModel::BoundedAdditive { tau, mode: BoundedMode::Uniform, seed };
            let o = oracle(&sigma, Arithmetic::Fpa(FpaFormat::BINARY64), noise);
            assert_eq!(single_query_robust_attack(&o, 2.0 * tau).unwrap().labels, sigma);
        }
    }

    #[test]
    fn chunk_size_examples() {
        let phi64 = Arithmetic::Fpa(FpaFormat::new(10, 53).unwrap());
        let p = robust_chunk_size(100, 0.01, phi64).unwrap();
        assert_eq!((p.m, p.query_count), (6, 17));
        let p = robust_chunk_size(2, 1e-9, Arithmetic::Fpa(FpaFormat::BINARY64)).unwrap();
        assert_eq!(p.m, 1);
        assert!(robust_chunk_size(1000, 0.1, Arithmetic::Fpa(FpaFormat::BINARY64)).is_err());
        let p = robust_chunk_size(1000, 0.01, Arithmetic::Fpa(FpaFormat::BINARY64)).unwrap();
        assert_eq!((p.m, p.query_count), (3, 334));
        let p = robust_chunk_size(1000, 1.0, Arithmetic::Apa).unwrap();
        assert_eq!((p.m, p.query_count), (10, 100));
        assert_eq!(robust_chunk_size(1, 0.5, Arithmetic::Apa).unwrap().m, 1);
    }

    #[test]
    fn single_chunk_matches_single_query() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in 1..=6 {
            let sigma = BinaryLabeling::random(n, &mut rng).unwrap();
            let noise = NoiseModel::BoundedAdditive { tau: 0.3, mode: BoundedMode::WorstCase, seed: 1 };
            let a = single_query_robust_attack(&oracle(&sigma, Arithmetic::Apa, noise.clone()), 0.3).unwrap();
            let plan = RobustPlan::new(n, 0.3, n).unwrap();
            let b = multi_query_robust_attack_with_plan(&oracle(&sigma, Arithmetic::Apa, noise), &plan).unwrap();
            assert_eq!(a.labels, b.labels);
            assert_eq!(a.labels, sigma);
        }
    }

    #[test]
    fn chunked_attack_under_uniform_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sigma = BinaryLabeling::random(200, &mut rng).unwrap();
        let noise = NoiseModel::BoundedAdditive { tau: 0.01, mode: BoundedMode::Uniform, seed: 9 };
        let fmt = Arithmetic::Fpa(FpaFormat::BINARY64);
        let o = oracle(&sigma, fmt, noise);
        let r = multi_query_robust_attack(&o, 0.01).unwrap();
        assert_eq!(r.labels, sigma);
        assert_eq!(r.queries, robust_chunk_size(200, 0.01, fmt).unwrap().query_count);
        assert_eq!(o.queries_made(), r.queries);
    }

    #[test]
    fn zero_chunk_decodes_to_zero() {
        let sigma = BinaryLabeling::zeros(12).unwrap();
        let noise = NoiseModel::BoundedAdditive { tau: 0.5, mode: BoundedMode::WorstCase, seed: 0 };
        let plan = RobustPlan::new(12, 0.5, 4).unwrap();
        let r = multi_query_robust_attack_with_plan(&oracle(&sigma, Arithmetic::Apa, noise), &plan).unwrap();
        assert_eq!(r.labels, sigma);
        assert_eq!(r.queries, 3);
    }

    #[test]
    fn worst_case_noise_exhaustive_small() {
        let fmt = Arithmetic::Fpa(FpaFormat::BINARY64);
        for n in 1..=6 {
            for idx in 0..1u64 << n {
                let sigma = BinaryLabeling::from_index(idx, n).unwrap();
                let noise = NoiseModel::BoundedAdditive { tau: 0.5, mode: BoundedMode::WorstCase, seed: 0 };
                let r = single_query_robust_attack(&oracle(&sigma, fmt, noise.clone()), 0.5).unwrap();
                assert_eq!(r.labels, sigma);
                let r = multi_query_robust_attack(&oracle(&sigma, fmt, noise), 0.5).unwrap();
                assert_eq!(r.labels, sigma);
            }
        }
    }

    #[test]
    fn out_of_contract_noise_is_flagged() {
        let sigma = BinaryLabeling::new(vec![1, 0, 1]).unwrap();
        let noise = NoiseModel::BoundedAdditive { tau: 3.0, mode: BoundedMode::WorstCase, seed: 0 };
        let r = single_query_robust_attack(&oracle(&sigma, Arithmetic::Apa, noise), 0.1).unwrap();
        assert!(r.out_of_contract);
    }

    #[test]
    fn decoder_ties_pick_lowest_index() {
        let f = |x: f64| Fixed::from_f64(x, 64).unwrap();
        let d = SubsetDecoder::new(&[f(1.0), f(2.0)]).unwrap();
        let r = d.decode(&f(1.5));
        assert!(r.tie);
        assert_eq!(r.index, 1);
        let r = d.decode(&f(2.9));
        assert_eq!((r.index, r.tie), (3, false));
        assert!((r.distance - 0.1).abs() < 1e-12 && (r.runner_up - 0.9).abs() < 1e-12);
    }

    #[test]
    fn parallel_scan_matches_serial() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        use rand::Rng;
        let z: Vec<Fixed> = (0..20).map(|_| Fixed::from_f64(rng.random_range(0.0..1000.0), 64).unwrap()).collect();
        let d = SubsetDecoder::new(&z).unwrap();
        for _ in 0..3 {
            let t = Fixed::from_f64(rng.random_range(0.0..5000.0), 64).unwrap();
            let par = d.decode(&t);
            let keys = &d.keys;
            let ser = scan(keys, 0, 0, t.rescale(d.scale).raw().to_i128().unwrap());
            assert_eq!(par.index, ser.idx);
            assert_eq!(par.tie, ser.tie);
        }
    }

    #[test]
    fn reduction_formulas() {
        assert_eq!(tau_for_bounded_support(-0.1, 0.1).unwrap(), 0.1);
        assert_eq!(tau_for_bounded_support(0.0, 1.0).unwrap(), 1.0);
        assert_eq!(tau_for_bounded_support(-3.0, 2.0).unwrap(), 3.0);
        assert!(tau_for_bounded_support(1.0, 0.0).is_err());

        let t = tau_for_subexponential(2.0, 4.0, 0.1).unwrap();
        assert!((t - 12.0 * 20f64.ln().sqrt()).abs() < 1e-12);
        assert!((t - 20.77).abs() < 5e-3);
        assert!(tau_for_subexponential(2.0, 4.0, 0.01).unwrap() > t);
        assert!((tau_for_subexponential(1.0, 1.0, 0.5).unwrap() - 4.0 * 4f64.ln().sqrt()).abs() < 1e-12);
        assert!(tau_for_subexponential(1.0, 1.0, 1.0).is_err());

        let (m, tau) = plan_for_multiplicative(0.125).unwrap();
        assert_eq!(m, 1);
        assert!((tau - std::f64::consts::LN_2 / 4.0).abs() < 1e-15);
        let (m, tau) = plan_for_multiplicative(1.0 / 16.0).unwrap();
        assert_eq!(m, 2);
        assert!((tau - std::f64::consts::LN_2 / 8.0).abs() < 1e-15);
        assert!(plan_for_multiplicative(0.25).is_err());
        assert!(plan_for_multiplicative(0.2).is_err());
    }

    #[test]
    fn multiplicative_noise_end_to_end() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (alpha, seed) in [(0.125, 1u64), (1.0 / 16.0, 2)] {
            let (m, tau) = plan_for_multiplicative(alpha).unwrap();
            let sigma = BinaryLabeling::random(60, &mut rng).unwrap();
            let o = oracle(&sigma, Arithmetic::Fpa(FpaFormat::BINARY64), NoiseModel::Multiplicative { alpha, seed });
            let plan = RobustPlan::new(60, tau, m).unwrap();
            let r = multi_query_robust_attack_with_plan(&o, &plan).unwrap();
            assert_eq!(r.labels, sigma, "α = {alpha}");
        }
    }

    #[test]
    fn refuses_oversized_inputs() {
        let sigma = BinaryLabeling::zeros(27).unwrap();
        let o = oracle(&sigma, Arithmetic::Apa, NoiseModel::None);
        assert!(matches!(single_query_robust_attack(&o, 0.1), Err(AttackError::TooLarge { .. })));
        let sigma = BinaryLabeling::zeros(20).unwrap();
        let fmt = Arithmetic::Fpa(FpaFormat::new(8, 12).unwrap());
        let o = oracle(&sigma, fmt, NoiseModel::None);
        assert!(matches!(single_query_robust_attack(&o, 1.0), Err(AttackError::InsufficientPrecision(_))));
    }
}
