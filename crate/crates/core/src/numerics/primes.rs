//! Prime tables for the factorization-based attacks.

use super::NumericsError;

/// The first `n` primes in increasing order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimeTable {
    primes: Vec<u64>,
}

impl PrimeTable {
    pub fn as_slice(&self) -> &[u64] {
        &self.primes
    }

    pub fn len(&self) -> usize {
        self.primes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primes.is_empty()
    }

    /// The `i`-th prime, 1-based (`nth(1) == 2`).
    pub fn nth(&self, i: usize) -> Option<u64> {
        i.checked_sub(1).and_then(|j| self.primes.get(j).copied())
    }

    pub fn into_vec(self) -> Vec<u64> {
        self.primes
    }
}

impl std::ops::Deref for PrimeTable {
    type Target = [u64];

    fn deref(&self) -> &[u64] {
        &self.primes
    }
}

/// Upper bound on the `n`-th prime: `n (ln n + ln ln n)` holds for `n >= 6`.
fn nth_prime_upper_bound(n: usize) -> usize {
    if n < 6 {
        return 15;
    }
    let x = n as f64;
    (x * (x.ln() + x.ln().ln())).ceil() as usize + 3
}

/// Sieve of Eratosthenes over odd numbers; returns all primes `<= limit`.
fn sieve(limit: usize) -> Vec<u64> {
    if limit < 2 {
        return Vec::new();
    }
    // index i represents 2i + 1
    let half = limit / 2 + 1;
    let mut composite = vec![false; half];
    composite[0] = true;
    let mut i = 1;
    while (2 * i + 1) * (2 * i + 1) <= limit {
        if !composite[i] {
            let p = 2 * i + 1;
            let mut j = p * p / 2;
            while j < half {
                composite[j] = true;
                j += p;
            }
        }
        i += 1;
    }
    let mut out = vec![2u64];
    out.extend(composite.iter().enumerate().filter(|&(i, &c)| !c && 2 * i < limit).map(|(i, _)| (2 * i + 1) as u64));
    out
}

/// Returns exactly the first `n` primes.
pub fn primes_first(n: usize) -> Result<PrimeTable, NumericsError> {
    if n == 0 {
        return Err(NumericsError::InvalidArgument("prime count must be positive".into()));
    }
    let mut primes = sieve(nth_prime_upper_bound(n));
    debug_assert!(primes.len() >= n);
    primes.truncate(n);
    Ok(PrimeTable { primes })
}

/// Largest prime `p_m <= x` together with its 1-based index `m`.
pub fn largest_prime_at_most(x: f64) -> Result<(usize, u64), NumericsError> {
    if !(x >= 2.0) {
        return Err(NumericsError::NoPrime(x));
    }
    let limit = x.floor();
    if limit > 1e10 {
        return Err(NumericsError::InvalidArgument(format!("prime search limit {limit} is too large")));
    }
    let primes = sieve(limit as usize);
    let p = *primes.last().expect("2 <= limit");
    Ok((primes.len(), p))
}
