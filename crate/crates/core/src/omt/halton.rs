//! Halton low-discrepancy points.

/// Radical inverse of `index` in `base`, computed as one exact-integer ratio
/// so the result is the correctly rounded value of the underlying fraction.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    debug_assert!(base >= 2);
    let mut numerator = 0u64;
    let mut denominator = 1u64;
    while index > 0 {
        numerator = numerator * base + index % base;
        denominator *= base;
        index /= base;
    }
    numerator as f64 / denominator as f64
}

/// The first `count` primes.
pub fn first_primes(count: usize) -> Vec<u64> {
    let mut primes: Vec<u64> = Vec::with_capacity(count);
    let mut candidate = 2u64;
    while primes.len() < count {
        if primes
            .iter()
            .take_while(|&&p| p * p <= candidate)
            .all(|&p| !candidate.is_multiple_of(p))
        {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}

/// Halton points with indices `1..=count`, coordinate `k` in base `prime_k`.
pub fn halton(count: usize, dim: usize) -> Vec<Vec<f64>> {
    let bases = first_primes(dim);
    (1..=count as u64)
        .map(|i| bases.iter().map(|&b| radical_inverse(i, b)).collect())
        .collect()
}
