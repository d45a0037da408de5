//! Homomorphic hashing over a prime-order subgroup.
//!
//! A digest of an integer `a` is `g^(a mod q) mod r`, where `q` and `r` are
//! primes with `q | r - 1` and `g` generates the order-`q` subgroup of the
//! multiplicative group of `F_r`. The map is linear in the exponent, so the
//! digest of a linear combination `Σ c_i · a_i` can be reconstructed from the
//! digests of the `a_i` alone — the property the integrity checks in
//! [`crate::verify`] are built on.
//!
//! Arithmetic stays in double-word machine integers: `r` is capped at 63 bits
//! so products fit in `u128`. This is an integrity checksum, not a
//! cryptographic commitment; parameter sizes are chosen for a small residual
//! miss probability (`1/q`), not discrete-log hardness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Default bit length of the exponent modulus `q`.
pub const DEFAULT_Q_BITS: u32 = 31;
/// Default bit length of the digest modulus `r`.
pub const DEFAULT_R_BITS: u32 = 62;

/// Attempts before the parameter search gives up. Generous: a random odd
/// `n`-bit integer is prime with probability about `2/(n ln 2)`.
const SEARCH_BUDGET: u32 = 200_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HashError {
    #[error("bit sizes out of range: need 2 <= q_bits < r_bits <= 63, got q_bits={q_bits}, r_bits={r_bits}")]
    InvalidBits { q_bits: u32, r_bits: u32 },
    #[error("no valid (q, r, b) triple found within the search budget")]
    SearchExhausted,
    #[error("invalid hash parameters: {0}")]
    InvalidParams(&'static str),
    #[error("combination length mismatch: {digests} digests vs {exponents} exponents")]
    LengthMismatch { digests: usize, exponents: usize },
    #[error("combination of empty lists")]
    EmptyCombination,
}

/// Subgroup structure shared by every digest: `g = b^((r-1)/q) mod r`
/// generates an order-`q` subgroup of `F_r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashParams {
    /// Prime exponent modulus; also the modulus of the data field.
    pub q: u64,
    /// Prime digest modulus with `q | r - 1`.
    pub r: u64,
    /// Generator of the order-`q` subgroup of `F_r`.
    pub g: u64,
    /// Seed base the generator was derived from.
    pub b: u64,
}

/// A digest value in `[0, r)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Digest(pub u64);

/// `a * b mod m` without overflow.
#[inline]
pub fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

/// `base ^ exp mod m` by square-and-multiply.
pub fn pow_mod(base: u64, mut exp: u64, m: u64) -> u64 {
    debug_assert!(m > 1);
    let mut acc: u64 = 1;
    let mut base = base % m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller–Rabin for `u64`. The fixed base set is exact for all
/// 64-bit inputs, so the error probability is 0 (well under the 2^-64 target).
pub fn is_prime(n: u64) -> bool {
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    if n < 2 {
        return false;
    }
    for &p in &BASES {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    let mut d = n - 1;
    let mut s = 0u32;
    while d & 1 == 0 {
        d >>= 1;
        s += 1;
    }
    'bases: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'bases;
            }
        }
        return false;
    }
    true
}

/// Canonical residue of a signed value mod `q`.
#[inline]
pub(crate) fn reduce_signed(a: i128, q: u64) -> u64 {
    let q = q as i128;
    (((a % q) + q) % q) as u64
}

impl HashParams {
    /// Build params from an explicit `(q, r, b)` triple, deriving `g`.
    /// Used by tests and small-field experiments where exact moduli matter.
    pub fn from_parts(q: u64, r: u64, b: u64) -> Result<Self, HashError> {
        if !is_prime(q) {
            return Err(HashError::InvalidParams("q is not prime"));
        }
        if !is_prime(r) {
            return Err(HashError::InvalidParams("r is not prime"));
        }
        if r <= q || (r - 1) % q != 0 {
            return Err(HashError::InvalidParams("q does not divide r - 1"));
        }
        if r.leading_zeros() == 0 {
            return Err(HashError::InvalidParams("r must fit in 63 bits"));
        }
        if b < 2 || b >= r {
            return Err(HashError::InvalidParams("b out of [2, r-1]"));
        }
        let g = pow_mod(b, (r - 1) / q, r);
        if g == 1 {
            return Err(HashError::InvalidParams("b collapses to the trivial subgroup"));
        }
        Ok(HashParams { q, r, g, b })
    }

    /// Find `(r, b)` for a caller-chosen prime `q`, with `r` of `r_bits` bits.
    pub fn for_modulus(q: u64, r_bits: u32, seed: u64) -> Result<Self, HashError> {
        if !is_prime(q) {
            return Err(HashError::InvalidParams("q is not prime"));
        }
        let q_bits = 64 - q.leading_zeros();
        if r_bits <= q_bits || r_bits > 63 {
            return Err(HashError::InvalidBits { q_bits, r_bits });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = search_r(q, r_bits, &mut rng)?;
        let (b, g) = sample_generator(q, r, &mut rng)?;
        Ok(HashParams { q, r, g, b })
    }

    /// Bit length of `q`.
    pub fn q_bits(&self) -> u32 {
        64 - self.q.leading_zeros()
    }

    /// Bit length of `r`.
    pub fn r_bits(&self) -> u32 {
        64 - self.r.leading_zeros()
    }
}

/// Generate hash parameters: a random `q_bits`-bit prime `q`, a prime
/// `r = k·q + 1` of `r_bits` bits, and a base `b` whose derived `g` is
/// nontrivial. Deterministic for a fixed seed.
pub fn gen_params(q_bits: u32, r_bits: u32, seed: u64) -> Result<HashParams, HashError> {
    if q_bits < 2 || r_bits <= q_bits || r_bits > 63 {
        return Err(HashError::InvalidBits { q_bits, r_bits });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut budget = SEARCH_BUDGET;
    loop {
        let q = sample_prime(q_bits, &mut rng, &mut budget)?;
        // Not every q admits an r_bits-bit prime of the form k·q + 1 within
        // the remaining budget; resample q and keep looking.
        match search_r(q, r_bits, &mut rng) {
            Ok(r) => {
                let (b, g) = sample_generator(q, r, &mut rng)?;
                return Ok(HashParams { q, r, g, b });
            }
            Err(HashError::SearchExhausted) if budget > 0 => continue,
            Err(e) => return Err(e),
        }
    }
}

fn sample_prime(bits: u32, rng: &mut ChaCha8Rng, budget: &mut u32) -> Result<u64, HashError> {
    let lo = 1u64 << (bits - 1);
    let hi = if bits == 64 { u64::MAX } else { (1u64 << bits) - 1 };
    while *budget > 0 {
        *budget -= 1;
        let candidate = rng.gen_range(lo..=hi) | 1 | lo;
        if is_prime(candidate) {
            return Ok(candidate);
        }
    }
    Err(HashError::SearchExhausted)
}

fn search_r(q: u64, r_bits: u32, rng: &mut ChaCha8Rng) -> Result<u64, HashError> {
    let lo = 1u64 << (r_bits - 1);
    let hi = (1u64 << r_bits) - 1;
    // r = k·q + 1 must land in [lo, hi]
    let k_min = (lo - 1) / q + 1;
    let k_max = (hi - 1) / q;
    if k_min > k_max {
        return Err(HashError::SearchExhausted);
    }
    // A bounded number of draws per q keeps gen_params free to resample q.
    for _ in 0..4096 {
        let k = rng.gen_range(k_min..=k_max);
        let r = k * q + 1;
        if is_prime(r) {
            return Ok(r);
        }
    }
    Err(HashError::SearchExhausted)
}

fn sample_generator(q: u64, r: u64, rng: &mut ChaCha8Rng) -> Result<(u64, u64), HashError> {
    let exp = (r - 1) / q;
    for _ in 0..4096 {
        let b = rng.gen_range(2..r);
        let g = pow_mod(b, exp, r);
        if g != 1 {
            return Ok((b, g));
        }
    }
    Err(HashError::SearchExhausted)
}

/// Hash an integer of any sign: `g^(a mod q) mod r`.
pub fn hash(a: i128, params: &HashParams) -> Digest {
    hash_residue(reduce_signed(a, params.q), params)
}

/// Hash a value already reduced (or reducible) mod `q`.
#[inline]
pub fn hash_residue(a: u64, params: &HashParams) -> Digest {
    Digest(pow_mod(params.g, a % params.q, params.r))
}

/// Combine digests with signed exponents: `Π d_j^(e_j mod q) mod r`.
///
/// By the homomorphism, `hash_combine([hash(a_j)], [c_j]) == hash(Σ c_j a_j)`.
pub fn hash_combine(
    digests: &[Digest],
    exponents: &[i128],
    params: &HashParams,
) -> Result<Digest, HashError> {
    if digests.len() != exponents.len() {
        return Err(HashError::LengthMismatch {
            digests: digests.len(),
            exponents: exponents.len(),
        });
    }
    if digests.is_empty() {
        return Err(HashError::EmptyCombination);
    }
    let reduced: Vec<u64> = exponents.iter().map(|&e| reduce_signed(e, params.q)).collect();
    hash_combine_residues(digests, &reduced, params)
}

/// [`hash_combine`] with exponents already in `[0, q)`. Hot path for the
/// integrity checks, which accumulate exponents modularly.
pub fn hash_combine_residues(
    digests: &[Digest],
    exponents: &[u64],
    params: &HashParams,
) -> Result<Digest, HashError> {
    if digests.len() != exponents.len() {
        return Err(HashError::LengthMismatch {
            digests: digests.len(),
            exponents: exponents.len(),
        });
    }
    if digests.is_empty() {
        return Err(HashError::EmptyCombination);
    }
    let mut acc = 1u64;
    for (d, &e) in digests.iter().zip(exponents) {
        acc = mul_mod(acc, pow_mod(d.0, e % params.q, params.r), params.r);
    }
    Ok(Digest(acc))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_params() -> HashParams {
        // q=5, r=11, b=2: g = 2^((11-1)/5) mod 11 = 4
        HashParams::from_parts(5, 11, 2).unwrap()
    }

    #[test]
    fn forced_small_params_derive_generator() {
        let p = toy_params();
        assert_eq!(p.g, 4);
        assert_eq!(pow_mod(p.g, p.q, p.r), 1);
    }

    #[test]
    fn hash_small_values() {
        let p = toy_params();
        assert_eq!(hash(0, &p).0, 1);
        assert_eq!(hash(3, &p).0, 9); // 4^3 mod 11
        assert_eq!(hash(8, &p).0, 9); // periodicity: 8 mod 5 = 3
    }

    #[test]
    fn hash_periodicity_including_negatives() {
        let p = toy_params();
        for a in -25i128..25 {
            assert_eq!(hash(a, &p), hash(a + p.q as i128, &p));
            assert_eq!(hash(a, &p), hash(a.rem_euclid(p.q as i128), &p));
        }
    }

    #[test]
    fn combine_small_cases() {
        let p = toy_params();
        let h1 = hash(1, &p);
        assert_eq!(h1.0, 4);
        assert_eq!(hash_combine(&[h1], &[1], &p).unwrap().0, 4);

        let h2 = hash(2, &p);
        let h3 = hash(3, &p);
        assert_eq!((h2.0, h3.0), (5, 9));
        // 45 mod 11 = 1 = h(5) = h(0)
        let combined = hash_combine(&[h2, h3], &[1, 1], &p).unwrap();
        assert_eq!(combined.0, 1);
        assert_eq!(combined, hash(5, &p));

        // negative exponent: 9^(q-1) mod 11 = 5 = h(-3) = h(2)
        let inv = hash_combine(&[h3], &[-1], &p).unwrap();
        assert_eq!(inv.0, 5);
        assert_eq!(inv, hash(-3, &p));
        assert_eq!(inv, hash(2, &p));
    }

    #[test]
    fn combine_rejects_bad_shapes() {
        let p = toy_params();
        let d = hash(1, &p);
        assert!(matches!(
            hash_combine(&[d, d], &[1], &p),
            Err(HashError::LengthMismatch { digests: 2, exponents: 1 })
        ));
        assert!(matches!(hash_combine(&[], &[], &p), Err(HashError::EmptyCombination)));
    }

    #[test]
    fn gen_params_invariants_and_determinism() {
        let p = gen_params(20, 40, 1).unwrap();
        // independent oracle: trial division (feasible at these sizes)
        let trial_prime = |n: u64| -> bool {
            if n < 2 {
                return false;
            }
            let mut d = 2u64;
            while d * d <= n {
                if n % d == 0 {
                    return false;
                }
                d += 1;
            }
            true
        };
        assert!(trial_prime(p.q));
        assert!(trial_prime(p.r));
        assert_eq!((p.r - 1) % p.q, 0);
        assert_eq!(p.g, pow_mod(p.b, (p.r - 1) / p.q, p.r));
        assert_ne!(p.g, 1);
        assert_eq!(pow_mod(p.g, p.q, p.r), 1);
        assert_eq!(p.q_bits(), 20);
        assert_eq!(p.r_bits(), 40);
        assert_eq!(gen_params(20, 40, 1).unwrap(), p);
        assert_ne!(gen_params(20, 40, 2).unwrap(), p);
    }

    #[test]
    fn gen_params_default_sizes() {
        let p = gen_params(DEFAULT_Q_BITS, DEFAULT_R_BITS, 42).unwrap();
        assert_eq!(p.q_bits(), DEFAULT_Q_BITS);
        assert_eq!(p.r_bits(), DEFAULT_R_BITS);
        assert_eq!(pow_mod(p.g, p.q, p.r), 1);
    }

    #[test]
    fn gen_params_rejects_bad_bit_sizes() {
        assert!(matches!(gen_params(1, 10, 0), Err(HashError::InvalidBits { .. })));
        assert!(matches!(gen_params(10, 10, 0), Err(HashError::InvalidBits { .. })));
        assert!(matches!(gen_params(10, 64, 0), Err(HashError::InvalidBits { .. })));
    }

    #[test]
    fn for_modulus_hits_exact_q() {
        for q in [11u64, 101, 251, 1021] {
            let p = HashParams::for_modulus(q, 31, 7).unwrap();
            assert_eq!(p.q, q);
            assert_eq!((p.r - 1) % q, 0);
            assert!(is_prime(p.r));
            assert_eq!(pow_mod(p.g, q, p.r), 1);
            assert_ne!(p.g, 1);
        }
    }

    #[test]
    fn miller_rabin_agrees_with_trial_division() {
        let trial = |n: u64| -> bool {
            if n < 2 {
                return false;
            }
            let mut d = 2;
            while d * d <= n {
                if n % d == 0 {
                    return false;
                }
                d += 1;
            }
            true
        };
        for n in 0..2000u64 {
            assert_eq!(is_prime(n), trial(n), "n={n}");
        }
        assert!(is_prime((1 << 31) - 1)); // Mersenne prime
        assert!(!is_prime((1 << 29) - 1)); // 233 * 1103 * 2089
    }
}
