//! Property suites for the algebraic invariants: hash homomorphism and
//! periodicity against a bignum oracle, fountain round-trips against a
//! direct matrix–vector oracle, and recovery's partition guarantee.

use num_bigint::BigInt;
use proptest::prelude::*;

use sc3_core::adversary::{corrupt_batch, AttackPattern};
use sc3_core::fountain::{compute, DataMatrix, Decoder, DegreeDist, Encoder, InputVector};
use sc3_core::hashing::{self, hash, hash_combine, Digest, HashParams};
use sc3_core::verify::{recover, BatchItem, CheckBatch, CostModel};

fn params_pool() -> Vec<HashParams> {
    vec![
        HashParams::from_parts(5, 11, 2).unwrap(),
        HashParams::for_modulus(1021, 31, 3).unwrap(),
        hashing::gen_params(31, 62, 11).unwrap(),
    ]
}

/// Reduce an exact big-integer sum into `[0, q)`.
fn bigint_residue(value: &BigInt, q: u64) -> u64 {
    use num_bigint::Sign;
    let q_big = BigInt::from(q);
    let m = ((value % &q_big) + &q_big) % &q_big;
    let (sign, digits) = m.to_u64_digits();
    match sign {
        Sign::NoSign => 0,
        Sign::Plus => digits[0],
        Sign::Minus => unreachable!("residue is canonical"),
    }
}

proptest! {
    /// hash(Σ c_i a_i) == hash_combine([hash(a_i)], [c_i]) with the sum
    /// evaluated exactly over the integers.
    #[test]
    fn hash_homomorphism(
        pairs in prop::collection::vec((any::<u64>(), any::<bool>(), any::<u64>(), any::<bool>()), 1..=64),
        params_idx in 0usize..3,
    ) {
        let params = params_pool()[params_idx];
        let mut exact = BigInt::from(0);
        let mut digests: Vec<Digest> = Vec::new();
        let mut coeffs: Vec<i128> = Vec::new();
        for &(a_mag, a_neg, c_mag, c_neg) in &pairs {
            let a = if a_neg { -(a_mag as i128) } else { a_mag as i128 };
            let c = if c_neg { -(c_mag as i128) } else { c_mag as i128 };
            exact += BigInt::from(a) * BigInt::from(c);
            digests.push(hash(a, &params));
            coeffs.push(c);
        }
        let combined = hash_combine(&digests, &coeffs, &params).unwrap();
        let direct = hashing::hash_residue(bigint_residue(&exact, params.q), &params);
        prop_assert_eq!(combined, direct);
    }

    /// hash is q-periodic for arbitrary signed inputs.
    #[test]
    fn hash_periodicity(a in any::<i64>(), k in -4i128..=4, params_idx in 0usize..3) {
        let params = params_pool()[params_idx];
        let shifted = a as i128 + k * params.q as i128;
        prop_assert_eq!(hash(a as i128, &params), hash(shifted, &params));
    }

    /// Any full-rank prefix of the packet stream decodes to exactly A·x.
    #[test]
    fn fountain_roundtrip(
        rows in 1usize..=64,
        cols in 1usize..=64,
        q_idx in 0usize..3,
        seed in any::<u64>(),
        soliton in any::<bool>(),
    ) {
        let q = [11u64, 1021, (1 << 31) - 1][q_idx];
        let matrix = DataMatrix::random(rows, cols, q, seed);
        let x = InputVector::random(cols, q, seed ^ 0xABCD);
        let dist = if soliton { DegreeDist::default() } else { DegreeDist::DenseUniform };
        let mut encoder = Encoder::new(rows, &dist, seed ^ 0x1234);
        let mut decoder = Decoder::new(rows, q);
        let mut drawn = 0;
        while !decoder.is_complete() {
            let packet = encoder.encode_next(&matrix);
            let value = compute(&packet, &x).unwrap();
            decoder.feed(&packet.gamma, value).unwrap();
            drawn += 1;
            prop_assert!(drawn < 40 * rows + 1000, "rank is not converging");
        }
        // direct oracle, no shared code with the decoder
        let expected: Vec<u64> = (0..rows)
            .map(|i| {
                matrix
                    .row(i)
                    .iter()
                    .zip(x.entries())
                    .fold(0u128, |acc, (&a, &b)| (acc + a as u128 * b as u128) % q as u128)
                    as u64
            })
            .collect();
        prop_assert_eq!(decoder.solve().unwrap(), expected);
    }

    /// Recovery always partitions the batch, and with a 31-bit field the
    /// corrupted side matches the ground truth.
    #[test]
    fn recovery_partition_and_ground_truth(
        z in 1usize..=32,
        rho in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let params = HashParams::for_modulus((1 << 31) - 1, 62, 5).unwrap();
        let cost = CostModel::schoolbook(&params);
        let q = params.q;
        let mut rng = rand::SeedableRng::seed_from_u64(seed);
        let rng: &mut rand_chacha::ChaCha8Rng = &mut rng;
        use rand::Rng;
        let cols = 3usize;
        let x: Vec<u64> = (0..cols).map(|_| rng.gen_range(0..q)).collect();
        let x_digests: Vec<Digest> =
            x.iter().map(|&v| hashing::hash_residue(v, &params)).collect();
        let payloads: Vec<Vec<u64>> =
            (0..z).map(|_| (0..cols).map(|_| rng.gen_range(0..q)).collect()).collect();
        let honest: Vec<u64> = payloads
            .iter()
            .map(|p| {
                p.iter().zip(&x).fold(0u64, |acc, (&a, &b)| (acc + hashing::mul_mod(a, b, q)) % q)
            })
            .collect();
        let (reported, truth) =
            corrupt_batch(&honest, &AttackPattern::random_additive(rho), q, rng).unwrap();
        let items: Vec<BatchItem<'_>> = payloads
            .iter()
            .enumerate()
            .map(|(i, p)| BatchItem { id: i as u64, payload: p, reported: reported[i] })
            .collect();
        let batch = CheckBatch { worker_id: 0, items, x_digests: &x_digests };
        let rec = recover(&batch, &params, &cost, rng);
        // partition
        let union: std::collections::BTreeSet<u64> =
            rec.verified_ids.union(&rec.corrupted_ids).copied().collect();
        let all: std::collections::BTreeSet<u64> = (0..z as u64).collect();
        prop_assert_eq!(union, all);
        prop_assert!(rec.verified_ids.is_disjoint(&rec.corrupted_ids));
        // ground truth (miss probability ~ checks/2^31 per case)
        let truth_ids: std::collections::BTreeSet<u64> =
            truth.iter().map(|&i| i as u64).collect();
        prop_assert_eq!(rec.corrupted_ids, truth_ids);
    }
}
