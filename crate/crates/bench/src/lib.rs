//! Shared fixtures for the criterion benches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sc3_core::hashing::{hash_residue, mul_mod, Digest, HashParams};

/// An owned check-batch fixture: payloads, honest reported values, and the
/// digests of `x`, all over the given parameters.
pub struct BatchFixture {
    pub params: HashParams,
    pub payloads: Vec<Vec<u64>>,
    pub reported: Vec<u64>,
    pub x_digests: Vec<Digest>,
}

impl BatchFixture {
    pub fn honest(z: usize, cols: usize, params: HashParams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = params.q;
        let x: Vec<u64> = (0..cols).map(|_| rng.gen_range(0..q)).collect();
        let x_digests = x.iter().map(|&v| hash_residue(v, &params)).collect();
        let payloads: Vec<Vec<u64>> =
            (0..z).map(|_| (0..cols).map(|_| rng.gen_range(0..q)).collect()).collect();
        let reported = payloads
            .iter()
            .map(|p| p.iter().zip(&x).fold(0u64, |acc, (&a, &b)| (acc + mul_mod(a, b, q)) % q))
            .collect();
        BatchFixture { params, payloads, reported, x_digests }
    }

    pub fn batch(&self) -> sc3_core::verify::CheckBatch<'_> {
        sc3_core::verify::CheckBatch {
            worker_id: 0,
            items: self
                .payloads
                .iter()
                .enumerate()
                .map(|(i, p)| sc3_core::verify::BatchItem {
                    id: i as u64,
                    payload: p,
                    reported: self.reported[i],
                })
                .collect(),
            x_digests: &self.x_digests,
        }
    }
}
