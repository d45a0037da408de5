//! Deterministic seed derivation for independent RNG streams.
//!
//! Every stochastic component (encoder, per-worker delay draws, per-worker
//! attack decisions, check coefficients, ...) owns its own stream derived
//! from a base seed and a tag path. Keeping the streams separate is what
//! makes runs comparable across protocols and sweep points: changing the
//! corruption probability must not perturb the delay draws.

/// One round of the splitmix64 output function.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `base` and a tag path.
pub fn mix(base: u64, parts: &[u64]) -> u64 {
    let mut state = splitmix64(base);
    for &part in parts {
        state = splitmix64(state ^ splitmix64(part));
    }
    state
}
