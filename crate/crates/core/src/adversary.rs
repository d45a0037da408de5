//! Byzantine worker behavior.
//!
//! A malicious worker perturbs the values it reports; the downlink packets
//! themselves are never altered. Structured patterns (pairwise and triple
//! cancellation) exist to exercise the detection-probability results; the
//! per-packet Bernoulli pattern is the default attack model in simulations.

use rand::Rng;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AttackError {
    #[error("pattern invalid for batch of {batch}: {reason}")]
    PatternInvalid { batch: usize, reason: String },
    #[error("corruption probability {0} outside [0, 1]")]
    BadProbability(String),
}

/// How corruption offsets are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaPolicy {
    /// Uniform over `[1, q-1]`.
    UniformNonzero,
    /// A fixed nonzero offset (deterministic fixtures).
    Fixed(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttackKind {
    /// Honest behavior.
    None,
    /// Add `δ` to half of `corrupted` randomly chosen values and `q-δ` to the
    /// other half, so the injected offsets cancel mod q. `corrupted` is even.
    SymmetricGeneral { corrupted: usize },
    /// Add `δ` to two randomly chosen values and subtract `2δ` from a third.
    Triple,
    /// Corrupt each value independently with probability `rho_c` by adding a
    /// fresh nonzero offset.
    RandomAdditive { rho_c: f64 },
    /// Corrupt each value independently with probability `rho_c` by adding
    /// `±δ` (random sign) with one shared magnitude. The hardest per-packet
    /// attack for the light-weight check: same-magnitude offsets are the
    /// only ones its ±1 coefficients can cancel.
    SymmetricAdditive { rho_c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackPattern {
    pub kind: AttackKind,
    pub delta: DeltaPolicy,
}

impl AttackPattern {
    pub fn none() -> Self {
        AttackPattern { kind: AttackKind::None, delta: DeltaPolicy::UniformNonzero }
    }

    pub fn symmetric(corrupted: usize) -> Self {
        AttackPattern {
            kind: AttackKind::SymmetricGeneral { corrupted },
            delta: DeltaPolicy::UniformNonzero,
        }
    }

    pub fn triple() -> Self {
        AttackPattern { kind: AttackKind::Triple, delta: DeltaPolicy::UniformNonzero }
    }

    pub fn random_additive(rho_c: f64) -> Self {
        AttackPattern {
            kind: AttackKind::RandomAdditive { rho_c },
            delta: DeltaPolicy::UniformNonzero,
        }
    }

    pub fn symmetric_additive(rho_c: f64) -> Self {
        AttackPattern {
            kind: AttackKind::SymmetricAdditive { rho_c },
            delta: DeltaPolicy::UniformNonzero,
        }
    }

    pub fn with_delta(mut self, delta: DeltaPolicy) -> Self {
        self.delta = delta;
        self
    }

    fn sample_delta(&self, q: u64, rng: &mut impl Rng) -> u64 {
        match self.delta {
            DeltaPolicy::UniformNonzero => rng.gen_range(1..q),
            DeltaPolicy::Fixed(d) => {
                assert!(d >= 1 && d < q, "fixed delta must be a nonzero residue");
                d
            }
        }
    }
}

/// Apply a pattern to a batch of reported values.
///
/// Returns the corrupted values together with the ground-truth set of
/// positions whose value actually changed mod q.
pub fn corrupt_batch(
    values: &[u64],
    pattern: &AttackPattern,
    q: u64,
    rng: &mut impl Rng,
) -> Result<(Vec<u64>, BTreeSet<usize>), AttackError> {
    let mut out = values.to_vec();
    match pattern.kind {
        AttackKind::None => {}
        AttackKind::SymmetricGeneral { corrupted } => {
            if corrupted == 0 || corrupted % 2 != 0 {
                return Err(AttackError::PatternInvalid {
                    batch: values.len(),
                    reason: format!("corrupted count {corrupted} must be even and positive"),
                });
            }
            if corrupted > values.len() {
                return Err(AttackError::PatternInvalid {
                    batch: values.len(),
                    reason: format!("corrupted count {corrupted} exceeds batch"),
                });
            }
            let delta = pattern.sample_delta(q, rng);
            let positions = rand::seq::index::sample(rng, values.len(), corrupted);
            for (k, pos) in positions.iter().enumerate() {
                let offset = if k < corrupted / 2 { delta } else { q - delta };
                out[pos] = (out[pos] + offset) % q;
            }
        }
        AttackKind::Triple => {
            if values.len() < 3 {
                return Err(AttackError::PatternInvalid {
                    batch: values.len(),
                    reason: "triple pattern needs at least 3 values".into(),
                });
            }
            let delta = pattern.sample_delta(q, rng);
            let positions = rand::seq::index::sample(rng, values.len(), 3);
            let minus_two = (2 * (q - delta)) % q;
            for (k, pos) in positions.iter().enumerate() {
                let offset = if k < 2 { delta } else { minus_two };
                out[pos] = (out[pos] + offset) % q;
            }
        }
        AttackKind::RandomAdditive { rho_c } => {
            if !(0.0..=1.0).contains(&rho_c) {
                return Err(AttackError::BadProbability(format!("{rho_c}")));
            }
            for v in out.iter_mut() {
                if rng.gen::<f64>() < rho_c {
                    let delta = pattern.sample_delta(q, rng);
                    *v = (*v + delta) % q;
                }
            }
        }
        AttackKind::SymmetricAdditive { rho_c } => {
            if !(0.0..=1.0).contains(&rho_c) {
                return Err(AttackError::BadProbability(format!("{rho_c}")));
            }
            let delta = pattern.sample_delta(q, rng);
            for v in out.iter_mut() {
                if rng.gen::<f64>() < rho_c {
                    let offset = if rng.gen::<bool>() { delta } else { q - delta };
                    *v = (*v + offset) % q;
                }
            }
        }
    }
    let corrupted_ids: BTreeSet<usize> =
        values.iter().zip(&out).enumerate().filter(|(_, (a, b))| a != b).map(|(i, _)| i).collect();
    Ok((out, corrupted_ids))
}
