//! Integrity checks for batches of worker results.
//!
//! A batch of `Z` reported values is checked by comparing two digests:
//! `alpha`, the hash of a random linear combination of the reported values,
//! and `beta`, the same combination reconstructed on the master side from the
//! packet payloads and the precomputed digests of `x`. Honest batches always
//! agree; corrupted batches disagree unless the random coefficients happen to
//! cancel the injected offsets.
//!
//! The light-weight check (LW) draws coefficients from `{-1, +1}` and costs a
//! handful of additions per item; the heavy-weight check (HW) draws from the
//! full field `[0, q)` and misses with probability only `1/q`. Running LW for
//! `⌈log₂ q⌉` independent rounds matches HW's detection probability, and is
//! cheaper once the batch is large enough — `choose_checker` encodes that
//! trade-off. On top of the checkers sit the two-phase detection verdict and
//! binary-search recovery of individual corrupted packets.

use rand::Rng;
use std::collections::BTreeSet;

use crate::hashing::{self, Digest, HashParams};

/// Coefficient scheme of a checker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientScheme {
    /// Coefficients uniform over `{-1, +1}`.
    Lw,
    /// Coefficients uniform over `[0, q)`.
    Hw,
}

/// One reported result plus the payload it claims to be computed from.
#[derive(Debug, Clone, Copy)]
pub struct BatchItem<'a> {
    pub id: u64,
    pub payload: &'a [u64],
    pub reported: u64,
}

/// A worker's batch of results awaiting a check.
#[derive(Debug, Clone)]
pub struct CheckBatch<'a> {
    pub worker_id: usize,
    pub items: Vec<BatchItem<'a>>,
    /// Precomputed `hash(x_j)` digests, one per column.
    pub x_digests: &'a [Digest],
}

/// Result of one check invocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckOutcome {
    pub detected: bool,
    pub alpha: Digest,
    pub beta: Digest,
    pub rounds_used: u32,
}

/// Unit costs of a multiplication in the digest field and the exponent
/// field. Defaults model schoolbook multiplication as (bit length)².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub unit_cost_r: f64,
    pub unit_cost_phi: f64,
}

impl CostModel {
    pub fn schoolbook(params: &HashParams) -> Self {
        let rb = params.r_bits() as f64;
        let qb = params.q_bits() as f64;
        CostModel { unit_cost_r: rb * rb, unit_cost_phi: qb * qb }
    }

    pub fn ratio(&self) -> f64 {
        assert!(
            self.unit_cost_r > 0.0 && self.unit_cost_phi > 0.0,
            "cost model constants must be positive"
        );
        self.unit_cost_r / self.unit_cost_phi
    }
}

/// Which checker the second detection phase should run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckerChoice {
    MultiRoundLw { rounds: u32 },
    Hw,
}

/// Verdict of the two-phase detection module on one batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionVerdict {
    /// Phase 1 fired: treat the whole batch as corrupted and drop the worker.
    DiscardAll,
    /// Neither phase fired: every packet in the batch is verified.
    AllVerified,
    /// Only phase 2 fired: a few packets are corrupted; run recovery.
    NeedsRecovery,
}

/// Output of binary-search recovery: a partition of the batch ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecoveryOutcome {
    pub verified_ids: BTreeSet<u64>,
    pub corrupted_ids: BTreeSet<u64>,
    pub checks_performed: u32,
}

fn check_items(
    items: &[BatchItem<'_>],
    x_digests: &[Digest],
    scheme: CoefficientScheme,
    params: &HashParams,
    rng: &mut impl Rng,
) -> CheckOutcome {
    assert!(!items.is_empty(), "integrity check on an empty batch");
    let q = params.q;
    let cols = x_digests.len();
    let mut alpha_sum = 0u64;
    let mut exponents = vec![0u64; cols];
    match scheme {
        CoefficientScheme::Lw => {
            for item in items {
                debug_assert_eq!(item.payload.len(), cols);
                let y = item.reported % q;
                if rng.gen::<bool>() {
                    alpha_sum = (alpha_sum + y) % q;
                    for (e, &p) in exponents.iter_mut().zip(item.payload) {
                        *e = (*e + p) % q;
                    }
                } else {
                    // coefficient -1, realized as the canonical residue q-1
                    alpha_sum = (alpha_sum + q - y) % q;
                    for (e, &p) in exponents.iter_mut().zip(item.payload) {
                        *e = (*e + q - p % q) % q;
                    }
                }
            }
        }
        CoefficientScheme::Hw => {
            for item in items {
                debug_assert_eq!(item.payload.len(), cols);
                let c = rng.gen_range(0..q);
                alpha_sum = (alpha_sum + hashing::mul_mod(c, item.reported % q, q)) % q;
                for (e, &p) in exponents.iter_mut().zip(item.payload) {
                    *e = (*e + hashing::mul_mod(c, p % q, q)) % q;
                }
            }
        }
    }
    let alpha = hashing::hash_residue(alpha_sum, params);
    let beta = hashing::hash_combine_residues(x_digests, &exponents, params)
        .expect("x_digests nonempty and lengths agree");
    CheckOutcome { detected: alpha != beta, alpha, beta, rounds_used: 1 }
}

fn multiround_items(
    items: &[BatchItem<'_>],
    x_digests: &[Digest],
    rounds: u32,
    params: &HashParams,
    rng: &mut impl Rng,
) -> CheckOutcome {
    assert!(rounds >= 1);
    let mut last = check_items(items, x_digests, CoefficientScheme::Lw, params, rng);
    let mut used = 1;
    while !last.detected && used < rounds {
        last = check_items(items, x_digests, CoefficientScheme::Lw, params, rng);
        used += 1;
    }
    CheckOutcome { rounds_used: used, ..last }
}

/// Light-weight check: one round with ±1 coefficients.
pub fn lw_check(batch: &CheckBatch<'_>, params: &HashParams, rng: &mut impl Rng) -> CheckOutcome {
    check_items(&batch.items, batch.x_digests, CoefficientScheme::Lw, params, rng)
}

/// Heavy-weight check: one round with coefficients from the full field.
pub fn hw_check(batch: &CheckBatch<'_>, params: &HashParams, rng: &mut impl Rng) -> CheckOutcome {
    check_items(&batch.items, batch.x_digests, CoefficientScheme::Hw, params, rng)
}

/// LW repeated with fresh independent coefficients, stopping at the first
/// detection. `rounds_used` reports how many rounds actually ran.
pub fn multiround_lw(
    batch: &CheckBatch<'_>,
    rounds: u32,
    params: &HashParams,
    rng: &mut impl Rng,
) -> CheckOutcome {
    multiround_items(&batch.items, batch.x_digests, rounds, params, rng)
}

/// Rounds that make multi-round LW match HW's detection probability.
pub fn equivalent_rounds(params: &HashParams) -> u32 {
    (params.q as f64).log2().ceil() as u32
}

/// Pick the cheaper checker for a batch of `batch_size` results:
/// `⌈log₂ q⌉`-round LW once the batch is at least
/// `(unit_cost_r / unit_cost_phi) · (log₂ q)²` packets (inclusive), HW below.
pub fn choose_checker(
    batch_size: usize,
    cost_model: &CostModel,
    params: &HashParams,
) -> CheckerChoice {
    let log2q = (params.q as f64).log2();
    let threshold = cost_model.ratio() * log2q * log2q;
    if batch_size as f64 >= threshold {
        CheckerChoice::MultiRoundLw { rounds: equivalent_rounds(params) }
    } else {
        CheckerChoice::Hw
    }
}

fn run_phase2(
    items: &[BatchItem<'_>],
    x_digests: &[Digest],
    params: &HashParams,
    cost_model: &CostModel,
    rng: &mut impl Rng,
) -> CheckOutcome {
    match choose_checker(items.len(), cost_model, params) {
        CheckerChoice::MultiRoundLw { rounds } => {
            multiround_items(items, x_digests, rounds, params, rng)
        }
        CheckerChoice::Hw => check_items(items, x_digests, CoefficientScheme::Hw, params, rng),
    }
}

/// Two-phase detection: a single LW screen whose detection implies most of
/// the batch is corrupted (discard it all), then the selected phase-2
/// checker to catch what LW missed (recover if it fires).
pub fn detect_two_phase(
    batch: &CheckBatch<'_>,
    params: &HashParams,
    cost_model: &CostModel,
    rng: &mut impl Rng,
) -> DetectionVerdict {
    if lw_check(batch, params, rng).detected {
        return DetectionVerdict::DiscardAll;
    }
    if run_phase2(&batch.items, batch.x_digests, params, cost_model, rng).detected {
        DetectionVerdict::NeedsRecovery
    } else {
        DetectionVerdict::AllVerified
    }
}

/// Binary-search recovery: check a subset with the phase-2 checker; a pass
/// verifies the subset wholesale, a failing singleton is corrupted, anything
/// else splits in half (by arrival order, extra element left) and recurses
/// into both halves. Tolerates clean input — the root check just passes.
pub fn recover(
    batch: &CheckBatch<'_>,
    params: &HashParams,
    cost_model: &CostModel,
    rng: &mut impl Rng,
) -> RecoveryOutcome {
    assert!(!batch.items.is_empty(), "recovery on an empty batch");
    let mut verified_ids = BTreeSet::new();
    let mut corrupted_ids = BTreeSet::new();
    let mut checks_performed = 0u32;
    // DFS, left half first, so coefficient draws are reproducible
    let mut stack = vec![(0usize, batch.items.len())];
    while let Some((lo, hi)) = stack.pop() {
        let sub = &batch.items[lo..hi];
        checks_performed += 1;
        let outcome = run_phase2(sub, batch.x_digests, params, cost_model, rng);
        if !outcome.detected {
            verified_ids.extend(sub.iter().map(|item| item.id));
        } else if sub.len() == 1 {
            corrupted_ids.insert(sub[0].id);
        } else {
            let mid = lo + (hi - lo + 1) / 2;
            stack.push((mid, hi));
            stack.push((lo, mid));
        }
    }
    RecoveryOutcome { verified_ids, corrupted_ids, checks_performed }
}
