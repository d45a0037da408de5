//! Secure coded cooperative computation (SC³).
//!
//! A master device offloads a matrix–vector product `A·x` over a prime field
//! to a fleet of heterogeneous workers by streaming rateless-coded rows.
//! Workers may straggle (tolerated by the code) or be Byzantine (tolerated by
//! homomorphic-hash integrity checks). The crate provides:
//!
//! - [`hashing`]: prime-order-subgroup homomorphic hash and parameter search,
//! - [`fountain`]: rateless row encoder, worker-side computation, and an
//!   incremental Gaussian-elimination decoder over `F_q`,
//! - [`verify`]: light- and heavy-weight integrity checks, checker selection,
//!   two-phase detection, and binary-search recovery of corrupted packets,
//! - [`adversary`]: attack patterns used by malicious workers,
//! - [`engine`]: a deterministic discrete-event simulation of the offloading
//!   protocol plus HW-only and unsecured baselines,
//! - [`analysis`]: closed-form detection probabilities and delay bounds,
//! - [`experiment`]: config-driven experiment runner with CSV output.

pub mod adversary;
pub mod analysis;
pub mod engine;
pub mod experiment;
pub mod fountain;
pub mod hashing;
pub mod seed;
pub mod verify;

pub use adversary::{corrupt_batch, AttackKind, AttackPattern, DeltaPolicy};
pub use analysis::{FleetSpec, FleetWorker};
pub use engine::{
    simulate_hw_only, simulate_lower_bound, simulate_sc3, Protocol, RunResult, SimConfig,
    WorkerProfile,
};
pub use fountain::{
    compute, decode, CodedPacket, DataMatrix, Decoder, DegreeDist, Encoder, InputVector,
};
pub use hashing::{gen_params, hash, hash_combine, Digest, HashParams};
pub use verify::{
    choose_checker, detect_two_phase, hw_check, lw_check, multiround_lw, recover, BatchItem,
    CheckBatch, CheckOutcome, CheckerChoice, CostModel, DetectionVerdict, RecoveryOutcome,
};
