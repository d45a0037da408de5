//! Closed-form detection probabilities and delay bounds.
//!
//! These formulas predict what the simulation engine measures: the LW
//! detection probability of the symmetric cancellation attack, the HW miss
//! rate, per-worker packet shares under rate-proportional offloading, the
//! completion-delay upper bound of the full protocol, the HW-only baseline
//! delay, and the lower bound on the gap between the two.

use statrs::function::gamma::ln_gamma;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("corrupted count must be a positive even integer, got {0}")]
    BadCorruptedCount(u64),
    #[error("fleet has no honest workers")]
    NoHonestWorkers,
    #[error("invalid fleet: {0}")]
    InvalidFleet(String),
    #[error("unknown worker id {0}")]
    UnknownWorker(usize),
}

/// One worker as the analysis layer sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetWorker {
    pub id: usize,
    /// Mean per-packet compute time, seconds.
    pub mean_compute: f64,
    pub malicious: bool,
}

/// Fleet description plus task parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetSpec {
    pub workers: Vec<FleetWorker>,
    pub rows: u64,
    /// Coding overhead as a packet count.
    pub epsilon: u64,
    /// Per-packet corruption probability of a malicious worker.
    pub rho_c: f64,
}

impl FleetSpec {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.workers.is_empty() {
            return Err(AnalysisError::InvalidFleet("empty fleet".into()));
        }
        if let Some(w) = self.workers.iter().find(|w| !(w.mean_compute > 0.0)) {
            return Err(AnalysisError::InvalidFleet(format!(
                "worker {} has nonpositive mean compute time",
                w.id
            )));
        }
        if !(0.0..=1.0).contains(&self.rho_c) {
            return Err(AnalysisError::InvalidFleet(format!("rho_c {} outside [0,1]", self.rho_c)));
        }
        Ok(())
    }

    /// Packets the master expects in one collection period.
    pub fn target(&self) -> f64 {
        (self.rows + self.epsilon) as f64
    }

    /// `Σ_n 1/E[β_n]` over all workers.
    pub fn total_rate(&self) -> f64 {
        self.workers.iter().map(|w| 1.0 / w.mean_compute).sum()
    }

    /// `Σ_n 1/E[β_n]` over honest workers only.
    pub fn honest_rate(&self) -> f64 {
        self.workers.iter().filter(|w| !w.malicious).map(|w| 1.0 / w.mean_compute).sum()
    }

    fn require_honest(&self) -> Result<(), AnalysisError> {
        self.validate()?;
        if self.workers.iter().all(|w| w.malicious) {
            return Err(AnalysisError::NoHonestWorkers);
        }
        Ok(())
    }
}

/// Miss factor of the symmetric attack on a real-valued corrupted count:
/// `m! / (2^m ((m/2)!)^2)` via the log-gamma extension, which interpolates
/// the even-count formula smoothly down to 0 at m = 0. The delay bounds
/// evaluate this at the expected corrupted count `z_n ρ_c`, which is rarely
/// an even integer.
fn lw_symmetric_continuous(m: f64) -> f64 {
    if m <= 0.0 {
        return 0.0;
    }
    let log_miss = ln_gamma(m + 1.0) - m * std::f64::consts::LN_2 - 2.0 * ln_gamma(m / 2.0 + 1.0);
    (1.0 - log_miss.exp()).clamp(0.0, 1.0)
}

/// LW detection probability of the symmetric attack with `z_tilde` corrupted
/// packets: `1 - z̃! / (2^z̃ ((z̃/2)!)²)`.
pub fn p_detect_lw_symmetric(z_tilde: u64) -> Result<f64, AnalysisError> {
    if z_tilde == 0 || z_tilde % 2 != 0 {
        return Err(AnalysisError::BadCorruptedCount(z_tilde));
    }
    Ok(lw_symmetric_continuous(z_tilde as f64))
}

/// HW detection probability for any attack pattern: `1 - 1/q`.
pub fn p_detect_hw(q: u64) -> f64 {
    assert!(q >= 2, "q must be at least 2");
    1.0 - 1.0 / q as f64
}

/// Expected number of packets worker `id` delivers in one period:
/// `(R+ε) / (E[β_n] · Σ_m 1/E[β_m])`. Shares sum to `R+ε`.
pub fn packet_share(fleet: &FleetSpec, id: usize) -> Result<f64, AnalysisError> {
    fleet.validate()?;
    let worker =
        fleet.workers.iter().find(|w| w.id == id).ok_or(AnalysisError::UnknownWorker(id))?;
    Ok(fleet.target() / (worker.mean_compute * fleet.total_rate()))
}

/// Per-malicious-worker detection probability `P_n` evaluated at the
/// expected corrupted count `z_n · ρ_c`.
fn per_worker_p(fleet: &FleetSpec) -> Vec<(usize, f64, f64)> {
    // (index into workers, z_n, P_n) for malicious workers, in fleet order
    let total_rate = fleet.total_rate();
    fleet
        .workers
        .iter()
        .enumerate()
        .filter(|(_, w)| w.malicious)
        .map(|(i, w)| {
            let z = fleet.target() / (w.mean_compute * total_rate);
            (i, z, lw_symmetric_continuous(z * fleet.rho_c))
        })
        .collect()
}

/// Expected packets from malicious workers that the first collection period
/// fails to verify: `Σ_{n mal} z_n (P_n + ρ_c (1 - P_n))`.
pub fn unverified_bound(fleet: &FleetSpec) -> Result<f64, AnalysisError> {
    fleet.validate()?;
    Ok(per_worker_p(fleet)
        .iter()
        .map(|&(_, z, p)| z * (p + fleet.rho_c * (1.0 - p)))
        .sum())
}

/// Upper bound on the protocol's mean completion delay: the all-worker
/// period plus the worst case of re-fetching every unverified packet from
/// honest workers alone.
pub fn upper_bound_sc3(fleet: &FleetSpec) -> Result<f64, AnalysisError> {
    fleet.require_honest()?;
    let first = fleet.target() / fleet.total_rate();
    let second = unverified_bound(fleet)? / fleet.honest_rate();
    Ok(first + second)
}

/// Completion delay of the HW-only baseline, which ends up using honest
/// workers exclusively: `(R+ε) / Σ_{honest} 1/E[β_n]`.
pub fn t_hw_only(fleet: &FleetSpec) -> Result<f64, AnalysisError> {
    fleet.require_honest()?;
    Ok(fleet.target() / fleet.honest_rate())
}

/// Lower bound on `T_hw_only - E[T_sc3]` with the per-worker detection
/// probabilities pinned by the caller (one per malicious worker, fleet
/// order). Exposed so trend tests can hold `P` fixed while varying `R+ε`.
pub fn gap_lower_bound_with_p(fleet: &FleetSpec, p_values: &[f64]) -> Result<f64, AnalysisError> {
    fleet.require_honest()?;
    let malicious: Vec<&FleetWorker> = fleet.workers.iter().filter(|w| w.malicious).collect();
    if malicious.len() != p_values.len() {
        return Err(AnalysisError::InvalidFleet(format!(
            "{} detection probabilities for {} malicious workers",
            p_values.len(),
            malicious.len()
        )));
    }
    let weighted: f64 = malicious
        .iter()
        .zip(p_values)
        .map(|(w, &p)| (1.0 - p) / w.mean_compute)
        .sum();
    Ok(fleet.target() * (1.0 - fleet.rho_c) * weighted / (fleet.total_rate() * fleet.honest_rate()))
}

/// Lower bound on the gap between HW-only and the protocol's mean delay:
/// `(R+ε)(1-ρ_c) Σ_{mal} (1-P_n)/E[β_n] / (Σ_all 1/E · Σ_honest 1/E)`.
pub fn gap_lower_bound(fleet: &FleetSpec) -> Result<f64, AnalysisError> {
    let p_values: Vec<f64> = per_worker_p(fleet).iter().map(|&(_, _, p)| p).collect();
    gap_lower_bound_with_p(fleet, &p_values)
}
