//! Deterministic discrete-event simulation of coded offloading.
//!
//! One master streams coded packets to `N` workers, pipelining per worker on
//! a running estimate of its compute time (a packet goes out when the
//! estimate for the previous one elapses or its result returns, whichever is
//! first). Results accumulate until `R+ε-V` have arrived collectively, then
//! the integrity checks sweep the per-worker batches: the full protocol runs
//! two-phase detection with binary-search recovery, the HW-only baseline
//! discards everything a detected worker ever sent, and the unsecured lower
//! bound accepts results blindly.
//!
//! A run is strictly single-threaded and reproducible: every stochastic
//! component draws from its own seeded stream, so changing the attack
//! parameters never perturbs the delay draws.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::adversary::{AttackKind, AttackPattern, DeltaPolicy};
use crate::fountain::{compute, CodedPacket, DataMatrix, DecodeError, Decoder, DegreeDist, Encoder, InputVector};
use crate::hashing::{hash_residue, Digest, HashParams};
use crate::seed;
use crate::verify::{
    detect_two_phase, hw_check, recover, BatchItem, CheckBatch, CostModel, DetectionVerdict,
};

const STREAM_ENCODER: u64 = 1;
const STREAM_DATA: u64 = 2;
const STREAM_INPUT: u64 = 3;
const STREAM_CHECK: u64 = 4;
const STREAM_DELAY: u64 = 5;
const STREAM_ATTACK: u64 = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("all workers were removed before decoding completed")]
    AllWorkersRemoved,
    #[error("packet budget exhausted; simulation is not converging")]
    Runaway,
    #[error("packet conservation violated: sent={sent} verified={verified} discarded={discarded} in_flight={in_flight}")]
    ConservationViolated { sent: u64, verified: u64, discarded: u64, in_flight: u64 },
}

/// Static description of one worker.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerProfile {
    pub id: usize,
    pub malicious: bool,
    /// Attack behavior; ignored unless `malicious`.
    pub pattern: AttackPattern,
    /// Shift of the shifted-exponential compute time, seconds.
    pub compute_shift: f64,
    /// Rate of the exponential part, 1/seconds. Mean is `shift + 1/rate`.
    pub compute_rate: f64,
    pub uplink_delay: f64,
    pub downlink_delay: f64,
}

impl WorkerProfile {
    pub fn honest(id: usize, compute_shift: f64, compute_rate: f64) -> Self {
        WorkerProfile {
            id,
            malicious: false,
            pattern: AttackPattern::none(),
            compute_shift,
            compute_rate,
            uplink_delay: 0.0,
            downlink_delay: 0.0,
        }
    }

    pub fn malicious(
        id: usize,
        compute_shift: f64,
        compute_rate: f64,
        pattern: AttackPattern,
    ) -> Self {
        WorkerProfile { malicious: true, pattern, ..WorkerProfile::honest(id, compute_shift, compute_rate) }
    }

    /// Mean per-packet compute time.
    pub fn mean_compute(&self) -> f64 {
        self.compute_shift + 1.0 / self.compute_rate
    }
}

/// Draw one shifted-exponential compute delay.
pub fn sample_compute_delay(profile: &WorkerProfile, rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.gen();
    profile.compute_shift + (-(1.0 - u).ln()) / profile.compute_rate
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    PacketArriveAtWorker,
    ComputeDone,
    ResultArriveAtMaster,
    DispatchTimer,
    PeriodBoundary,
}

impl EventKind {
    fn rank(self) -> u8 {
        match self {
            EventKind::PacketArriveAtWorker => 0,
            EventKind::ComputeDone => 1,
            EventKind::ResultArriveAtMaster => 2,
            EventKind::DispatchTimer => 3,
            EventKind::PeriodBoundary => 4,
        }
    }
}

/// Queue entry. For `DispatchTimer` the packet field carries the per-worker
/// send sequence the timer was armed for; otherwise it is the packet id.
#[derive(Debug, Clone, Copy)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub worker_id: usize,
    pub packet_id: u64,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.kind.rank().cmp(&other.kind.rank()))
            .then(self.worker_id.cmp(&other.worker_id))
            .then(self.packet_id.cmp(&other.packet_id))
    }
}

/// Master-side link state for one worker: what was sent when, what came
/// back, and the running compute-time estimate built from result ACKs.
#[derive(Debug, Clone, Default)]
pub struct DispatchState {
    pub packets_sent: u64,
    pub results_received: u64,
    pub last_send_time: f64,
    pub last_result_time: Option<f64>,
    sample_count: u64,
    sample_sum: f64,
}

impl DispatchState {
    /// Running mean of observed compute intervals, if any ACK arrived yet.
    pub fn estimate(&self) -> Option<f64> {
        (self.sample_count > 0).then(|| self.sample_sum / self.sample_count as f64)
    }

    pub fn record_send(&mut self, time: f64) {
        self.packets_sent += 1;
        self.last_send_time = time;
    }

    pub fn record_result(&mut self, time: f64, compute_interval: f64) {
        self.results_received += 1;
        self.last_result_time = Some(time);
        self.sample_count += 1;
        self.sample_sum += compute_interval;
    }

    /// When the next packet may be dispatched: immediately for a fresh link,
    /// at the result-arrival instant once the previous result is back, at
    /// `send + estimate` while it is still pending, and not at all during
    /// the bootstrap wait (one outstanding packet, no estimate yet).
    pub fn next_dispatch_time(&self, now: f64) -> Option<f64> {
        if self.packets_sent == 0 {
            return Some(now);
        }
        if self.results_received >= self.packets_sent {
            return self.last_result_time;
        }
        self.estimate().map(|est| self.last_send_time + est)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Protocol {
    Sc3,
    HwOnly,
    LowerBound,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Sc3 => "sc3",
            Protocol::HwOnly => "hw_only",
            Protocol::LowerBound => "lower_bound",
        }
    }
}

/// Full description of one simulated task.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub rows: usize,
    pub cols: usize,
    /// Coding overhead as a packet count; the collection target is `R + ε`.
    pub epsilon: usize,
    pub params: HashParams,
    pub degree: DegreeDist,
    pub workers: Vec<WorkerProfile>,
    pub cost_model: CostModel,
}

impl SimConfig {
    /// Packets the master collects before the first check sweep.
    pub fn target(&self) -> u64 {
        (self.rows + self.epsilon) as u64
    }

    fn validate(&self, protocol: Protocol) -> Result<(), EngineError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(EngineError::InvalidConfig("rows and cols must be positive".into()));
        }
        if self.workers.is_empty() {
            return Err(EngineError::InvalidConfig("at least one worker required".into()));
        }
        if !self.workers.iter().any(|w| !w.malicious) {
            return Err(EngineError::InvalidConfig("at least one honest worker required".into()));
        }
        for (i, w) in self.workers.iter().enumerate() {
            if w.id != i {
                return Err(EngineError::InvalidConfig(format!(
                    "worker ids must be contiguous from 0; position {i} has id {}",
                    w.id
                )));
            }
            let mean = w.mean_compute();
            if !(mean > 0.0) || !mean.is_finite() {
                return Err(EngineError::InvalidConfig(format!(
                    "worker {i} mean compute time must be positive and finite"
                )));
            }
            if w.compute_shift < 0.0 || !(w.compute_rate > 0.0) {
                return Err(EngineError::InvalidConfig(format!(
                    "worker {i} has invalid shifted-exponential parameters"
                )));
            }
            if w.uplink_delay < 0.0 || w.downlink_delay < 0.0 {
                return Err(EngineError::InvalidConfig(format!(
                    "worker {i} has negative transmission delay"
                )));
            }
            if w.malicious {
                let rho_c = match w.pattern.kind {
                    AttackKind::None => None,
                    AttackKind::RandomAdditive { rho_c }
                    | AttackKind::SymmetricAdditive { rho_c } => Some(rho_c),
                    _ => {
                        return Err(EngineError::InvalidConfig(format!(
                            "worker {i}: only per-packet attack patterns run in simulation; \
                             batch-shaped patterns are check-level models"
                        )));
                    }
                };
                if let Some(rho_c) = rho_c {
                    if !(0.0..=1.0).contains(&rho_c) {
                        return Err(EngineError::InvalidConfig(format!(
                            "worker {i}: corruption probability {rho_c} outside [0,1]"
                        )));
                    }
                }
            }
        }
        let _ = protocol;
        Ok(())
    }
}

/// Counters and outputs of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub protocol: Protocol,
    pub seed: u64,
    /// Clock time of the check that completed decoding (or, for the
    /// unsecured baseline, of the final required arrival).
    pub completion_time: f64,
    pub packets_sent: u64,
    pub packets_verified: u64,
    pub packets_discarded: u64,
    /// Packets in transit, queued, computing, or received-but-unchecked when
    /// the run stopped.
    pub packets_in_flight: u64,
    pub workers_removed: u64,
    /// Packets the decoder consumed to reach full rank, over the minimum.
    pub realized_overhead: Option<f64>,
    /// Ground-truth corrupted packets that were fed to the decoder.
    pub residual_corruption: u64,
    /// The decoded product, when decoding completed consistently.
    pub decoded: Option<Vec<u64>>,
}

/// The matrix/vector instance a given (config, seed) pair simulates.
/// Exposed so tests can recompute `A·x` independently.
pub fn generate_instance(cfg: &SimConfig, seed_value: u64) -> (DataMatrix, InputVector) {
    let q = cfg.params.q;
    let matrix = DataMatrix::random(cfg.rows, cfg.cols, q, seed::mix(seed_value, &[STREAM_DATA]));
    let input = InputVector::random(cfg.cols, q, seed::mix(seed_value, &[STREAM_INPUT]));
    (matrix, input)
}

pub fn simulate_sc3(cfg: &SimConfig, seed_value: u64) -> Result<RunResult, EngineError> {
    run(cfg, seed_value, Protocol::Sc3)
}

pub fn simulate_hw_only(cfg: &SimConfig, seed_value: u64) -> Result<RunResult, EngineError> {
    run(cfg, seed_value, Protocol::HwOnly)
}

pub fn simulate_lower_bound(cfg: &SimConfig, seed_value: u64) -> Result<RunResult, EngineError> {
    run(cfg, seed_value, Protocol::LowerBound)
}

struct Produced {
    packet_id: u64,
    value: u64,
    corrupted: bool,
    compute_interval: f64,
}

struct Pending {
    packet_id: u64,
    value: u64,
    corrupted: bool,
}

struct VerifiedRec {
    worker_id: usize,
    packet_id: u64,
    value: u64,
    corrupted: bool,
}

struct WorkerSim {
    profile: WorkerProfile,
    active: bool,
    queue: VecDeque<u64>,
    computing: Option<(u64, f64)>,
    outbox: VecDeque<Produced>,
    delay_rng: ChaCha8Rng,
    attack_rng: ChaCha8Rng,
    /// Offset magnitude a symmetric-additive attacker sticks to for the
    /// whole run, drawn once from its attack stream.
    run_delta: u64,
    link: DispatchState,
    pending: Vec<Pending>,
}

impl WorkerSim {
    fn produce_value(&mut self, honest: u64, q: u64) -> (u64, bool) {
        if !self.profile.malicious {
            return (honest, false);
        }
        match self.profile.pattern.kind {
            AttackKind::None => (honest, false),
            AttackKind::RandomAdditive { rho_c } => {
                if self.attack_rng.gen::<f64>() < rho_c {
                    let delta = match self.profile.pattern.delta {
                        DeltaPolicy::UniformNonzero => self.attack_rng.gen_range(1..q),
                        DeltaPolicy::Fixed(d) => d,
                    };
                    ((honest + delta) % q, true)
                } else {
                    (honest, false)
                }
            }
            AttackKind::SymmetricAdditive { rho_c } => {
                if self.attack_rng.gen::<f64>() < rho_c {
                    let magnitude = match self.profile.pattern.delta {
                        DeltaPolicy::UniformNonzero => self.run_delta,
                        DeltaPolicy::Fixed(d) => d,
                    };
                    let offset =
                        if self.attack_rng.gen::<bool>() { magnitude } else { q - magnitude };
                    ((honest + offset) % q, true)
                } else {
                    (honest, false)
                }
            }
            _ => unreachable!("rejected by config validation"),
        }
    }
}

struct Simulation<'a> {
    cfg: &'a SimConfig,
    protocol: Protocol,
    seed: u64,
    matrix: DataMatrix,
    input: InputVector,
    x_digests: Vec<Digest>,
    encoder: Encoder,
    check_rng: ChaCha8Rng,
    events: BinaryHeap<Reverse<Event>>,
    workers: Vec<WorkerSim>,
    packets: HashMap<u64, CodedPacket>,
    decoder: Decoder,
    decode_poisoned: bool,
    verified_log: Vec<VerifiedRec>,
    arrivals_total: u64,
    arrivals_since_boundary: u64,
    boundary_threshold: u64,
    boundary_scheduled: bool,
    packets_sent: u64,
    packets_discarded: u64,
    workers_removed: u64,
    completion: Option<f64>,
}

fn run(cfg: &SimConfig, seed_value: u64, protocol: Protocol) -> Result<RunResult, EngineError> {
    cfg.validate(protocol)?;
    let mut sim = Simulation::new(cfg, seed_value, protocol);
    for w in 0..sim.workers.len() {
        sim.send_packet(w, 0.0);
    }
    let packet_budget = 10_000 * cfg.target() + 100_000;
    while let Some(Reverse(event)) = sim.events.pop() {
        if sim.completion.is_some() {
            break;
        }
        sim.handle(event);
        if sim.packets_sent > packet_budget {
            return Err(EngineError::Runaway);
        }
    }
    sim.finish()
}

impl<'a> Simulation<'a> {
    fn new(cfg: &'a SimConfig, seed_value: u64, protocol: Protocol) -> Self {
        let (matrix, input) = generate_instance(cfg, seed_value);
        let params = &cfg.params;
        let x_digests: Vec<Digest> =
            input.entries().iter().map(|&v| hash_residue(v, params)).collect();
        let encoder = Encoder::new(cfg.rows, &cfg.degree, seed::mix(seed_value, &[STREAM_ENCODER]));
        let workers = cfg
            .workers
            .iter()
            .map(|profile| {
                let mut attack_rng = ChaCha8Rng::seed_from_u64(seed::mix(
                    seed_value,
                    &[STREAM_ATTACK, profile.id as u64],
                ));
                let run_delta = attack_rng.gen_range(1..cfg.params.q);
                WorkerSim {
                    profile: profile.clone(),
                    active: true,
                    queue: VecDeque::new(),
                    computing: None,
                    outbox: VecDeque::new(),
                    delay_rng: ChaCha8Rng::seed_from_u64(seed::mix(
                        seed_value,
                        &[STREAM_DELAY, profile.id as u64],
                    )),
                    attack_rng,
                    run_delta,
                    link: DispatchState::default(),
                    pending: Vec::new(),
                }
            })
            .collect();
        Simulation {
            cfg,
            protocol,
            seed: seed_value,
            matrix,
            input,
            x_digests,
            encoder,
            check_rng: ChaCha8Rng::seed_from_u64(seed::mix(seed_value, &[STREAM_CHECK])),
            events: BinaryHeap::new(),
            workers,
            packets: HashMap::new(),
            decoder: Decoder::new(cfg.rows, cfg.params.q),
            decode_poisoned: false,
            verified_log: Vec::new(),
            arrivals_total: 0,
            arrivals_since_boundary: 0,
            boundary_threshold: cfg.target(),
            boundary_scheduled: false,
            packets_sent: 0,
            packets_discarded: 0,
            workers_removed: 0,
            completion: None,
        }
    }

    fn schedule(&mut self, time: f64, kind: EventKind, worker_id: usize, packet_id: u64) {
        debug_assert!(time.is_finite());
        self.events.push(Reverse(Event { time, kind, worker_id, packet_id }));
    }

    fn send_packet(&mut self, w: usize, now: f64) {
        let packet = self.encoder.encode_next(&self.matrix);
        let id = packet.id;
        self.packets.insert(id, packet);
        self.packets_sent += 1;
        let worker = &mut self.workers[w];
        worker.link.record_send(now);
        let arrive = now + worker.profile.uplink_delay;
        let seq_of_next = worker.link.packets_sent;
        let timer = worker.link.estimate().map(|est| now + est);
        self.schedule(arrive, EventKind::PacketArriveAtWorker, w, id);
        if let Some(t) = timer {
            self.schedule(t, EventKind::DispatchTimer, w, seq_of_next);
        }
    }

    fn try_start_compute(&mut self, w: usize, now: f64) {
        let worker = &mut self.workers[w];
        if worker.computing.is_some() || worker.queue.is_empty() {
            return;
        }
        let id = worker.queue.pop_front().expect("queue nonempty");
        let interval = sample_compute_delay(&worker.profile, &mut worker.delay_rng);
        worker.computing = Some((id, interval));
        self.schedule(now + interval, EventKind::ComputeDone, w, id);
    }

    fn handle(&mut self, event: Event) {
        let t = event.time;
        let w = event.worker_id;
        match event.kind {
            EventKind::PacketArriveAtWorker => {
                if !self.workers[w].active {
                    return;
                }
                self.workers[w].queue.push_back(event.packet_id);
                self.try_start_compute(w, t);
            }
            EventKind::ComputeDone => {
                if !self.workers[w].active {
                    return;
                }
                let (id, interval) = self.workers[w].computing.take().expect("compute in flight");
                debug_assert_eq!(id, event.packet_id);
                let honest = {
                    let packet = &self.packets[&id];
                    compute(packet, &self.input).expect("dimensions fixed by config")
                };
                let q = self.cfg.params.q;
                let worker = &mut self.workers[w];
                let (value, corrupted) = worker.produce_value(honest, q);
                worker.outbox.push_back(Produced {
                    packet_id: id,
                    value,
                    corrupted,
                    compute_interval: interval,
                });
                let arrive = t + worker.profile.downlink_delay;
                self.schedule(arrive, EventKind::ResultArriveAtMaster, w, id);
                self.try_start_compute(w, t);
            }
            EventKind::ResultArriveAtMaster => {
                let produced = self.workers[w].outbox.pop_front().expect("result in flight");
                debug_assert_eq!(produced.packet_id, event.packet_id);
                self.workers[w].link.record_result(t, produced.compute_interval);
                if !self.workers[w].active {
                    // dropped silently; the packet still counts as discarded
                    self.packets.remove(&produced.packet_id);
                    self.packets_discarded += 1;
                    return;
                }
                self.arrivals_total += 1;
                match self.protocol {
                    Protocol::LowerBound => {
                        self.feed_verified(w, produced.packet_id, produced.value, produced.corrupted);
                        if self.arrivals_total >= self.cfg.target() {
                            self.completion = Some(t);
                            return;
                        }
                    }
                    Protocol::Sc3 | Protocol::HwOnly => {
                        self.workers[w].pending.push(Pending {
                            packet_id: produced.packet_id,
                            value: produced.value,
                            corrupted: produced.corrupted,
                        });
                        self.arrivals_since_boundary += 1;
                        if self.arrivals_since_boundary >= self.boundary_threshold
                            && !self.boundary_scheduled
                        {
                            self.boundary_scheduled = true;
                            self.schedule(t, EventKind::PeriodBoundary, 0, 0);
                        }
                    }
                }
                // the returned result may release the next packet
                if let Some(when) = self.workers[w].link.next_dispatch_time(t) {
                    if when <= t {
                        self.send_packet(w, t);
                    }
                }
            }
            EventKind::DispatchTimer => {
                let worker = &self.workers[w];
                if !worker.active || worker.link.packets_sent != event.packet_id {
                    return; // stale timer: the packet it was armed for is already out
                }
                self.send_packet(w, t);
            }
            EventKind::PeriodBoundary => {
                self.boundary_scheduled = false;
                self.period_sweep(t);
            }
        }
    }

    fn feed_verified(&mut self, w: usize, packet_id: u64, value: u64, corrupted: bool) {
        {
            let packet = &self.packets[&packet_id];
            match self.decoder.feed(&packet.gamma, value) {
                Ok(_) => {}
                Err(DecodeError::Inconsistent) => self.decode_poisoned = true,
                Err(e) => unreachable!("row width fixed by config: {e}"),
            }
        }
        self.verified_log.push(VerifiedRec { worker_id: w, packet_id, value, corrupted });
        // HW-only may need the gamma again to rebuild after a late detection
        if self.protocol != Protocol::HwOnly {
            self.packets.remove(&packet_id);
        }
    }

    fn period_sweep(&mut self, t: f64) {
        for w in 0..self.workers.len() {
            if self.completion.is_some() {
                return;
            }
            if !self.workers[w].active || self.workers[w].pending.is_empty() {
                continue;
            }
            match self.protocol {
                Protocol::Sc3 => self.check_worker_sc3(w, t),
                Protocol::HwOnly => self.check_worker_hw_only(w, t),
                Protocol::LowerBound => unreachable!("no check sweeps in the unsecured baseline"),
            }
        }
        if self.completion.is_none() {
            let verified = self.verified_log.len() as u64;
            self.boundary_threshold = self.cfg.target().saturating_sub(verified).max(1);
            self.arrivals_since_boundary = 0;
        }
    }

    fn check_worker_sc3(&mut self, w: usize, t: f64) {
        enum Action {
            VerifyAll,
            Discard,
            Recovered(crate::verify::RecoveryOutcome),
        }
        let action = {
            let worker = &self.workers[w];
            let items: Vec<BatchItem<'_>> = worker
                .pending
                .iter()
                .map(|p| BatchItem {
                    id: p.packet_id,
                    payload: &self.packets[&p.packet_id].payload,
                    reported: p.value,
                })
                .collect();
            let batch = CheckBatch { worker_id: w, items, x_digests: &self.x_digests };
            match detect_two_phase(&batch, &self.cfg.params, &self.cfg.cost_model, &mut self.check_rng)
            {
                DetectionVerdict::AllVerified => Action::VerifyAll,
                DetectionVerdict::DiscardAll => Action::Discard,
                DetectionVerdict::NeedsRecovery => Action::Recovered(recover(
                    &batch,
                    &self.cfg.params,
                    &self.cfg.cost_model,
                    &mut self.check_rng,
                )),
            }
        };
        let pending = std::mem::take(&mut self.workers[w].pending);
        match action {
            Action::VerifyAll => {
                for p in pending {
                    self.feed_verified(w, p.packet_id, p.value, p.corrupted);
                }
                if self.decoder.is_complete() {
                    self.completion = Some(t);
                }
            }
            Action::Discard => {
                for p in &pending {
                    self.packets.remove(&p.packet_id);
                }
                self.packets_discarded += pending.len() as u64;
                self.remove_worker(w);
            }
            Action::Recovered(rec) => {
                debug_assert_eq!(
                    rec.verified_ids.len() + rec.corrupted_ids.len(),
                    pending.len(),
                    "recovery must partition the batch"
                );
                for p in pending {
                    if rec.verified_ids.contains(&p.packet_id) {
                        self.feed_verified(w, p.packet_id, p.value, p.corrupted);
                    } else {
                        self.packets.remove(&p.packet_id);
                        self.packets_discarded += 1;
                    }
                }
                if self.decoder.is_complete() {
                    self.completion = Some(t);
                }
            }
        }
    }

    fn check_worker_hw_only(&mut self, w: usize, t: f64) {
        let detected = {
            let worker = &self.workers[w];
            let items: Vec<BatchItem<'_>> = worker
                .pending
                .iter()
                .map(|p| BatchItem {
                    id: p.packet_id,
                    payload: &self.packets[&p.packet_id].payload,
                    reported: p.value,
                })
                .collect();
            let batch = CheckBatch { worker_id: w, items, x_digests: &self.x_digests };
            hw_check(&batch, &self.cfg.params, &mut self.check_rng).detected
        };
        let pending = std::mem::take(&mut self.workers[w].pending);
        if !detected {
            for p in pending {
                self.feed_verified(w, p.packet_id, p.value, p.corrupted);
            }
            if self.decoder.is_complete() {
                self.completion = Some(t);
            }
            return;
        }
        // discard the batch and everything this worker ever got verified
        for p in &pending {
            self.packets.remove(&p.packet_id);
        }
        self.packets_discarded += pending.len() as u64;
        let before = self.verified_log.len();
        self.verified_log.retain(|rec| {
            if rec.worker_id == w {
                self.packets_discarded += 1;
                false
            } else {
                true
            }
        });
        let evicted = before - self.verified_log.len();
        self.remove_worker(w);
        if evicted > 0 {
            self.rebuild_decoder();
        }
    }

    fn rebuild_decoder(&mut self) {
        self.decoder = Decoder::new(self.cfg.rows, self.cfg.params.q);
        self.decode_poisoned = false;
        for rec in &self.verified_log {
            let packet = &self.packets[&rec.packet_id];
            match self.decoder.feed(&packet.gamma, rec.value) {
                Ok(_) => {}
                Err(DecodeError::Inconsistent) => self.decode_poisoned = true,
                Err(e) => unreachable!("row width fixed by config: {e}"),
            }
        }
    }

    fn remove_worker(&mut self, w: usize) {
        let worker = &mut self.workers[w];
        if worker.active {
            worker.active = false;
            self.workers_removed += 1;
        }
    }

    fn finish(mut self) -> Result<RunResult, EngineError> {
        let t = match self.completion {
            Some(t) => t,
            None => return Err(EngineError::AllWorkersRemoved),
        };
        let verified = self.verified_log.len() as u64;
        let residual = self.verified_log.iter().filter(|rec| rec.corrupted).count() as u64;
        let mut in_flight = 0u64;
        for worker in &self.workers {
            let unreturned = worker.link.packets_sent - worker.link.results_received;
            if worker.active {
                in_flight += unreturned + worker.pending.len() as u64;
            } else {
                // packets still in transit to or from a removed worker are lost
                self.packets_discarded += unreturned;
                in_flight += worker.pending.len() as u64;
            }
        }
        if self.packets_sent != verified + self.packets_discarded + in_flight {
            return Err(EngineError::ConservationViolated {
                sent: self.packets_sent,
                verified,
                discarded: self.packets_discarded,
                in_flight,
            });
        }
        let decoded = if !self.decode_poisoned && self.decoder.is_complete() {
            self.decoder.solve().ok()
        } else {
            None
        };
        Ok(RunResult {
            protocol: self.protocol,
            seed: self.seed,
            completion_time: t,
            packets_sent: self.packets_sent,
            packets_verified: verified,
            packets_discarded: self.packets_discarded,
            packets_in_flight: in_flight,
            workers_removed: self.workers_removed,
            realized_overhead: self.decoder.realized_overhead(),
            residual_corruption: residual,
            decoded,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashing::gen_params;

    fn test_params() -> HashParams {
        gen_params(31, 62, 99).unwrap()
    }

    fn homogeneous_config(
        n: usize,
        n_m: usize,
        rows: usize,
        rho_c: f64,
        params: HashParams,
    ) -> SimConfig {
        let workers = (0..n)
            .map(|id| {
                if id < n_m {
                    WorkerProfile::malicious(id, 1.0, 1.0, AttackPattern::random_additive(rho_c))
                } else {
                    WorkerProfile::honest(id, 1.0, 1.0)
                }
            })
            .collect();
        SimConfig {
            rows,
            cols: 4,
            epsilon: rows.div_ceil(20),
            params,
            degree: DegreeDist::DenseUniform,
            workers,
            cost_model: CostModel::schoolbook(&params),
        }
    }

    #[test]
    fn compute_delay_degenerate_rate_is_shift() {
        let profile = WorkerProfile::honest(0, 3.0, f64::INFINITY);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(sample_compute_delay(&profile, &mut rng), 3.0);
        }
    }

    #[test]
    fn compute_delay_mean_and_support() {
        let profile = WorkerProfile::honest(0, 1.0, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let d = sample_compute_delay(&profile, &mut rng);
            assert!(d >= 1.0);
            sum += d;
        }
        let mean = sum / n as f64;
        assert!((mean - 6.0).abs() < 0.05, "sample mean {mean}");
    }

    #[test]
    fn dispatch_state_rules() {
        // fresh link: immediate
        let link = DispatchState::default();
        assert_eq!(link.next_dispatch_time(5.0), Some(5.0));

        // result arrived before the estimate elapsed: dispatch at arrival
        let mut link = DispatchState::default();
        link.record_send(0.0);
        link.record_result(2.0, 2.0);
        link.record_send(2.0);
        link.record_result(3.5, 1.5);
        assert_eq!(link.next_dispatch_time(3.5), Some(3.5));

        // result still pending: dispatch when the estimate elapses
        link.record_send(4.0);
        let est = link.estimate().unwrap();
        assert!((est - 1.75).abs() < 1e-12);
        assert_eq!(link.next_dispatch_time(4.1), Some(4.0 + est));

        // bootstrap: first packet outstanding, no estimate -> wait
        let mut link = DispatchState::default();
        link.record_send(0.0);
        assert_eq!(link.next_dispatch_time(1.0), None);
    }

    #[test]
    fn estimate_is_mean_of_samples() {
        let mut link = DispatchState::default();
        assert_eq!(link.estimate(), None);
        let samples = [0.5, 2.0, 1.25, 4.0];
        for (i, &s) in samples.iter().enumerate() {
            link.record_send(i as f64);
            link.record_result(i as f64 + s, s);
        }
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        assert!((link.estimate().unwrap() - mean).abs() < 1e-12);
    }

    #[test]
    fn runs_are_bit_identical_per_seed() {
        let params = test_params();
        let cfg = homogeneous_config(6, 2, 40, 0.3, params);
        for protocol in [Protocol::Sc3, Protocol::HwOnly, Protocol::LowerBound] {
            let a = run(&cfg, 12345, protocol).unwrap();
            let b = run(&cfg, 12345, protocol).unwrap();
            assert_eq!(a, b);
            let c = run(&cfg, 54321, protocol).unwrap();
            assert_ne!(a.completion_time, c.completion_time);
        }
    }

    #[test]
    fn conservation_holds_across_configs() {
        let params = test_params();
        for (n, n_m, rows, rho) in
            [(4, 0, 30, 0.0), (6, 2, 40, 0.5), (5, 2, 25, 1.0), (8, 4, 60, 0.2)]
        {
            let cfg = homogeneous_config(n, n_m, rows, rho, params);
            for protocol in [Protocol::Sc3, Protocol::HwOnly, Protocol::LowerBound] {
                for seed_value in 0..5 {
                    let res = run(&cfg, seed_value, protocol).unwrap();
                    assert_eq!(
                        res.packets_sent,
                        res.packets_verified + res.packets_discarded + res.packets_in_flight,
                        "{protocol:?} seed {seed_value}"
                    );
                    assert!(res.packets_verified >= cfg.rows as u64 || protocol == Protocol::LowerBound);
                }
            }
        }
    }

    #[test]
    fn sc3_decodes_the_true_product() {
        let params = test_params();
        let cfg = homogeneous_config(6, 2, 40, 0.4, params);
        for seed_value in 0..10 {
            let res = simulate_sc3(&cfg, seed_value).unwrap();
            let (matrix, input) = generate_instance(&cfg, seed_value);
            let q = params.q;
            let expected: Vec<u64> = (0..matrix.rows())
                .map(|i| {
                    matrix
                        .row(i)
                        .iter()
                        .zip(input.entries())
                        .fold(0u64, |acc, (&a, &b)| (acc + crate::hashing::mul_mod(a, b, q)) % q)
                })
                .collect();
            assert_eq!(res.decoded.as_deref(), Some(expected.as_slice()), "seed {seed_value}");
            assert_eq!(res.residual_corruption, 0);
        }
    }

    #[test]
    fn lower_bound_timing_invariant_to_attack_parameters() {
        let params = test_params();
        let base = run(&homogeneous_config(6, 0, 40, 0.0, params), 7, Protocol::LowerBound).unwrap();
        for (n_m, rho) in [(1, 0.1), (3, 0.5), (5, 1.0)] {
            let res =
                run(&homogeneous_config(6, n_m, 40, rho, params), 7, Protocol::LowerBound).unwrap();
            assert_eq!(res.completion_time, base.completion_time, "n_m={n_m} rho={rho}");
            assert_eq!(res.packets_sent, base.packets_sent);
        }
    }

    #[test]
    fn all_honest_protocols_agree_on_timing() {
        let params = test_params();
        let cfg = homogeneous_config(5, 0, 30, 0.0, params);
        for seed_value in 0..5 {
            let sc3 = simulate_sc3(&cfg, seed_value).unwrap();
            let hw = simulate_hw_only(&cfg, seed_value).unwrap();
            let lb = simulate_lower_bound(&cfg, seed_value).unwrap();
            assert_eq!(sc3.completion_time, hw.completion_time);
            assert_eq!(sc3.completion_time, lb.completion_time);
            assert_eq!(sc3.workers_removed, 0);
            assert_eq!(hw.workers_removed, 0);
        }
    }

    #[test]
    fn config_validation_errors() {
        let params = test_params();
        let mut cfg = homogeneous_config(3, 3, 10, 0.5, params);
        assert!(matches!(simulate_sc3(&cfg, 0), Err(EngineError::InvalidConfig(_))));
        cfg = homogeneous_config(3, 1, 10, 0.5, params);
        cfg.workers[0].pattern = AttackPattern::symmetric(2);
        assert!(matches!(simulate_sc3(&cfg, 0), Err(EngineError::InvalidConfig(_))));
        cfg = homogeneous_config(3, 0, 10, 0.0, params);
        cfg.workers[1].compute_rate = 0.0;
        assert!(matches!(simulate_sc3(&cfg, 0), Err(EngineError::InvalidConfig(_))));
        cfg = homogeneous_config(3, 0, 10, 0.0, params);
        cfg.rows = 0;
        assert!(matches!(simulate_sc3(&cfg, 0), Err(EngineError::InvalidConfig(_))));
    }

    #[test]
    fn transmission_delays_shift_completion() {
        let params = test_params();
        let mut cfg = homogeneous_config(4, 0, 20, 0.0, params);
        let base = simulate_sc3(&cfg, 3).unwrap();
        for w in cfg.workers.iter_mut() {
            w.uplink_delay = 0.5;
            w.downlink_delay = 0.25;
        }
        let delayed = simulate_sc3(&cfg, 3).unwrap();
        assert!(delayed.completion_time > base.completion_time);
    }
}
