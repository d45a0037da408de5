//! Config-driven experiment runner.
//!
//! Parses flat `key = value` config files, expands them into per-replication
//! simulations (worker speeds are resampled per replication from the
//! configured ranges), runs the selected algorithms, and emits CSV with one
//! row per (algorithm, replication) plus mean / 95%-CI summary rows. Sweeps
//! prepend a sweep-value column and, when both `sc3` and `hw_only` ran, a
//! measured-gap column next to its analytic lower bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::adversary::{corrupt_batch, AttackPattern};
use crate::analysis::{self, AnalysisError, FleetSpec, FleetWorker};
use crate::engine::{
    simulate_hw_only, simulate_lower_bound, simulate_sc3, EngineError, RunResult, SimConfig,
    WorkerProfile,
};
use crate::hashing::{gen_params, mul_mod, HashError, HashParams};
use crate::seed;
use crate::verify::{
    equivalent_rounds, hw_check, lw_check, multiround_lw, BatchItem, CheckBatch, CostModel,
};
use crate::{fountain::DegreeDist, hashing::hash_residue};

const STREAM_MEAN: u64 = 10;
const STREAM_SIM: u64 = 11;
const STREAM_PARAMS: u64 = 12;
const STREAM_MC: u64 = 13;

/// Stable column set shared by `run` and `sweep` output.
pub const CSV_HEADER: &str = "sweep_value,algorithm,replication,seed,completion_time,\
packets_verified,packets_discarded,workers_removed,residual_corruption,realized_overhead,\
gap,gap_lower_bound";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("invalid value for '{key}': {message}")]
    BadValue { key: String, message: String },
    #[error("config line {line} is not 'key = value': {text:?}")]
    BadLine { line: usize, text: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Hash(#[from] HashError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Sc3,
    HwOnly,
    LowerBound,
    /// No simulation: evaluates the completion-delay upper bound on each
    /// replication's fleet, giving the analytic curve next to the measured ones.
    Bounds,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sc3 => "sc3",
            Algorithm::HwOnly => "hw_only",
            Algorithm::LowerBound => "lower_bound",
            Algorithm::Bounds => "bounds",
        }
    }

    fn parse(s: &str) -> Result<Self, ConfigError> {
        match s.trim() {
            "sc3" => Ok(Algorithm::Sc3),
            "hw_only" => Ok(Algorithm::HwOnly),
            "lower_bound" => Ok(Algorithm::LowerBound),
            "bounds" => Ok(Algorithm::Bounds),
            other => Err(ConfigError::BadValue {
                key: "algorithms".into(),
                message: format!("unknown algorithm '{other}'"),
            }),
        }
    }
}

/// Attack pattern key for simulations. Batch-shaped patterns only exist at
/// the check level; see `mc_detect` for those.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternKey {
    None,
    /// Fresh random offset per corrupted packet. Easy prey: the light-weight
    /// check detects any corrupted batch almost surely.
    Random,
    /// One offset magnitude per worker, random sign per packet — the
    /// worst-case attacker the delay analysis is written against.
    Symmetric,
}

/// One experiment: a worker fleet template plus task and replication knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Matrix rows (key `r`).
    pub rows: usize,
    /// Matrix cols (key `c`).
    pub cols: usize,
    /// Fleet size (key `n`).
    pub workers: usize,
    /// Malicious worker count, ids `0..n_m` (key `n_m`).
    pub malicious: usize,
    pub q_bits: u32,
    pub r_bits: u32,
    /// Per-packet corruption probability of malicious workers.
    pub rho_c: f64,
    pub attack_pattern: PatternKey,
    /// Shift of every worker's shifted-exponential compute time.
    pub compute_shift: f64,
    /// Honest workers draw their mean compute time uniformly from this range.
    pub honest_mean_min: f64,
    pub honest_mean_max: f64,
    /// Malicious workers draw theirs from this range.
    pub malicious_mean_min: f64,
    pub malicious_mean_max: f64,
    pub uplink_delay: f64,
    pub downlink_delay: f64,
    /// Coding overhead fraction; the packet target is `R + ceil(frac·R)`.
    pub epsilon_frac: f64,
    pub replications: usize,
    pub base_seed: u64,
    pub algorithms: Vec<Algorithm>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            rows: 200,
            cols: 200,
            workers: 30,
            malicious: 10,
            q_bits: 31,
            r_bits: 62,
            rho_c: 0.3,
            attack_pattern: PatternKey::Symmetric,
            compute_shift: 0.0,
            honest_mean_min: 1.0,
            honest_mean_max: 6.0,
            malicious_mean_min: 1.0,
            malicious_mean_max: 6.0,
            uplink_delay: 0.0,
            downlink_delay: 0.0,
            epsilon_frac: 0.05,
            replications: 10,
            base_seed: 1,
            algorithms: vec![Algorithm::Sc3, Algorithm::HwOnly, Algorithm::LowerBound],
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e| ConfigError::BadValue {
        key: key.into(),
        message: format!("{e}"),
    })
}

fn parse_range(key: &str, value: &str) -> Result<(f64, f64), ConfigError> {
    let (lo, hi) = value.split_once(':').ok_or_else(|| ConfigError::BadValue {
        key: key.into(),
        message: "expected 'lo:hi'".into(),
    })?;
    Ok((parse_num(key, lo)?, parse_num(key, hi)?))
}

impl ExperimentConfig {
    /// Parse a flat config file. Unknown keys are hard errors.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::BadLine {
                line: i + 1,
                text: raw.to_string(),
            })?;
            cfg.apply_set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    /// Apply one `key = value` override.
    pub fn apply_set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "r" => self.rows = parse_num(key, value)?,
            "c" => self.cols = parse_num(key, value)?,
            "n" => self.workers = parse_num(key, value)?,
            "n_m" => self.malicious = parse_num(key, value)?,
            "q_bits" => self.q_bits = parse_num(key, value)?,
            "r_bits" => self.r_bits = parse_num(key, value)?,
            "rho_c" => self.rho_c = parse_num(key, value)?,
            "attack_pattern" => {
                self.attack_pattern = match value {
                    "none" => PatternKey::None,
                    "random" => PatternKey::Random,
                    "symmetric" => PatternKey::Symmetric,
                    other => {
                        return Err(ConfigError::BadValue {
                            key: key.into(),
                            message: format!(
                                "unknown pattern '{other}' (simulations take 'none', \
                                 'random', or 'symmetric')"
                            ),
                        })
                    }
                }
            }
            "compute_shift" => self.compute_shift = parse_num(key, value)?,
            "honest_mean_min" => self.honest_mean_min = parse_num(key, value)?,
            "honest_mean_max" => self.honest_mean_max = parse_num(key, value)?,
            "malicious_mean_min" => self.malicious_mean_min = parse_num(key, value)?,
            "malicious_mean_max" => self.malicious_mean_max = parse_num(key, value)?,
            // compound ranges, mostly for sweeps
            "honest_mean" => {
                (self.honest_mean_min, self.honest_mean_max) = parse_range(key, value)?;
            }
            "malicious_mean" => {
                (self.malicious_mean_min, self.malicious_mean_max) = parse_range(key, value)?;
            }
            "uplink_delay" => self.uplink_delay = parse_num(key, value)?,
            "downlink_delay" => self.downlink_delay = parse_num(key, value)?,
            "epsilon_frac" => self.epsilon_frac = parse_num(key, value)?,
            "replications" => self.replications = parse_num(key, value)?,
            "base_seed" => self.base_seed = parse_num(key, value)?,
            "algorithms" => {
                let algorithms = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(Algorithm::parse)
                    .collect::<Result<Vec<_>, _>>()?;
                if algorithms.is_empty() {
                    return Err(ConfigError::BadValue {
                        key: key.into(),
                        message: "at least one algorithm required".into(),
                    });
                }
                self.algorithms = algorithms;
            }
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: String| Err(ConfigError::Invalid(m));
        if self.rows == 0 || self.cols == 0 {
            return fail("r and c must be positive".into());
        }
        if self.workers == 0 {
            return fail("n must be positive".into());
        }
        if self.malicious > self.workers {
            return fail(format!("n_m = {} exceeds n = {}", self.malicious, self.workers));
        }
        let needs_honest = self.algorithms.iter().any(|a| {
            matches!(a, Algorithm::Sc3 | Algorithm::HwOnly | Algorithm::LowerBound | Algorithm::Bounds)
        });
        if needs_honest && self.malicious == self.workers {
            return fail("at least one honest worker required".into());
        }
        if !(0.0..=1.0).contains(&self.rho_c) {
            return fail(format!("rho_c = {} outside [0, 1]", self.rho_c));
        }
        if self.epsilon_frac < 0.0 {
            return fail("epsilon_frac must be nonnegative".into());
        }
        if self.replications == 0 {
            return fail("replications must be positive".into());
        }
        for (label, lo, hi) in [
            ("honest_mean", self.honest_mean_min, self.honest_mean_max),
            ("malicious_mean", self.malicious_mean_min, self.malicious_mean_max),
        ] {
            if !(lo > self.compute_shift) || hi < lo {
                return fail(format!(
                    "{label} range [{lo}, {hi}] must satisfy compute_shift < min <= max"
                ));
            }
        }
        Ok(())
    }

    /// Coding overhead as a packet count.
    pub fn epsilon(&self) -> usize {
        (self.epsilon_frac * self.rows as f64).ceil() as usize
    }

    /// Simulation seed of one replication.
    pub fn sim_seed(&self, replication: usize) -> u64 {
        seed::mix(self.base_seed, &[STREAM_SIM, replication as u64])
    }

    /// Build the worker fleet of one replication. Each worker's mean compute
    /// time is drawn from its class range with a seed derived from
    /// (base_seed, replication, worker id), so a sweep that changes some
    /// other knob leaves the fleet untouched.
    pub fn build_workers(&self, replication: usize) -> Vec<WorkerProfile> {
        (0..self.workers)
            .map(|id| {
                let malicious = id < self.malicious;
                let (lo, hi) = if malicious {
                    (self.malicious_mean_min, self.malicious_mean_max)
                } else {
                    (self.honest_mean_min, self.honest_mean_max)
                };
                let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(
                    self.base_seed,
                    &[STREAM_MEAN, replication as u64, id as u64],
                ));
                let mean = if hi > lo { rng.gen_range(lo..hi) } else { lo };
                let rate = 1.0 / (mean - self.compute_shift);
                let pattern = match (malicious, self.attack_pattern) {
                    (true, PatternKey::Random) => AttackPattern::random_additive(self.rho_c),
                    (true, PatternKey::Symmetric) => {
                        AttackPattern::symmetric_additive(self.rho_c)
                    }
                    _ => AttackPattern::none(),
                };
                WorkerProfile {
                    id,
                    malicious,
                    pattern,
                    compute_shift: self.compute_shift,
                    compute_rate: rate,
                    uplink_delay: self.uplink_delay,
                    downlink_delay: self.downlink_delay,
                }
            })
            .collect()
    }

    /// The analysis-layer view of one replication's fleet.
    pub fn fleet(&self, replication: usize) -> FleetSpec {
        FleetSpec {
            workers: self
                .build_workers(replication)
                .iter()
                .map(|w| FleetWorker {
                    id: w.id,
                    mean_compute: w.mean_compute(),
                    malicious: w.malicious,
                })
                .collect(),
            rows: self.rows as u64,
            epsilon: self.epsilon() as u64,
            rho_c: self.rho_c,
        }
    }

    /// The engine config of one replication.
    pub fn sim_config(&self, params: HashParams, replication: usize) -> SimConfig {
        SimConfig {
            rows: self.rows,
            cols: self.cols,
            epsilon: self.epsilon(),
            params,
            degree: DegreeDist::default(),
            workers: self.build_workers(replication),
            cost_model: CostModel::schoolbook(&params),
        }
    }

    /// The hash parameters shared by every replication of this experiment.
    pub fn hash_params(&self) -> Result<HashParams, HashError> {
        gen_params(self.q_bits, self.r_bits, seed::mix(self.base_seed, &[STREAM_PARAMS]))
    }
}

/// Per-replication record of one algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRow {
    pub replication: usize,
    pub seed: u64,
    pub completion_time: f64,
    pub packets_verified: Option<u64>,
    pub packets_discarded: Option<u64>,
    pub workers_removed: Option<u64>,
    pub residual_corruption: Option<u64>,
    pub realized_overhead: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct AlgorithmOutput {
    pub algorithm: Algorithm,
    pub rows: Vec<ReplicationRow>,
    /// Full simulation results; empty for the analytic `bounds` pseudo-algorithm.
    pub sim_results: Vec<RunResult>,
    pub mean_completion: f64,
    pub ci95_completion: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub per_algorithm: Vec<AlgorithmOutput>,
    /// `hw_only mean - sc3 mean` when both ran.
    pub gap: Option<f64>,
    /// Mean analytic lower bound on that gap over the same fleets.
    pub gap_lower_bound: Option<f64>,
}

impl RunOutput {
    pub fn algorithm(&self, algorithm: Algorithm) -> Option<&AlgorithmOutput> {
        self.per_algorithm.iter().find(|a| a.algorithm == algorithm)
    }
}

fn mean_and_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * (var / n as f64).sqrt())
}

/// Execute the configured algorithms over all replications.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput, ExperimentError> {
    cfg.validate()?;
    let params = cfg.hash_params()?;
    let mut per_algorithm = Vec::new();
    for &algorithm in &cfg.algorithms {
        let output = match algorithm {
            Algorithm::Bounds => bounds_output(cfg)?,
            _ => simulated_output(cfg, params, algorithm)?,
        };
        per_algorithm.push(output);
    }
    let find = |a: Algorithm| per_algorithm.iter().find(|o| o.algorithm == a);
    let (gap, gap_lower_bound) = match (find(Algorithm::Sc3), find(Algorithm::HwOnly)) {
        (Some(sc3), Some(hw)) => {
            let bounds: Result<Vec<f64>, AnalysisError> = (0..cfg.replications)
                .map(|rep| analysis::gap_lower_bound(&cfg.fleet(rep)))
                .collect();
            let (bound_mean, _) = mean_and_ci(&bounds?);
            (Some(hw.mean_completion - sc3.mean_completion), Some(bound_mean))
        }
        _ => (None, None),
    };
    Ok(RunOutput { per_algorithm, gap, gap_lower_bound })
}

fn simulated_output(
    cfg: &ExperimentConfig,
    params: HashParams,
    algorithm: Algorithm,
) -> Result<AlgorithmOutput, ExperimentError> {
    let sim_results: Result<Vec<RunResult>, EngineError> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let sim_cfg = cfg.sim_config(params, rep);
            let seed_value = cfg.sim_seed(rep);
            match algorithm {
                Algorithm::Sc3 => simulate_sc3(&sim_cfg, seed_value),
                Algorithm::HwOnly => simulate_hw_only(&sim_cfg, seed_value),
                Algorithm::LowerBound => simulate_lower_bound(&sim_cfg, seed_value),
                Algorithm::Bounds => unreachable!(),
            }
        })
        .collect();
    let sim_results = sim_results?;
    let rows: Vec<ReplicationRow> = sim_results
        .iter()
        .enumerate()
        .map(|(rep, r)| ReplicationRow {
            replication: rep,
            seed: r.seed,
            completion_time: r.completion_time,
            packets_verified: Some(r.packets_verified),
            packets_discarded: Some(r.packets_discarded),
            workers_removed: Some(r.workers_removed),
            residual_corruption: Some(r.residual_corruption),
            realized_overhead: r.realized_overhead,
        })
        .collect();
    let times: Vec<f64> = rows.iter().map(|r| r.completion_time).collect();
    let (mean_completion, ci95_completion) = mean_and_ci(&times);
    Ok(AlgorithmOutput { algorithm, rows, sim_results, mean_completion, ci95_completion })
}

fn bounds_output(cfg: &ExperimentConfig) -> Result<AlgorithmOutput, ExperimentError> {
    let rows: Result<Vec<ReplicationRow>, AnalysisError> = (0..cfg.replications)
        .map(|rep| {
            let bound = analysis::upper_bound_sc3(&cfg.fleet(rep))?;
            Ok(ReplicationRow {
                replication: rep,
                seed: cfg.sim_seed(rep),
                completion_time: bound,
                packets_verified: None,
                packets_discarded: None,
                workers_removed: None,
                residual_corruption: None,
                realized_overhead: None,
            })
        })
        .collect();
    let rows = rows?;
    let times: Vec<f64> = rows.iter().map(|r| r.completion_time).collect();
    let (mean_completion, ci95_completion) = mean_and_ci(&times);
    Ok(AlgorithmOutput {
        algorithm: Algorithm::Bounds,
        rows,
        sim_results: Vec::new(),
        mean_completion,
        ci95_completion,
    })
}

fn fmt_opt_u64(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn push_output_rows(out: &mut String, sweep_value: &str, output: &RunOutput) {
    use std::fmt::Write;
    for alg in &output.per_algorithm {
        let name = alg.algorithm.name();
        for row in &alg.rows {
            writeln!(
                out,
                "{sweep_value},{name},{},{},{:.6},{},{},{},{},{},,",
                row.replication,
                row.seed,
                row.completion_time,
                fmt_opt_u64(row.packets_verified),
                fmt_opt_u64(row.packets_discarded),
                fmt_opt_u64(row.workers_removed),
                fmt_opt_u64(row.residual_corruption),
                fmt_opt_f64(row.realized_overhead),
            )
            .expect("string write");
        }
        // summary rows; the measured gap and its analytic lower bound ride
        // on the sc3 mean row once both protocols are present
        let (gap, gap_lb) = if alg.algorithm == Algorithm::Sc3 {
            (output.gap, output.gap_lower_bound)
        } else {
            (None, None)
        };
        let mean_verified = mean_of(&alg.rows, |r| r.packets_verified);
        let mean_discarded = mean_of(&alg.rows, |r| r.packets_discarded);
        let mean_removed = mean_of(&alg.rows, |r| r.workers_removed);
        let mean_residual = mean_of(&alg.rows, |r| r.residual_corruption);
        let overheads: Vec<f64> = alg.rows.iter().filter_map(|r| r.realized_overhead).collect();
        let mean_overhead =
            (!overheads.is_empty()).then(|| overheads.iter().sum::<f64>() / overheads.len() as f64);
        writeln!(
            out,
            "{sweep_value},{name},mean,,{:.6},{},{},{},{},{},{},{}",
            alg.mean_completion,
            fmt_opt_f64(mean_verified),
            fmt_opt_f64(mean_discarded),
            fmt_opt_f64(mean_removed),
            fmt_opt_f64(mean_residual),
            fmt_opt_f64(mean_overhead),
            fmt_opt_f64(gap),
            fmt_opt_f64(gap_lb),
        )
        .expect("string write");
        writeln!(out, "{sweep_value},{name},ci95,,{:.6},,,,,,,", alg.ci95_completion)
            .expect("string write");
    }
}

fn mean_of(rows: &[ReplicationRow], f: impl Fn(&ReplicationRow) -> Option<u64>) -> Option<f64> {
    let values: Vec<u64> = rows.iter().filter_map(&f).collect();
    (!values.is_empty()).then(|| values.iter().sum::<u64>() as f64 / values.len() as f64)
}

/// `run` rendered as CSV (empty sweep-value column).
pub fn run_csv(cfg: &ExperimentConfig) -> Result<String, ExperimentError> {
    let output = run(cfg)?;
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    push_output_rows(&mut out, "", &output);
    Ok(out)
}

/// Run the base config once per swept value.
pub fn sweep(
    cfg: &ExperimentConfig,
    param: &str,
    values: &[String],
) -> Result<Vec<(String, RunOutput)>, ExperimentError> {
    if values.is_empty() {
        return Err(ConfigError::BadValue {
            key: param.to_string(),
            message: "sweep needs at least one value".into(),
        }
        .into());
    }
    let mut points = Vec::new();
    for value in values {
        let mut point_cfg = cfg.clone();
        point_cfg.apply_set(param, value)?;
        points.push((value.clone(), run(&point_cfg)?));
    }
    Ok(points)
}

/// `sweep` rendered as CSV: concatenated run outputs with the leading
/// sweep-value column filled in.
pub fn sweep_csv(
    cfg: &ExperimentConfig,
    param: &str,
    values: &[String],
) -> Result<String, ExperimentError> {
    let points = sweep(cfg, param, values)?;
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (value, output) in &points {
        push_output_rows(&mut out, value, output);
    }
    Ok(out)
}

/// Analysis outputs for the configured fleet (replication 0), as CSV.
pub fn bounds_csv(cfg: &ExperimentConfig) -> Result<String, ExperimentError> {
    cfg.validate()?;
    let fleet = cfg.fleet(0);
    let upper = analysis::upper_bound_sc3(&fleet)?;
    let hw = analysis::t_hw_only(&fleet)?;
    let gap = analysis::gap_lower_bound(&fleet)?;
    let unverified = analysis::unverified_bound(&fleet)?;
    Ok(format!(
        "upper_bound_sc3,t_hw_only,gap_lower_bound,unverified_bound\n{upper:.6},{hw:.6},{gap:.6},{unverified:.6}\n"
    ))
}

/// Attack patterns available to the detection-probability harness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum McPattern {
    SymPair,
    SymGeneral { z_tilde: usize },
    Triple,
    Random { rho_c: f64 },
}

impl McPattern {
    pub fn name(self) -> &'static str {
        match self {
            McPattern::SymPair => "sym-pair",
            McPattern::SymGeneral { .. } => "sym-general",
            McPattern::Triple => "triple",
            McPattern::Random { .. } => "random",
        }
    }

    fn z_tilde(self) -> Option<usize> {
        match self {
            McPattern::SymPair => Some(2),
            McPattern::SymGeneral { z_tilde } => Some(z_tilde),
            McPattern::Triple => Some(3),
            McPattern::Random { .. } => None,
        }
    }

    fn attack(self) -> AttackPattern {
        match self {
            McPattern::SymPair => AttackPattern::symmetric(2),
            McPattern::SymGeneral { z_tilde } => AttackPattern::symmetric(z_tilde),
            McPattern::Triple => AttackPattern::triple(),
            McPattern::Random { rho_c } => AttackPattern::random_additive(rho_c),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McChecker {
    Lw,
    Hw,
    /// `⌈log₂ q⌉` LW rounds.
    MultiRound,
}

impl McChecker {
    pub fn name(self) -> &'static str {
        match self {
            McChecker::Lw => "lw",
            McChecker::Hw => "hw",
            McChecker::MultiRound => "multiround",
        }
    }
}

#[derive(Debug, Clone)]
pub struct McDetectOpts {
    pub pattern: McPattern,
    pub checker: McChecker,
    pub trials: u64,
    pub seed: u64,
    /// Batch size per trial.
    pub z: usize,
    /// Exact prime modulus; when unset a `q_bits`-bit prime is generated.
    pub q: Option<u64>,
    pub q_bits: u32,
    /// Payload width of the synthetic packets.
    pub cols: usize,
}

impl Default for McDetectOpts {
    fn default() -> Self {
        McDetectOpts {
            pattern: McPattern::SymPair,
            checker: McChecker::Lw,
            trials: 100_000,
            seed: 1,
            z: 16,
            q: None,
            q_bits: 31,
            cols: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McDetectReport {
    pub pattern: &'static str,
    pub checker: &'static str,
    pub z: usize,
    pub z_tilde: Option<usize>,
    pub q: u64,
    pub trials: u64,
    pub empirical: f64,
    pub analytic: Option<f64>,
    pub ci95: f64,
}

impl McDetectReport {
    pub fn csv(&self) -> String {
        let analytic = self.analytic.map(|p| format!("{p:.6}")).unwrap_or_default();
        let z_tilde = self.z_tilde.map(|z| z.to_string()).unwrap_or_default();
        format!(
            "pattern,checker,z,z_tilde,q,trials,empirical,analytic,ci95\n{},{},{},{},{},{},{:.6},{},{:.6}\n",
            self.pattern,
            self.checker,
            self.z,
            z_tilde,
            self.q,
            self.trials,
            self.empirical,
            analytic,
            self.ci95,
        )
    }
}

fn mc_params(opts: &McDetectOpts) -> Result<HashParams, ExperimentError> {
    let seed_value = seed::mix(opts.seed, &[STREAM_MC, 0]);
    let params = match opts.q {
        Some(q) => {
            let q_bits = 64 - q.leading_zeros();
            let r_bits = (2 * q_bits + 2).min(62).max(q_bits + 2);
            HashParams::for_modulus(q, r_bits, seed_value)?
        }
        None => gen_params(opts.q_bits, (2 * opts.q_bits).min(62), seed_value)?,
    };
    Ok(params)
}

fn mc_analytic(opts: &McDetectOpts, params: &HashParams) -> Option<f64> {
    let single_round_lw = match opts.pattern {
        McPattern::SymPair => Some(0.5),
        McPattern::SymGeneral { z_tilde } => analysis::p_detect_lw_symmetric(z_tilde as u64).ok(),
        McPattern::Triple => Some(0.75),
        McPattern::Random { .. } => None,
    };
    match opts.checker {
        McChecker::Lw => single_round_lw,
        McChecker::Hw => Some(analysis::p_detect_hw(params.q)),
        McChecker::MultiRound => {
            let rounds = equivalent_rounds(params);
            single_round_lw.map(|p| 1.0 - (1.0 - p).powi(rounds as i32))
        }
    }
}

/// Measure a checker's empirical detection probability against a pattern.
///
/// One honest base batch is fixed; each trial redraws the corruption and the
/// check coefficients. Trials where the pattern corrupts nothing (possible
/// only for the Bernoulli pattern) are redrawn, so the rate is conditioned on
/// an attack actually happening.
pub fn mc_detect(opts: &McDetectOpts) -> Result<McDetectReport, ExperimentError> {
    if opts.trials == 0 || opts.z == 0 || opts.cols == 0 {
        return Err(ConfigError::Invalid("mc-detect needs positive trials, z, cols".into()).into());
    }
    if let Some(z_tilde) = opts.pattern.z_tilde() {
        if z_tilde > opts.z {
            return Err(ConfigError::Invalid(format!(
                "pattern corrupts {z_tilde} of a batch of {}",
                opts.z
            ))
            .into());
        }
    }
    let params = mc_params(opts)?;
    let q = params.q;
    let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(opts.seed, &[STREAM_MC, 1]));
    // fixed honest base batch
    let x: Vec<u64> = (0..opts.cols).map(|_| rng.gen_range(0..q)).collect();
    let x_digests: Vec<_> = x.iter().map(|&v| hash_residue(v, &params)).collect();
    let payloads: Vec<Vec<u64>> =
        (0..opts.z).map(|_| (0..opts.cols).map(|_| rng.gen_range(0..q)).collect()).collect();
    let honest: Vec<u64> = payloads
        .iter()
        .map(|p| p.iter().zip(&x).fold(0u64, |acc, (&a, &b)| (acc + mul_mod(a, b, q)) % q))
        .collect();
    let attack = opts.pattern.attack();
    let rounds = equivalent_rounds(&params);
    let mut detections = 0u64;
    for _ in 0..opts.trials {
        let reported = loop {
            let (values, corrupted) = corrupt_batch(&honest, &attack, q, &mut rng)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            if !corrupted.is_empty() {
                break values;
            }
        };
        let items: Vec<BatchItem<'_>> = payloads
            .iter()
            .enumerate()
            .map(|(i, p)| BatchItem { id: i as u64, payload: p, reported: reported[i] })
            .collect();
        let batch = CheckBatch { worker_id: 0, items, x_digests: &x_digests };
        let outcome = match opts.checker {
            McChecker::Lw => lw_check(&batch, &params, &mut rng),
            McChecker::Hw => hw_check(&batch, &params, &mut rng),
            McChecker::MultiRound => multiround_lw(&batch, rounds, &params, &mut rng),
        };
        if outcome.detected {
            detections += 1;
        }
    }
    let empirical = detections as f64 / opts.trials as f64;
    let ci95 = 1.96 * (empirical * (1.0 - empirical) / opts.trials as f64).sqrt();
    Ok(McDetectReport {
        pattern: opts.pattern.name(),
        checker: opts.checker.name(),
        z: opts.z,
        z_tilde: opts.pattern.z_tilde(),
        q,
        trials: opts.trials,
        empirical,
        analytic: mc_analytic(opts, &params),
        ci95,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_defaults_and_overrides() {
        let cfg = ExperimentConfig::parse(
            "# scaled setup\nr = 100\nc = 50\nn = 12\nn_m = 4\nrho_c = 0.25\n\
             algorithms = sc3,lower_bound\nhonest_mean = 2:3\n",
        )
        .unwrap();
        assert_eq!(cfg.rows, 100);
        assert_eq!(cfg.cols, 50);
        assert_eq!(cfg.workers, 12);
        assert_eq!(cfg.malicious, 4);
        assert_eq!(cfg.rho_c, 0.25);
        assert_eq!(cfg.algorithms, vec![Algorithm::Sc3, Algorithm::LowerBound]);
        assert_eq!((cfg.honest_mean_min, cfg.honest_mean_max), (2.0, 3.0));
        // untouched keys keep defaults
        assert_eq!(cfg.q_bits, 31);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_and_bad_lines_are_hard_errors() {
        assert!(matches!(
            ExperimentConfig::parse("rows = 10\n"),
            Err(ConfigError::UnknownKey(k)) if k == "rows"
        ));
        assert!(matches!(
            ExperimentConfig::parse("r 10\n"),
            Err(ConfigError::BadLine { line: 1, .. })
        ));
        assert!(matches!(
            ExperimentConfig::parse("n_m = many\n"),
            Err(ConfigError::BadValue { .. })
        ));
        assert!(matches!(
            ExperimentConfig::parse("attack_pattern = sym-pair\n"),
            Err(ConfigError::BadValue { .. })
        ));
    }

    #[test]
    fn validation_catches_inconsistent_configs() {
        let mut cfg = ExperimentConfig::default();
        cfg.malicious = cfg.workers + 1;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.malicious = cfg.workers;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.compute_shift = 2.0;
        cfg.honest_mean_min = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.rho_c = 1.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn fleet_is_stable_across_swept_knobs() {
        let mut a = ExperimentConfig::default();
        a.apply_set("rho_c", "0.1").unwrap();
        let mut b = ExperimentConfig::default();
        b.apply_set("rho_c", "0.9").unwrap();
        for rep in 0..3 {
            let wa = a.build_workers(rep);
            let wb = b.build_workers(rep);
            for (x, y) in wa.iter().zip(&wb) {
                assert_eq!(x.compute_rate, y.compute_rate);
            }
        }
    }

    fn tiny_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        for (k, v) in [
            ("r", "24"),
            ("c", "8"),
            ("n", "4"),
            ("n_m", "1"),
            ("replications", "2"),
            ("base_seed", "5"),
        ] {
            cfg.apply_set(k, v).unwrap();
        }
        cfg
    }

    #[test]
    fn run_csv_is_deterministic_and_well_formed() {
        let cfg = tiny_config();
        let a = run_csv(&cfg).unwrap();
        let b = run_csv(&cfg).unwrap();
        assert_eq!(a, b);
        let mut lines = a.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        let field_count = CSV_HEADER.split(',').count();
        for line in lines {
            assert_eq!(line.split(',').count(), field_count, "line {line:?}");
        }
        // 3 algorithms x (2 data + mean + ci95) rows
        assert_eq!(a.lines().count(), 1 + 3 * 4);
    }

    #[test]
    fn gap_columns_appear_when_both_protocols_run() {
        let cfg = tiny_config();
        let output = run(&cfg).unwrap();
        assert!(output.gap.is_some());
        assert!(output.gap_lower_bound.is_some());
        let hw = output.algorithm(Algorithm::HwOnly).unwrap().mean_completion;
        let sc3 = output.algorithm(Algorithm::Sc3).unwrap().mean_completion;
        assert!((output.gap.unwrap() - (hw - sc3)).abs() < 1e-12);

        let mut only_sc3 = cfg.clone();
        only_sc3.apply_set("algorithms", "sc3").unwrap();
        let output = run(&only_sc3).unwrap();
        assert!(output.gap.is_none());
    }

    #[test]
    fn bounds_pseudo_algorithm_runs_without_simulation() {
        let mut cfg = tiny_config();
        cfg.apply_set("algorithms", "bounds").unwrap();
        let output = run(&cfg).unwrap();
        let bounds = output.algorithm(Algorithm::Bounds).unwrap();
        assert_eq!(bounds.rows.len(), 2);
        assert!(bounds.sim_results.is_empty());
        assert!(bounds.mean_completion > 0.0);
        assert!(bounds.rows.iter().all(|r| r.packets_verified.is_none()));
    }

    #[test]
    fn bounds_csv_has_the_four_quantities() {
        let cfg = tiny_config();
        let csv = bounds_csv(&cfg).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "upper_bound_sc3,t_hw_only,gap_lower_bound,unverified_bound");
        let row: Vec<f64> =
            lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(row.len(), 4);
        // consistency: gap bound = t_hw_only - upper bound
        assert!((row[2] - (row[1] - row[0])).abs() < 1e-5);
    }

    #[test]
    fn sweep_csv_tags_rows_with_the_swept_value() {
        let mut cfg = tiny_config();
        cfg.apply_set("replications", "1").unwrap();
        cfg.apply_set("algorithms", "lower_bound").unwrap();
        let csv =
            sweep_csv(&cfg, "rho_c", &["0.1".to_string(), "0.9".to_string()]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert!(lines[1].starts_with("0.1,lower_bound,0,"));
        assert!(lines[4].starts_with("0.9,lower_bound,0,"));
        assert!(matches!(
            sweep_csv(&cfg, "not_a_key", &["1".to_string()]),
            Err(ExperimentError::Config(ConfigError::UnknownKey(_)))
        ));
    }

    #[test]
    fn mc_detect_sym_pair_near_half() {
        let opts = McDetectOpts {
            trials: 20_000,
            z: 10,
            ..McDetectOpts::default()
        };
        let report = mc_detect(&opts).unwrap();
        assert_eq!(report.analytic, Some(0.5));
        assert!((report.empirical - 0.5).abs() < 0.02, "{}", report.empirical);
        let csv = report.csv();
        assert!(csv.starts_with("pattern,checker,z,z_tilde,q,trials,empirical,analytic,ci95\n"));
        assert!(csv.contains("sym-pair,lw,10,2,"));
    }

    #[test]
    fn mc_detect_exact_small_q() {
        let opts = McDetectOpts {
            pattern: McPattern::Random { rho_c: 0.5 },
            checker: McChecker::Hw,
            trials: 5_000,
            z: 8,
            q: Some(251),
            ..McDetectOpts::default()
        };
        let report = mc_detect(&opts).unwrap();
        assert_eq!(report.q, 251);
        assert_eq!(report.analytic, Some(1.0 - 1.0 / 251.0));
        assert!(report.empirical > 0.98);
    }
}
