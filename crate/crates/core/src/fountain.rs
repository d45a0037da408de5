//! Rateless row coding over `F_q`.
//!
//! The master splits `A` into rows and emits an unbounded stream of coded
//! packets, each a binary combination of rows drawn from a degree
//! distribution. A worker turns a packet into a single field element
//! (`payload · x mod q`); once enough verified results arrive, incremental
//! Gaussian elimination recovers `A·x`.
//!
//! All data arithmetic is mod `q` — the same prime as the hash exponent
//! group — so worker results can be checked against row digests directly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::hashing::{mul_mod, pow_mod};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FountainError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("matrix entries must lie in [0, q); found {value} with q={q}")]
    EntryOutOfField { value: u64, q: u64 },
    #[error("matrix must be nonempty")]
    EmptyMatrix,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("coefficient rows span only rank {rank}; decoding needs full rank")]
    InsufficientRank { rank: usize },
    #[error("equations are inconsistent: a corrupted packet reached the decoder")]
    Inconsistent,
    #[error("coefficient vector has length {got}, expected {expected}")]
    BadRowLength { expected: usize, got: usize },
}

/// Row-major matrix with entries in `[0, q)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataMatrix {
    rows: usize,
    cols: usize,
    q: u64,
    entries: Vec<u64>,
}

impl DataMatrix {
    pub fn new(rows: usize, cols: usize, q: u64, entries: Vec<u64>) -> Result<Self, FountainError> {
        if rows == 0 || cols == 0 {
            return Err(FountainError::EmptyMatrix);
        }
        if entries.len() != rows * cols {
            return Err(FountainError::DimensionMismatch {
                left: entries.len(),
                right: rows * cols,
            });
        }
        if let Some(&value) = entries.iter().find(|&&v| v >= q) {
            return Err(FountainError::EntryOutOfField { value, q });
        }
        Ok(DataMatrix { rows, cols, q, entries })
    }

    /// Uniform random matrix, reproducible from the seed.
    pub fn random(rows: usize, cols: usize, q: u64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = (0..rows * cols).map(|_| rng.gen_range(0..q)).collect();
        DataMatrix { rows, cols, q, entries }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn modulus(&self) -> u64 {
        self.q
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }
}

/// Input vector with entries in `[0, q)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputVector {
    q: u64,
    entries: Vec<u64>,
}

impl InputVector {
    pub fn new(q: u64, entries: Vec<u64>) -> Result<Self, FountainError> {
        if let Some(&value) = entries.iter().find(|&&v| v >= q) {
            return Err(FountainError::EntryOutOfField { value, q });
        }
        Ok(InputVector { q, entries })
    }

    pub fn random(len: usize, q: u64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = (0..len).map(|_| rng.gen_range(0..q)).collect();
        InputVector { q, entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[u64] {
        &self.entries
    }
}

/// A coded packet: binary combination coefficients over the matrix rows plus
/// the combined row itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedPacket {
    /// Sequence number unique within one encoder stream.
    pub id: u64,
    /// Length-R combination coefficients, row-major over `A`.
    pub gamma: Vec<bool>,
    /// `Σ_{i: gamma_i} A_i mod q`, length C.
    pub payload: Vec<u64>,
}

impl CodedPacket {
    /// Build a packet with explicit coefficients (tests, fixtures).
    pub fn from_gamma(id: u64, gamma: Vec<bool>, matrix: &DataMatrix) -> Result<Self, FountainError> {
        if gamma.len() != matrix.rows() {
            return Err(FountainError::DimensionMismatch {
                left: gamma.len(),
                right: matrix.rows(),
            });
        }
        let payload = combine_rows(&gamma, matrix);
        Ok(CodedPacket { id, gamma, payload })
    }

    pub fn degree(&self) -> usize {
        self.gamma.iter().filter(|&&b| b).count()
    }
}

/// A worker's reported value for one packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComputedResult {
    pub packet_id: u64,
    pub worker_id: usize,
    pub value: u64,
}

fn combine_rows(gamma: &[bool], matrix: &DataMatrix) -> Vec<u64> {
    let q = matrix.modulus();
    let mut payload = vec![0u64; matrix.cols()];
    for (i, &on) in gamma.iter().enumerate() {
        if on {
            for (p, &a) in payload.iter_mut().zip(matrix.row(i)) {
                *p = (*p + a) % q;
            }
        }
    }
    payload
}

/// Degree distribution for the coded-packet stream.
#[derive(Debug, Clone, PartialEq)]
pub enum DegreeDist {
    /// Robust soliton with tuning constant `c` and failure target `delta`.
    RobustSoliton { c: f64, delta: f64 },
    /// Every coefficient an independent fair coin (all-zero rejected).
    /// Useful for small-R tests where soliton degrees are too coarse.
    DenseUniform,
}

impl Default for DegreeDist {
    fn default() -> Self {
        DegreeDist::RobustSoliton { c: 0.03, delta: 0.5 }
    }
}

/// Cumulative degree distribution; index d-1 holds P(degree <= d).
fn soliton_cdf(rows: usize, c: f64, delta: f64) -> Vec<f64> {
    if rows == 1 {
        return vec![1.0];
    }
    let r = rows as f64;
    let mut pmf = vec![0.0f64; rows];
    // ideal soliton
    pmf[0] = 1.0 / r;
    for d in 2..=rows {
        pmf[d - 1] = 1.0 / (d as f64 * (d - 1) as f64);
    }
    // robust spike and tail, skipped when R is too small for them to exist
    let s = c * (r / delta).ln() * r.sqrt();
    if s > 1.0 {
        let spike = ((r / s).floor() as usize).clamp(1, rows);
        for d in 1..spike {
            pmf[d - 1] += s / (r * d as f64);
        }
        let tail = s * (s / delta).ln() / r;
        if tail > 0.0 {
            pmf[spike - 1] += tail;
        }
    }
    let total: f64 = pmf.iter().sum();
    let mut acc = 0.0;
    for p in pmf.iter_mut() {
        acc += *p / total;
        *p = acc;
    }
    pmf[rows - 1] = 1.0;
    pmf
}

/// Stateful packet source: holds the degree CDF, the id counter, and its own
/// RNG stream. Owned by a single logical master.
#[derive(Debug, Clone)]
pub struct Encoder {
    rows: usize,
    cdf: Option<Vec<f64>>, // None = dense uniform
    next_id: u64,
    rng: ChaCha8Rng,
}

impl Encoder {
    pub fn new(rows: usize, dist: &DegreeDist, seed: u64) -> Self {
        assert!(rows >= 1, "encoder needs at least one row");
        let cdf = match dist {
            DegreeDist::RobustSoliton { c, delta } => Some(soliton_cdf(rows, *c, *delta)),
            DegreeDist::DenseUniform => None,
        };
        Encoder { rows, cdf, next_id: 0, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Draw the next combination vector (never all-zero).
    pub fn sample_gamma(&mut self) -> Vec<bool> {
        match &self.cdf {
            Some(cdf) => {
                let u: f64 = self.rng.gen();
                let degree = cdf.partition_point(|&p| p < u) + 1;
                let degree = degree.min(self.rows);
                let mut gamma = vec![false; self.rows];
                for idx in rand::seq::index::sample(&mut self.rng, self.rows, degree) {
                    gamma[idx] = true;
                }
                gamma
            }
            None => loop {
                let gamma: Vec<bool> = (0..self.rows).map(|_| self.rng.gen()).collect();
                if gamma.iter().any(|&b| b) {
                    return gamma;
                }
            },
        }
    }

    /// Emit the next packet of the stream for `matrix`.
    pub fn encode_next(&mut self, matrix: &DataMatrix) -> CodedPacket {
        assert_eq!(matrix.rows(), self.rows, "encoder/matrix row count mismatch");
        let gamma = self.sample_gamma();
        let payload = combine_rows(&gamma, matrix);
        let id = self.next_id;
        self.next_id += 1;
        CodedPacket { id, gamma, payload }
    }
}

/// The honest worker computation: `payload · x mod q`.
pub fn compute(packet: &CodedPacket, x: &InputVector) -> Result<u64, FountainError> {
    if packet.payload.len() != x.len() {
        return Err(FountainError::DimensionMismatch {
            left: packet.payload.len(),
            right: x.len(),
        });
    }
    let q = x.q;
    let mut acc = 0u64;
    for (&p, &v) in packet.payload.iter().zip(x.entries()) {
        acc = (acc + mul_mod(p % q, v, q)) % q;
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedOutcome {
    /// Row was independent; rank increased.
    Absorbed,
    /// Row was a consistent linear combination of earlier rows.
    Redundant,
}

struct BasisRow {
    /// Normalized row: leading 1 at the pivot column, zeros before it.
    coeffs: Vec<u64>,
    value: u64,
}

/// Incremental Gaussian elimination over `F_q`.
///
/// Rows arrive one at a time as (binary gamma, value) pairs; the decoder
/// maintains a row-echelon basis so rank is exact at every step. Binary
/// gammas with mod-q values rule out XOR peeling, and elimination keeps
/// exact rank accounting for the overhead statistic.
pub struct Decoder {
    q: u64,
    width: usize,
    basis: Vec<Option<BasisRow>>,
    rank: usize,
    fed: usize,
    fed_at_full_rank: Option<usize>,
}

impl Decoder {
    pub fn new(width: usize, q: u64) -> Self {
        assert!(width >= 1 && q >= 2);
        let basis = (0..width).map(|_| None).collect();
        Decoder { q, width, basis, rank: 0, fed: 0, fed_at_full_rank: None }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_complete(&self) -> bool {
        self.rank == self.width
    }

    /// Packets fed so far (independent, redundant, or inconsistent).
    pub fn packets_fed(&self) -> usize {
        self.fed
    }

    /// Packets it took to first reach full rank, if reached.
    pub fn packets_at_full_rank(&self) -> Option<usize> {
        self.fed_at_full_rank
    }

    /// Realized decoding overhead: packets needed for full rank over the
    /// minimum, as a fraction of the minimum.
    pub fn realized_overhead(&self) -> Option<f64> {
        self.fed_at_full_rank.map(|n| n as f64 / self.width as f64 - 1.0)
    }

    pub fn feed(&mut self, gamma: &[bool], value: u64) -> Result<FeedOutcome, DecodeError> {
        if gamma.len() != self.width {
            return Err(DecodeError::BadRowLength { expected: self.width, got: gamma.len() });
        }
        self.fed += 1;
        let q = self.q;
        let mut row: Vec<u64> = gamma.iter().map(|&b| u64::from(b)).collect();
        let mut value = value % q;
        let mut col = 0;
        while col < self.width {
            if row[col] == 0 {
                col += 1;
                continue;
            }
            match &self.basis[col] {
                Some(b) => {
                    // eliminate: row -= row[col] * basis
                    let m = row[col];
                    for (rv, bv) in row[col..].iter_mut().zip(&b.coeffs[col..]) {
                        *rv = (*rv + q - mul_mod(m, *bv, q)) % q;
                    }
                    value = (value + q - mul_mod(m, b.value, q)) % q;
                    col += 1;
                }
                None => {
                    // normalize and install as the pivot row for this column
                    let inv = pow_mod(row[col], q - 2, q);
                    for rv in row[col..].iter_mut() {
                        *rv = mul_mod(*rv, inv, q);
                    }
                    value = mul_mod(value, inv, q);
                    self.basis[col] = Some(BasisRow { coeffs: row, value });
                    self.rank += 1;
                    if self.rank == self.width && self.fed_at_full_rank.is_none() {
                        self.fed_at_full_rank = Some(self.fed);
                    }
                    return Ok(FeedOutcome::Absorbed);
                }
            }
        }
        if value == 0 {
            Ok(FeedOutcome::Redundant)
        } else {
            Err(DecodeError::Inconsistent)
        }
    }

    /// Back-substitute the echelon basis into the solution vector.
    pub fn solve(&self) -> Result<Vec<u64>, DecodeError> {
        if self.rank < self.width {
            return Err(DecodeError::InsufficientRank { rank: self.rank });
        }
        let q = self.q;
        let mut solution = vec![0u64; self.width];
        for col in (0..self.width).rev() {
            let b = self.basis[col].as_ref().expect("full rank");
            let mut v = b.value;
            for k in col + 1..self.width {
                if b.coeffs[k] != 0 {
                    v = (v + q - mul_mod(b.coeffs[k], solution[k], q)) % q;
                }
            }
            solution[col] = v;
        }
        Ok(solution)
    }
}

/// One-shot decode of a batch of (gamma, value) rows.
///
/// Returns the unique `v` with `Σ_i gamma_i v_i = value mod q` for every row,
/// i.e. `A·x mod q` when the rows are honest outputs of the encoder.
pub fn decode(results: &[(Vec<bool>, u64)], q: u64) -> Result<Vec<u64>, DecodeError> {
    let width = results.first().map(|(g, _)| g.len()).unwrap_or(0);
    if width == 0 {
        return Err(DecodeError::InsufficientRank { rank: 0 });
    }
    let mut decoder = Decoder::new(width, q);
    for (gamma, value) in results {
        match decoder.feed(gamma, *value) {
            Ok(_) => {}
            Err(e @ DecodeError::Inconsistent) => return Err(e),
            Err(e @ DecodeError::BadRowLength { .. }) => return Err(e),
            Err(_) => unreachable!(),
        }
    }
    decoder.solve()
}

/// GF(2) rank tracker over the binary combination vectors.
///
/// Used to measure encoder overhead at large R without paying for field
/// elimination: binary rank R certifies that the `F_q` decoder has full rank
/// too (an integer matrix with an odd minor stays nonsingular mod an odd
/// prime except when the prime divides it), so the overhead measured here is
/// a conservative upper estimate of the decoder's.
struct BinaryRank {
    words: usize,
    basis: Vec<Option<Vec<u64>>>,
    rank: usize,
}

impl BinaryRank {
    fn new(width: usize) -> Self {
        let words = width.div_ceil(64);
        BinaryRank { words, basis: (0..width).map(|_| None).collect(), rank: 0 }
    }

    fn absorb(&mut self, gamma: &[bool]) -> bool {
        let mut row = vec![0u64; self.words];
        for (i, &b) in gamma.iter().enumerate() {
            if b {
                row[i / 64] |= 1 << (i % 64);
            }
        }
        loop {
            let pivot = match first_set_bit(&row) {
                Some(p) => p,
                None => return false,
            };
            match &self.basis[pivot] {
                Some(b) => {
                    for (r, v) in row.iter_mut().zip(b) {
                        *r ^= v;
                    }
                }
                None => {
                    self.basis[pivot] = Some(row);
                    self.rank += 1;
                    return true;
                }
            }
        }
    }
}

fn first_set_bit(words: &[u64]) -> Option<usize> {
    for (i, &w) in words.iter().enumerate() {
        if w != 0 {
            return Some(i * 64 + w.trailing_zeros() as usize);
        }
    }
    None
}

/// Draw packets from a fresh encoder stream until the binary combination
/// matrix reaches rank `rows`; returns the realized overhead
/// `(packets needed)/rows - 1`.
pub fn measure_overhead(rows: usize, dist: &DegreeDist, seed: u64) -> f64 {
    let mut encoder = Encoder::new(rows, dist, seed);
    let mut rank = BinaryRank::new(rows);
    let mut drawn = 0usize;
    while rank.rank < rows {
        rank.absorb(&encoder.sample_gamma());
        drawn += 1;
    }
    drawn as f64 / rows as f64 - 1.0
}
