//! Random coding with quantized Dirichlet codewords and the minimum-KL decoder.
//!
//! Each codeword is a uniform draw `P` from the probability simplex, stored
//! as `floor(M * P(i))` copies of type `i`. The decoder picks the codeword
//! whose normalized quantized PMF is closest in KL divergence to the observed
//! read frequencies, which is the maximum-likelihood rule for this channel.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{to_frequency, CountVector, ReadCounts, RngStream, DOMAIN_CODEBOOK};
use crate::mathkit::{kl_divergence_slices, Pmf};

pub const CODEBOOK_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RandomCodingError {
    #[error("the simplex needs at least 2 categories, got {0}")]
    TooFewCategories(usize),
    #[error("quantization with M = {molecules} left every count at zero")]
    EmptyQuantization { molecules: u64 },
    #[error("M = {molecules} is smaller than n = {n}")]
    TooFewMolecules { molecules: u64, n: usize },
    #[error("a codebook needs at least 2 codewords, got {0}")]
    CodebookTooSmall(usize),
    #[error("read vector has {got} types, codebook has {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("unsupported codebook format version {0}")]
    FormatVersion(u32),
    #[error("codebook I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("codebook JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// A point in the interior of the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimplexPoint {
    probs: Vec<f64>,
}

impl SimplexPoint {
    pub fn new(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Uniform draw from the simplex: `n` i.i.d. `Exp(1)` variables, normalized.
pub fn draw_simplex(n: usize, stream: &RngStream) -> Result<SimplexPoint, RandomCodingError> {
    draw_simplex_with(n, &mut stream.rng())
}

pub fn draw_simplex_with<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<SimplexPoint, RandomCodingError> {
    if n < 2 {
        return Err(RandomCodingError::TooFewCategories(n));
    }
    let mut probs: Vec<f64> = (0..n)
        .map(|_| loop {
            let x: f64 = Exp1.sample(rng);
            if x > 0.0 {
                break x;
            }
        })
        .collect();
    let sum: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= sum);
    Ok(SimplexPoint { probs })
}

/// Pool `floor(M * P(i))` and its normalized PMF.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedCodeword {
    counts: CountVector,
    pmf: Pmf,
}

impl QuantizedCodeword {
    pub fn from_counts(counts: Vec<u64>) -> Result<Self, RandomCodingError> {
        let counts = CountVector::new(counts);
        let pmf = counts.to_pmf().ok_or(RandomCodingError::EmptyQuantization { molecules: 0 })?;
        Ok(Self { counts, pmf })
    }

    pub fn counts(&self) -> &CountVector {
        &self.counts
    }

    pub fn pmf(&self) -> &Pmf {
        &self.pmf
    }
}

pub fn quantize(p: &SimplexPoint, molecules: u64) -> Result<QuantizedCodeword, RandomCodingError> {
    let m = molecules as f64;
    let counts: Vec<u64> = p.probs.iter().map(|&x| (m * x).floor() as u64).collect();
    if counts.iter().all(|&c| c == 0) {
        return Err(RandomCodingError::EmptyQuantization { molecules });
    }
    QuantizedCodeword::from_counts(counts)
}

/// A random codebook together with the seed that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    codewords: Vec<QuantizedCodeword>,
    master_seed: u64,
    molecules: u64,
}

impl Codebook {
    pub fn codewords(&self) -> &[QuantizedCodeword] {
        &self.codewords
    }

    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    /// Number of molecule types.
    pub fn num_types(&self) -> usize {
        self.codewords.first().map_or(0, |c| c.counts.len())
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn molecules(&self) -> u64 {
        self.molecules
    }

    /// Builds a codebook from explicit pools (e.g. hand-made test books).
    pub fn from_pools(pools: Vec<Vec<u64>>, master_seed: u64, molecules: u64) -> Result<Self, RandomCodingError> {
        let codewords = pools.into_iter().map(QuantizedCodeword::from_counts).collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = codewords.first() {
            if let Some(bad) = codewords.iter().find(|c| c.counts.len() != first.counts.len()) {
                return Err(RandomCodingError::LengthMismatch { got: bad.counts.len(), expected: first.counts.len() });
            }
        }
        Ok(Self { codewords, master_seed, molecules })
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<(), RandomCodingError> {
        let file = CodebookFile {
            format_version: CODEBOOK_FORMAT_VERSION,
            master_seed: self.master_seed,
            molecules: self.molecules,
            n: self.num_types(),
            codewords: self.codewords.iter().map(|c| c.counts.counts().to_vec()).collect(),
        };
        serde_json::to_writer(writer, &file)?;
        Ok(())
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self, RandomCodingError> {
        let file: CodebookFile = serde_json::from_reader(reader)?;
        if file.format_version != CODEBOOK_FORMAT_VERSION {
            return Err(RandomCodingError::FormatVersion(file.format_version));
        }
        Self::from_pools(file.codewords, file.master_seed, file.molecules)
    }
}

#[derive(Serialize, Deserialize)]
struct CodebookFile {
    format_version: u32,
    master_seed: u64,
    #[serde(rename = "M")]
    molecules: u64,
    n: usize,
    codewords: Vec<Vec<u64>>,
}

/// Codeword `m` is drawn from stream `m` of the codebook domain, so the book
/// does not depend on how generation is scheduled.
pub fn generate_codebook(size: usize, n: usize, molecules: u64, master_seed: u64) -> Result<Codebook, RandomCodingError> {
    if size < 2 {
        return Err(RandomCodingError::CodebookTooSmall(size));
    }
    if n < 2 {
        return Err(RandomCodingError::TooFewCategories(n));
    }
    if (molecules as u128) < n as u128 {
        return Err(RandomCodingError::TooFewMolecules { molecules, n });
    }
    let codewords = (0..size as u64)
        .into_par_iter()
        .map(|m| {
            let point = draw_simplex(n, &RngStream::in_domain(master_seed, DOMAIN_CODEBOOK, m))?;
            quantize(&point, molecules)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Codebook { codewords, master_seed, molecules })
}

/// Outcome of minimum-KL decoding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlDecision {
    pub index: usize,
    pub divergence: f64,
    /// Every codeword missed an observed type; `index` is then 0.
    pub all_infinite: bool,
}

/// `argmin_m KL(Q_y || P_m)`, ties to the lowest index.
pub fn ml_decode(reads: &ReadCounts, book: &Codebook) -> Result<MlDecision, RandomCodingError> {
    if book.is_empty() {
        return Err(RandomCodingError::CodebookTooSmall(0));
    }
    if reads.len() != book.num_types() {
        return Err(RandomCodingError::LengthMismatch { got: reads.len(), expected: book.num_types() });
    }
    let q = to_frequency(reads);
    let mut best = MlDecision { index: 0, divergence: f64::INFINITY, all_infinite: true };
    for (m, cw) in book.codewords.iter().enumerate() {
        let d = kl_divergence_slices(q.probs(), cw.pmf.probs()).expect("lengths checked");
        if d < best.divergence {
            best = MlDecision { index: m, divergence: d, all_infinite: false };
        }
    }
    Ok(best)
}
