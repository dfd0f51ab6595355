//! The noiseless shuffling-sampling channel.
//!
//! A codeword is a pool of molecules described by per-type copy counts. The
//! channel draws `K` reads uniformly with replacement from the pool; since the
//! reads carry no order and no noise, the per-type read counts are a
//! sufficient statistic and nucleotide strings are never materialized.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mathkit::Pmf;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("cannot sample from an empty pool")]
    EmptyPool,
    #[error("number of reads must be positive")]
    NoReads,
    #[error("type index {index} does not fit in {length} symbols over an alphabet of {alphabet}")]
    IndexOutOfRange { index: u64, alphabet: u32, length: u64 },
    #[error("symbol {symbol} is not below alphabet size {alphabet}")]
    BadSymbol { symbol: u32, alphabet: u32 },
}

/// Identifies one independent random stream: a ChaCha8 key derived from the
/// master seed (and a domain tag), with the stream word set to `stream_index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_index: u64,
    #[serde(default)]
    pub domain: u64,
}

/// Stream domain for per-trial channel and message draws.
pub const DOMAIN_TRIALS: u64 = 0;
/// Stream domain for random-code codeword generation.
pub const DOMAIN_CODEBOOK: u64 = 1;

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self { master_seed, stream_index, domain: DOMAIN_TRIALS }
    }

    pub fn in_domain(master_seed: u64, domain: u64, stream_index: u64) -> Self {
        Self { master_seed, stream_index, domain }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let key = self.master_seed ^ self.domain.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        rng.set_stream(self.stream_index);
        rng
    }
}

/// Per-type copy counts of a molecular pool.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CountVector {
    counts: Vec<u64>,
    total: u64,
}

impl CountVector {
    pub fn new(counts: Vec<u64>) -> Self {
        let total = counts.iter().sum();
        Self { counts, total }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn to_pmf(&self) -> Option<Pmf> {
        Pmf::from_counts(&self.counts).ok()
    }
}

/// Per-type counts of the `K` reads returned by the channel.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReadCounts {
    counts: Vec<u64>,
    reads: u64,
}

impl ReadCounts {
    /// Builds read counts from explicit values; `K` is their sum.
    pub fn new(counts: Vec<u64>) -> Result<Self, ChannelError> {
        let reads: u64 = counts.iter().sum();
        if reads == 0 {
            return Err(ChannelError::NoReads);
        }
        Ok(Self { counts, reads })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// `K`.
    pub fn reads(&self) -> u64 {
        self.reads
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Draw `K` reads with replacement from `pool` using the given stream.
pub fn sample_reads(pool: &CountVector, reads: u64, stream: &RngStream) -> Result<ReadCounts, ChannelError> {
    sample_reads_with(pool, reads, &mut stream.rng())
}

/// Multinomial draw of `K` reads with cell probabilities `counts_i / total`,
/// by sequential conditional binomials: cell `i` receives
/// `Bin(K_remaining, c_i / total_remaining)`.
pub fn sample_reads_with<R: rand::Rng + ?Sized>(
    pool: &CountVector,
    reads: u64,
    rng: &mut R,
) -> Result<ReadCounts, ChannelError> {
    if pool.total == 0 {
        return Err(ChannelError::EmptyPool);
    }
    if reads == 0 {
        return Err(ChannelError::NoReads);
    }
    let mut out = vec![0u64; pool.counts.len()];
    let mut reads_left = reads;
    let mut mass_left = pool.total;
    for (slot, &c) in out.iter_mut().zip(&pool.counts) {
        if reads_left == 0 {
            break;
        }
        if c == 0 {
            continue;
        }
        let drawn = if c >= mass_left {
            reads_left
        } else {
            let p = c as f64 / mass_left as f64;
            Binomial::new(reads_left, p).expect("probability in (0, 1)").sample(rng)
        };
        *slot = drawn;
        reads_left -= drawn;
        mass_left -= c;
    }
    debug_assert_eq!(reads_left, 0);
    Ok(ReadCounts { counts: out, reads })
}

/// Empirical frequency vector `counts / K`.
pub fn to_frequency(reads: &ReadCounts) -> Pmf {
    Pmf::from_counts(&reads.counts).expect("read counts sum to K >= 1")
}

/// Base-`|A|` expansion of a molecule type index into `length` symbols,
/// most significant first.
pub fn type_to_symbols(index: u64, alphabet: u32, length: u64) -> Result<Vec<u32>, ChannelError> {
    let base = u64::from(alphabet);
    let mut symbols = vec![0u32; length as usize];
    let mut rest = index;
    for s in symbols.iter_mut().rev() {
        *s = (rest % base) as u32;
        rest /= base;
    }
    if rest != 0 || alphabet < 2 {
        return Err(ChannelError::IndexOutOfRange { index, alphabet, length });
    }
    Ok(symbols)
}

/// Inverse of [`type_to_symbols`].
pub fn symbols_to_type(symbols: &[u32], alphabet: u32) -> Result<u64, ChannelError> {
    symbols.iter().try_fold(0u64, |acc, &s| {
        if s >= alphabet {
            return Err(ChannelError::BadSymbol { symbol: s, alphabet });
        }
        acc.checked_mul(u64::from(alphabet))
            .and_then(|v| v.checked_add(u64::from(s)))
            .ok_or(ChannelError::IndexOutOfRange { index: u64::MAX, alphabet, length: symbols.len() as u64 })
    })
}

/// Render a molecule type as a string; quaternary alphabets use `ACGT`.
pub fn type_to_string(index: u64, alphabet: u32, length: u64) -> Result<String, ChannelError> {
    let symbols = type_to_symbols(index, alphabet, length)?;
    Ok(if alphabet == 4 {
        symbols.iter().map(|&s| b"ACGT"[s as usize] as char).collect()
    } else {
        symbols.iter().map(|s| char::from_digit(*s, 36).unwrap_or('?')).collect()
    })
}
