//! Deterministic partition code.
//!
//! A message is an ordered partition of the `n_eff` used molecule types into
//! `s` subsets of equal size. Subset `i` receives a share `R(i)` of the pool
//! following a decreasing arithmetic ladder, so every type in subset `i`
//! carries `N(i)` copies and `N(1) > N(2) > ... > N(s)`. Decoding sorts the
//! observed read counts and cuts the sorted order into consecutive subsets.

use num_bigint::BigUint;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{CountVector, ReadCounts};
use crate::params::DerivedSizes;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PartitionError {
    #[error("M = {molecules} is smaller than the {n_eff} used molecule types")]
    TooFewMolecules { molecules: u64, n_eff: u64 },
    #[error("encoding infeasible at these parameters: {0}")]
    Infeasible(String),
    #[error("message index is not below the codebook size {size}")]
    IndexOutOfRange { size: BigUint },
    #[error("malformed assignment: {0}")]
    MalformedAssignment(String),
    #[error("layout needs at least one subset of at least one type")]
    EmptyLayout,
}

/// Why the sort decoder refused to produce a message.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DecodeFailure {
    /// Some used type received no reads (or, under the relaxed rule, more than
    /// `subset_size` of them did).
    #[error("{zeros} used molecule type(s) received zero reads")]
    ZeroCount { zeros: u64 },
    #[error("read vector covers {got} types, need at least {need}")]
    TooFewTypes { got: usize, need: u64 },
}

/// Arithmetic ladder `R(s) = 1/s^2`, `d = 2/s^2`, `R(l) = R(s) + d (s - l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightLadder {
    weights: Vec<BigRational>,
    common_difference: BigRational,
}

impl WeightLadder {
    pub fn arithmetic(num_subsets: u64) -> Self {
        weight_ladder(num_subsets)
    }

    /// `R(1), ..., R(s)`.
    pub fn weights(&self) -> &[BigRational] {
        &self.weights
    }

    pub fn common_difference(&self) -> &BigRational {
        &self.common_difference
    }

    pub fn sum(&self) -> BigRational {
        self.weights.iter().fold(BigRational::zero(), |acc, w| acc + w)
    }
}

pub fn weight_ladder(num_subsets: u64) -> WeightLadder {
    let s = num_subsets.max(1);
    let s2 = BigRational::from_integer((s * s).into());
    let last = BigRational::one() / &s2;
    let d = BigRational::from_integer(2.into()) / &s2;
    let weights = (1..=s)
        .map(|l| &last + &d * BigRational::from_integer((s - l).into()))
        .collect();
    WeightLadder { weights, common_difference: d }
}

/// Copy counts: `N(i)` for subsets `2..=s` and the per-type counts of subset 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetCounts {
    /// `N(2), ..., N(s)`.
    pub later: Vec<u64>,
    /// Counts of the `subset_size` types placed in subset 1, in ascending type order.
    pub first_subset_counts: Vec<u64>,
}

impl SubsetCounts {
    pub fn subset_size(&self) -> u64 {
        self.first_subset_counts.len() as u64
    }

    pub fn total(&self) -> u64 {
        self.subset_size() * self.later.iter().sum::<u64>() + self.first_subset_counts.iter().sum::<u64>()
    }
}

/// Evaluate `N(i) = floor(M R(i) / subset_size)` for `i >= 2` exactly and
/// spread the remaining budget over the types of subset 1, extra units going
/// to the lowest type indices.
pub fn subset_counts(molecules: u64, sizes: &DerivedSizes) -> Result<SubsetCounts, PartitionError> {
    let (s, size) = (sizes.num_subsets, sizes.subset_size);
    if s == 0 || size == 0 {
        return Err(PartitionError::EmptyLayout);
    }
    if molecules < sizes.n_eff {
        return Err(PartitionError::TooFewMolecules { molecules, n_eff: sizes.n_eff });
    }
    let ladder = weight_ladder(s);
    let scale = BigRational::new(molecules.into(), size.into());
    let later: Vec<u64> = ladder.weights()[1..]
        .iter()
        .map(|r| (&scale * r).floor().to_integer().to_u64().expect("N(i) <= M"))
        .collect();
    let used = size * later.iter().sum::<u64>();
    let remaining = molecules - used;
    let (base, extra) = remaining.div_rem(&size);
    let first_subset_counts: Vec<u64> = (0..size).map(|j| base + u64::from(j < extra)).collect();

    if let Some(&n2) = later.first() {
        if base <= n2 {
            return Err(PartitionError::Infeasible(format!(
                "subset-1 count {base} does not exceed N(2) = {n2}"
            )));
        }
    }
    if let Some(w) = later.windows(2).find(|w| w[0] <= w[1]) {
        return Err(PartitionError::Infeasible(format!(
            "adjacent subsets share the copy count {}; M is too small to separate them",
            w[0]
        )));
    }
    if later.last().is_some_and(|&n| n == 0) || base == 0 {
        return Err(PartitionError::Infeasible("some subset would receive zero copies".into()));
    }
    Ok(SubsetCounts { later, first_subset_counts })
}

/// Number of messages `n_eff! / (subset_size!)^s`.
pub fn codebook_size(sizes: &DerivedSizes) -> BigUint {
    let factorial = |k: u64| (1..=k).fold(BigUint::one(), |acc, i| acc * i);
    factorial(sizes.n_eff) / factorial(sizes.subset_size).pow(sizes.num_subsets as u32)
}

/// Position of a message in the lexicographic order of assignment vectors.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MessageIndex(#[serde(with = "biguint_decimal")] pub BigUint);

mod biguint_decimal {
    use num_bigint::BigUint;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_str_radix(10))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(D::Error::custom)
    }
}

impl From<u64> for MessageIndex {
    fn from(v: u64) -> Self {
        Self(BigUint::from(v))
    }
}

/// A message: `assignment[t]` is the 1-based subset of used type `t`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PartitionMessage {
    pub assignment: Vec<u32>,
}

impl PartitionMessage {
    pub fn new(assignment: Vec<u32>, sizes: &DerivedSizes) -> Result<Self, PartitionError> {
        let msg = Self { assignment };
        msg.validate(sizes)?;
        Ok(msg)
    }

    /// The message whose subsets are consecutive runs of type indices.
    pub fn identity(sizes: &DerivedSizes) -> Self {
        let assignment = (0..sizes.n_eff).map(|t| (t / sizes.subset_size) as u32 + 1).collect();
        Self { assignment }
    }

    pub fn validate(&self, sizes: &DerivedSizes) -> Result<(), PartitionError> {
        if self.assignment.len() as u64 != sizes.n_eff {
            return Err(PartitionError::MalformedAssignment(format!(
                "length {} but n_eff = {}",
                self.assignment.len(),
                sizes.n_eff
            )));
        }
        let mut multiplicity = vec![0u64; sizes.num_subsets as usize];
        for &a in &self.assignment {
            if a == 0 || u64::from(a) > sizes.num_subsets {
                return Err(PartitionError::MalformedAssignment(format!(
                    "subset {a} outside 1..={}",
                    sizes.num_subsets
                )));
            }
            multiplicity[a as usize - 1] += 1;
        }
        if let Some((i, &m)) = multiplicity.iter().enumerate().find(|(_, &m)| m != sizes.subset_size) {
            return Err(PartitionError::MalformedAssignment(format!(
                "subset {} has {m} members, expected {}",
                i + 1,
                sizes.subset_size
            )));
        }
        Ok(())
    }
}

/// Lexicographic unranking. The number of completions after placing a type in
/// subset `j` is `total * cap_j / remaining`, which stays an exact integer.
pub fn unrank(index: &MessageIndex, sizes: &DerivedSizes) -> Result<PartitionMessage, PartitionError> {
    let size = codebook_size(sizes);
    if index.0 >= size {
        return Err(PartitionError::IndexOutOfRange { size });
    }
    let mut caps = vec![sizes.subset_size; sizes.num_subsets as usize];
    let mut completions = size;
    let mut idx = index.0.clone();
    let mut assignment = Vec::with_capacity(sizes.n_eff as usize);
    for remaining in (1..=sizes.n_eff).rev() {
        for (j, cap) in caps.iter_mut().enumerate() {
            if *cap == 0 {
                continue;
            }
            let count = &completions * *cap / remaining;
            if idx < count {
                assignment.push(j as u32 + 1);
                *cap -= 1;
                completions = count;
                break;
            }
            idx -= count;
        }
    }
    Ok(PartitionMessage { assignment })
}

pub fn rank(msg: &PartitionMessage, sizes: &DerivedSizes) -> Result<MessageIndex, PartitionError> {
    msg.validate(sizes)?;
    let mut caps = vec![sizes.subset_size; sizes.num_subsets as usize];
    let mut completions = codebook_size(sizes);
    let mut idx = BigUint::zero();
    for (pos, &a) in msg.assignment.iter().enumerate() {
        let remaining = sizes.n_eff - pos as u64;
        let chosen = a as usize - 1;
        for &cap in caps.iter().take(chosen) {
            if cap > 0 {
                idx += &completions * cap / remaining;
            }
        }
        completions = &completions * caps[chosen] / remaining;
        caps[chosen] -= 1;
    }
    Ok(MessageIndex(idx))
}

/// Build the molecular pool of a message. Types beyond `n_eff` get no copies.
pub fn encode(msg: &PartitionMessage, counts: &SubsetCounts, sizes: &DerivedSizes) -> CountVector {
    let mut out = vec![0u64; sizes.n.max(sizes.n_eff) as usize];
    let mut first = counts.first_subset_counts.iter();
    for (slot, &a) in out.iter_mut().zip(&msg.assignment) {
        *slot = if a == 1 {
            *first.next().expect("subset 1 has subset_size members")
        } else {
            counts.later[a as usize - 2]
        };
    }
    CountVector::new(out)
}

/// Sort decoder. Types are ordered by read count (descending, ties to the lower
/// index) and consecutive blocks of `subset_size` form subsets `1, 2, ...`.
///
/// With `strict_zero_rule` any used type with zero reads is a failure;
/// otherwise the decoder only gives up when more than `subset_size` used types
/// are unseen.
pub fn decode(reads: &ReadCounts, sizes: &DerivedSizes, strict_zero_rule: bool) -> Result<PartitionMessage, DecodeFailure> {
    let n_eff = sizes.n_eff as usize;
    if reads.len() < n_eff {
        return Err(DecodeFailure::TooFewTypes { got: reads.len(), need: sizes.n_eff });
    }
    let counts = &reads.counts()[..n_eff];
    let zeros = counts.iter().filter(|&&c| c == 0).count() as u64;
    let limit = if strict_zero_rule { 0 } else { sizes.subset_size };
    if zeros > limit {
        return Err(DecodeFailure::ZeroCount { zeros });
    }
    let mut order: Vec<usize> = (0..n_eff).collect();
    order.sort_unstable_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let mut assignment = vec![0u32; n_eff];
    for (position, &t) in order.iter().enumerate() {
        assignment[t] = (position as u64 / sizes.subset_size) as u32 + 1;
    }
    Ok(PartitionMessage { assignment })
}

/// JSON form of a codeword for round-trip tooling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodewordRecord {
    pub assignment: Vec<u32>,
    pub counts: Vec<u64>,
}
