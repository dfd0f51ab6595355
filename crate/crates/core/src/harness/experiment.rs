use std::fmt;
use std::ops::Add;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{wilson_interval, Z95};
use super::HarnessError;
use crate::bounds::{pc_error_bound, rc_error_bound, BoundBreakdown, RcBound};
use crate::channel::{sample_reads_with, RngStream};
use crate::params::{DerivedSizes, SystemParams};
use crate::partition::{self, decode, encode, subset_counts, DecodeFailure, PartitionMessage, SubsetCounts};
use crate::random_coding::{generate_codebook, ml_decode, Codebook};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Partition,
    RandomCoding,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Partition => "partition",
            Scheme::RandomCoding => "random_coding",
        })
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "partition" | "pc" => Ok(Scheme::Partition),
            "random_coding" | "rc" => Ok(Scheme::RandomCoding),
            _ => Err(format!("unknown scheme '{s}'")),
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_parallelism() -> usize {
    1
}

fn default_delta() -> f64 {
    1.0
}

/// One Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub params: SystemParams,
    pub scheme: Scheme,
    pub trials: u64,
    pub master_seed: u64,
    /// Random coding only.
    #[serde(default)]
    pub codebook_size: Option<usize>,
    #[serde(default = "default_true")]
    pub strict_zero_rule: bool,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Rate slack of the random-coding bound reported alongside the estimate.
    #[serde(default = "default_delta")]
    pub rc_delta: f64,
}

impl ExperimentSpec {
    pub fn partition(params: SystemParams, trials: u64, master_seed: u64) -> Self {
        Self {
            params,
            scheme: Scheme::Partition,
            trials,
            master_seed,
            codebook_size: None,
            strict_zero_rule: true,
            parallelism: 1,
            rc_delta: default_delta(),
        }
    }

    pub fn random_coding(params: SystemParams, codebook_size: usize, trials: u64, master_seed: u64) -> Self {
        Self {
            scheme: Scheme::RandomCoding,
            codebook_size: Some(codebook_size),
            ..Self::partition(params, trials, master_seed)
        }
    }

    pub fn with_parallelism(mut self, threads: usize) -> Self {
        self.parallelism = threads.max(1);
        self
    }

    pub fn with_strict_zero_rule(mut self, strict: bool) -> Self {
        self.strict_zero_rule = strict;
        self
    }

    fn validate(&self) -> Result<DerivedSizes, HarnessError> {
        if self.trials == 0 {
            return Err(HarnessError::InvalidSpec("trials must be at least 1".into()));
        }
        Ok(self.params.derive()?)
    }
}

/// Aggregated trial outcomes. Addition is commutative, so any reduction
/// order gives the same totals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub trials: u64,
    pub zero_count_errors: u64,
    pub order_errors: u64,
    pub all_infinite_events: u64,
}

impl Tally {
    pub fn errors(&self) -> u64 {
        self.zero_count_errors + self.order_errors
    }
}

impl Add for Tally {
    type Output = Tally;

    fn add(self, o: Tally) -> Tally {
        Tally {
            trials: self.trials + o.trials,
            zero_count_errors: self.zero_count_errors + o.zero_count_errors,
            order_errors: self.order_errors + o.order_errors,
            all_infinite_events: self.all_infinite_events + o.all_infinite_events,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub sizes: DerivedSizes,
    /// Decimal message count of the code that was simulated.
    pub codebook_size: String,
    pub errors: u64,
    pub error_rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub bound_term1: f64,
    pub bound_term2: f64,
    pub bound_total: f64,
    pub bound_breakdown: Option<BoundBreakdown>,
    pub rc_bound: Option<RcBound>,
    /// Partition code: a used type got no reads. Always 0 for random coding.
    pub zero_count_errors: u64,
    /// Partition code: wrong order. Random coding: wrong codeword.
    pub order_errors: u64,
    /// Random coding: decodes where every codeword had infinite divergence.
    pub all_infinite_events: u64,
    pub wall_time_ms: u64,
}

fn run_trials<F>(trials: u64, threads: usize, trial: F) -> Result<Tally, HarnessError>
where
    F: Fn(u64) -> Tally + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| HarnessError::InvalidSpec(format!("thread pool: {e}")))?;
    Ok(pool.install(|| (0..trials).into_par_iter().map(&trial).reduce(Tally::default, Tally::add)))
}

fn finish(
    spec: &ExperimentSpec,
    sizes: DerivedSizes,
    codebook_size: String,
    tally: Tally,
    bounds: (f64, f64, f64),
    bound_breakdown: Option<BoundBreakdown>,
    rc_bound: Option<RcBound>,
    started: Instant,
) -> ExperimentResult {
    let errors = tally.errors();
    let (ci_low, ci_high) = wilson_interval(errors, tally.trials, Z95);
    ExperimentResult {
        spec: spec.clone(),
        sizes,
        codebook_size,
        errors,
        error_rate: errors as f64 / tally.trials as f64,
        ci_low,
        ci_high,
        bound_term1: bounds.0,
        bound_term2: bounds.1,
        bound_total: bounds.2,
        bound_breakdown,
        rc_bound,
        zero_count_errors: tally.zero_count_errors,
        order_errors: tally.order_errors,
        all_infinite_events: tally.all_infinite_events,
        wall_time_ms: started.elapsed().as_millis() as u64,
    }
}

/// One partition-code trial: uniform message, encode, read, decode.
pub fn pc_trial(sizes: &DerivedSizes, counts: &SubsetCounts, strict: bool, stream: &RngStream) -> Tally {
    let mut rng = stream.rng();
    let mut msg = PartitionMessage::identity(sizes);
    // a uniform shuffle of the multiset is uniform over ordered partitions
    msg.assignment.shuffle(&mut rng);
    let pool = encode(&msg, counts, sizes);
    let reads = sample_reads_with(&pool, sizes.reads, &mut rng).expect("pool holds M >= 1 molecules");
    let mut tally = Tally { trials: 1, ..Tally::default() };
    match decode(&reads, sizes, strict) {
        Err(DecodeFailure::ZeroCount { .. }) => tally.zero_count_errors = 1,
        Err(DecodeFailure::TooFewTypes { .. }) => unreachable!("pool covers n >= n_eff types"),
        Ok(decoded) if decoded != msg => tally.order_errors = 1,
        Ok(_) => {}
    }
    tally
}

pub fn run_pc_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult, HarnessError> {
    let started = Instant::now();
    let sizes = spec.validate()?;
    let counts = subset_counts(spec.params.molecules, &sizes)?;
    let tally = run_trials(spec.trials, spec.parallelism, |t| {
        pc_trial(&sizes, &counts, spec.strict_zero_rule, &RngStream::new(spec.master_seed, t))
    })?;
    let bound = pc_error_bound(&spec.params);
    Ok(finish(
        spec,
        sizes,
        partition::codebook_size(&sizes).to_string(),
        tally,
        (bound.term1(), bound.term2(), bound.total),
        Some(bound),
        None,
        started,
    ))
}

/// The codebook an RC experiment uses, reproducible from its spec.
pub fn rc_codebook(spec: &ExperimentSpec) -> Result<Codebook, HarnessError> {
    let sizes = spec.validate()?;
    let size = spec
        .codebook_size
        .ok_or_else(|| HarnessError::InvalidSpec("random coding needs a codebook size".into()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.parallelism.max(1))
        .build()
        .map_err(|e| HarnessError::InvalidSpec(format!("thread pool: {e}")))?;
    Ok(pool.install(|| generate_codebook(size, sizes.n as usize, spec.params.molecules, spec.master_seed))?)
}

/// One random-coding trial against a fixed codebook.
pub fn rc_trial(book: &Codebook, reads: u64, stream: &RngStream) -> Tally {
    let mut rng = stream.rng();
    let message = rng.random_range(0..book.len());
    let pool = book.codewords()[message].counts();
    let observed = sample_reads_with(pool, reads, &mut rng).expect("quantized pools are nonempty");
    let decision = ml_decode(&observed, book).expect("lengths agree");
    Tally {
        trials: 1,
        zero_count_errors: 0,
        order_errors: u64::from(decision.index != message),
        all_infinite_events: u64::from(decision.all_infinite),
    }
}

pub fn run_rc_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult, HarnessError> {
    let started = Instant::now();
    let sizes = spec.validate()?;
    let book = rc_codebook(spec)?;
    let tally = run_trials(spec.trials, spec.parallelism, |t| {
        rc_trial(&book, sizes.reads, &RngStream::new(spec.master_seed, t))
    })?;
    let rc_bound = rc_error_bound(&spec.params, spec.rc_delta).ok();
    // outside the bound's domain the only valid statement is the trivial one
    let bounds = rc_bound.map_or((1.0, 0.0, 1.0), |b| (b.term1_log.exp().min(1.0), b.term2, b.total));
    Ok(finish(spec, sizes, book.len().to_string(), tally, bounds, None, rc_bound, started))
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult, HarnessError> {
    match spec.scheme {
        Scheme::Partition => run_pc_experiment(spec),
        Scheme::RandomCoding => run_rc_experiment(spec),
    }
}
