//! Self-checks run by the `verify` subcommand: numeric inequalities, codec
//! invariants, density identities and a channel moment identity. Each check
//! reports how many cases it evaluated and how many failed.

use std::str::FromStr;

use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bounds::{density_crossing_beta, pc_density_target, rc_density_target, LogBase};
use crate::channel::{sample_reads_with, to_frequency, CountVector, ReadCounts};
use crate::mathkit::{
    am_gm_gap, am_gm_gap_lower_bound, chi2_divergence_slices, gordon_sandwich_holds, kl_divergence_slices,
    log_gamma, mortici_bound_holds,
};
use crate::params::DerivedSizes;
use crate::partition::{codebook_size, decode, encode, rank, subset_counts, unrank, weight_ladder, MessageIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    All,
    Mathkit,
    Codec,
    Bounds,
    Channel,
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(Suite::All),
            "mathkit" => Ok(Suite::Mathkit),
            "codec" => Ok(Suite::Codec),
            "bounds" => Ok(Suite::Bounds),
            "channel" => Ok(Suite::Channel),
            _ => Err(format!("unknown suite '{s}' (all, mathkit, codec, bounds, channel)")),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub cases: u64,
    pub failures: u64,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

fn check(name: &'static str, cases: impl IntoIterator<Item = bool>) -> CheckOutcome {
    let (mut n, mut bad) = (0, 0);
    for ok in cases {
        n += 1;
        bad += u64::from(!ok);
    }
    CheckOutcome { name, cases: n, failures: bad }
}

fn random_pmf(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-9).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / sum).collect()
}

fn mathkit_checks(rng: &mut ChaCha8Rng) -> Vec<CheckOutcome> {
    let divergence_pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..10_000)
        .map(|i| {
            let n = 2 + i % 15;
            (random_pmf(rng, n), random_pmf(rng, n))
        })
        .collect();
    let log_grid = |lo: f64, hi: f64, steps: usize| (0..=steps).map(move |i| lo * (hi / lo).powf(i as f64 / steps as f64));
    vec![
        check(
            "kl <= ln(1 + chi2) <= chi2",
            divergence_pairs.iter().map(|(q, p)| {
                let kl = kl_divergence_slices(q, p).unwrap();
                let chi2 = chi2_divergence_slices(q, p).unwrap();
                kl >= 0.0 && kl <= chi2.ln_1p() + 1e-12 && chi2.ln_1p() <= chi2
            }),
        ),
        check("gordon gamma sandwich", log_grid(1e-2, 100.0, 400).map(|t| gordon_sandwich_holds(t).unwrap_or(false))),
        check(
            "gamma(1+x) upper bound",
            std::iter::once(0.0).chain(log_grid(1.0, 1e6, 400)).map(|x| mortici_bound_holds(x).unwrap_or(false)),
        ),
        check(
            "log-gamma recurrence",
            log_grid(1e-3, 1e8, 500).map(|t| {
                let lhs = log_gamma(t + 1.0).unwrap();
                let rhs = log_gamma(t).unwrap() + t.ln();
                let err = (lhs - rhs).abs();
                err <= 1e-10 * lhs.abs().max(rhs.abs()) || err <= 1e-14
            }),
        ),
        check(
            "am-gm binary refinement",
            (0..10_000).map(|_| {
                let a = 10.0 * (1.0 - rng.random::<f64>());
                let b = 10.0 * (1.0 - rng.random::<f64>());
                am_gm_gap(a, b) >= am_gm_gap_lower_bound(a, b).unwrap() * (1.0 - 1e-12)
            }),
        ),
    ]
}

fn codec_checks() -> Vec<CheckOutcome> {
    let layouts = [(1u64, 2u64), (2, 2), (3, 2), (4, 2), (2, 3), (2, 4), (8, 1)];
    let round_trip = layouts.iter().flat_map(|&(s, size)| {
        let sizes = DerivedSizes::from_layout(s, size, 1);
        let total = codebook_size(&sizes);
        let count: u64 = total.try_into().unwrap_or(0);
        (0..count).map(move |i| {
            let idx = MessageIndex::from(i);
            unrank(&idx, &sizes).and_then(|m| rank(&m, &sizes)).is_ok_and(|r| r == idx)
        })
    });
    let self_consistent = [(2u64, 2u64, 12u64), (3, 2, 100), (4, 2, 160), (3, 3, 400)].into_iter().flat_map(|(s, size, m)| {
        let sizes = DerivedSizes::from_layout(s, size, m);
        let counts = subset_counts(m, &sizes).expect("feasible layout");
        let total: u64 = codebook_size(&sizes).try_into().unwrap_or(0);
        (0..total).map(move |i| {
            let msg = unrank(&MessageIndex::from(i), &sizes).unwrap();
            let cw = encode(&msg, &counts, &sizes);
            let reads = ReadCounts::new(cw.counts().to_vec()).unwrap();
            cw.total() == m && decode(&reads, &sizes, true).is_ok_and(|d| d == msg)
        })
    });
    vec![
        check("weight ladders sum to one", (1..=200).map(|s| weight_ladder(s).sum().is_one())),
        check("rank/unrank round trip", round_trip),
        check("noiseless encode/decode", self_consistent),
    ]
}

fn bounds_checks() -> Vec<CheckOutcome> {
    let crossings = [(1.0 / 3.0, 1.0, 1.0 / 3.0), (0.5, 0.5, 0.25), (5.0 / 7.0, 0.2, 1.0 / 7.0)];
    vec![
        check(
            "density crossings (|A| = 2, bits)",
            crossings.iter().map(|&(beta, rho, v)| {
                (rc_density_target(beta, 2, LogBase::BITS) - v).abs() < 1e-12
                    && (pc_density_target(beta, rho, 2, LogBase::BITS) - v).abs() < 1e-12
            }),
        ),
        check(
            "crossing identity",
            (1..=50).map(|i| {
                let rho = i as f64 / 50.0;
                let b = density_crossing_beta(rho, 4, LogBase::NATURAL);
                (rc_density_target(b, 4, LogBase::NATURAL) - pc_density_target(b, rho, 4, LogBase::NATURAL)).abs() < 1e-12
            }),
        ),
    ]
}

fn channel_checks(rng: &mut ChaCha8Rng) -> Vec<CheckOutcome> {
    // mean of chi2(Q || p) over multinomial draws is (n - 1)/K
    let pool = CountVector::new(vec![1, 2, 3, 4, 5]);
    let p: Vec<f64> = pool.counts().iter().map(|&c| c as f64 / 15.0).collect();
    let k = 50u64;
    let trials = 20_000;
    let values: Vec<f64> = (0..trials)
        .map(|_| {
            let reads = sample_reads_with(&pool, k, rng).unwrap();
            chi2_divergence_slices(to_frequency(&reads).probs(), &p).unwrap()
        })
        .collect();
    let mean = values.iter().sum::<f64>() / trials as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials as f64 - 1.0);
    let se = (var / trials as f64).sqrt();
    vec![check("chi2 mean identity", [(mean - 4.0 / k as f64).abs() <= 4.0 * se])]
}

/// Run a suite with a fixed seed.
pub fn run_suite(suite: Suite) -> Vec<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut out = Vec::new();
    if matches!(suite, Suite::All | Suite::Mathkit) {
        out.extend(mathkit_checks(&mut rng));
    }
    if matches!(suite, Suite::All | Suite::Codec) {
        out.extend(codec_checks());
    }
    if matches!(suite, Suite::All | Suite::Bounds) {
        out.extend(bounds_checks());
    }
    if matches!(suite, Suite::All | Suite::Channel) {
        out.extend(channel_checks(&mut rng));
    }
    out
}
