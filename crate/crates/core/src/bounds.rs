//! Closed-form error bounds and information-density factors.
//!
//! Everything is evaluated in natural-log space and exponentiated only at the
//! end; probabilities are clamped to `[0, 1]`. The log base only matters for
//! the density factors, which the caller may request in bits or digits.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mathkit::{log_factorial, log_gamma, mortici_omega};
use crate::params::{DerivedSizes, SystemParams};
use crate::partition::codebook_size;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("simplified bound needs M^(1-(1+rho) beta ln|A|) >= 4, got {0}")]
    OutOfRegime(f64),
    #[error("random-coding bound needs xi * M > e, got {0}")]
    CoverageTooSmall(f64),
    #[error("rate slack delta must be positive, got {0}")]
    InvalidDelta(f64),
    #[error("M must be at least 2 for the bound, got {0}")]
    TooFewMolecules(u64),
}

/// Logarithm base used to present densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogBase(f64);

impl LogBase {
    pub const NATURAL: LogBase = LogBase(std::f64::consts::E);
    pub const BITS: LogBase = LogBase(2.0);
    pub const DIGITS: LogBase = LogBase(10.0);

    pub fn new(base: f64) -> Option<Self> {
        (base.is_finite() && base > 0.0 && base != 1.0).then_some(Self(base))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn log(self, x: f64) -> f64 {
        x.ln() / self.0.ln()
    }
}

impl FromStr for LogBase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "e" | "nat" | "nats" => Ok(Self::NATURAL),
            "2" | "bits" => Ok(Self::BITS),
            _ => s.parse::<f64>().ok().and_then(LogBase::new).ok_or_else(|| format!("invalid log base '{s}'")),
        }
    }
}

impl fmt::Display for LogBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Self::NATURAL {
            write!(f, "e")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// `ln(exp(a) + exp(b))`.
fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

fn clamp_prob_from_log(log_p: f64) -> f64 {
    if log_p >= 0.0 {
        1.0
    } else {
        log_p.exp()
    }
}

/// `(x - 1) / (2x + 1)` with `x = M^(1 - (1+rho) beta ln|A|)`.
pub fn phi(molecules: u64, beta: f64, rho: f64, alphabet_size: u32) -> f64 {
    let exponent = 1.0 - (1.0 + rho) * beta * f64::from(alphabet_size).ln();
    let t = exponent * (molecules as f64).ln();
    if t > 0.0 {
        // 1/x stays finite for huge x
        let u = (-t).exp();
        -(-t).exp_m1() / (2.0 + u)
    } else {
        let xm1 = t.exp_m1();
        xm1 / (2.0 * xm1 + 3.0)
    }
}

/// Two-term partition-code bound with both terms kept in log form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundBreakdown {
    pub params: SystemParams,
    /// `ln` of `M^(beta ln|A|) exp(-xi floor(M^(1-(1+rho) beta ln|A|)))`: some type unseen.
    pub term1_log: f64,
    /// `ln` of `M^((2-rho) beta ln|A|) exp(-xi Phi M^(1-(1+2rho) beta ln|A|))`: two types swap.
    pub term2_log: f64,
    pub total: f64,
    pub phi: f64,
}

impl BoundBreakdown {
    pub fn term1(&self) -> f64 {
        self.term1_log.exp()
    }

    pub fn term2(&self) -> f64 {
        self.term2_log.exp()
    }
}

pub fn pc_error_bound(params: &SystemParams) -> BoundBreakdown {
    let c1 = params.type_exponent();
    let ln_m = (params.molecules as f64).ln();
    let (rho, xi) = (params.rho, params.xi);
    let phi = phi(params.molecules, params.beta, rho, params.alphabet_size);

    let zero_exponent = ((1.0 - (1.0 + rho) * c1) * ln_m).exp().floor();
    let term1_log = c1 * ln_m - xi * zero_exponent;
    let swap_exponent = ((1.0 - (1.0 + 2.0 * rho) * c1) * ln_m).exp();
    let term2_log = (2.0 - rho) * c1 * ln_m - xi * phi * swap_exponent;

    let total = clamp_prob_from_log(log_add_exp(term1_log, term2_log));
    BoundBreakdown { params: *params, term1_log, term2_log, total, phi }
}

/// `2 M^((2-rho) beta ln|A|) exp(-(xi/3) M^(1-(1+2rho) beta ln|A|))`, valid once
/// `M^(1-(1+rho) beta ln|A|) >= 4`.
pub fn pc_error_bound_simplified(params: &SystemParams) -> Result<f64, BoundError> {
    let c1 = params.type_exponent();
    let ln_m = (params.molecules as f64).ln();
    let rho = params.rho;
    let regime = ((1.0 - (1.0 + rho) * c1) * ln_m).exp();
    if !(regime >= 4.0) {
        return Err(BoundError::OutOfRegime(regime));
    }
    let swap_exponent = ((1.0 - (1.0 + 2.0 * rho) * c1) * ln_m).exp();
    let log_bound = 2f64.ln() + (2.0 - rho) * c1 * ln_m - params.xi / 3.0 * swap_exponent;
    Ok(clamp_prob_from_log(log_bound))
}

/// Constants of the random-coding bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RcBoundConstants {
    /// `1 - beta ln|A|`.
    pub c0: f64,
    /// `beta ln|A|`.
    pub c1: f64,
    /// `2 + 2 xi - ln(xi) / 2`.
    pub c2: f64,
    pub delta: f64,
}

impl RcBoundConstants {
    pub fn new(params: &SystemParams, delta: f64) -> Result<Self, BoundError> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(BoundError::InvalidDelta(delta));
        }
        Ok(Self::unchecked(params, delta))
    }

    fn unchecked(params: &SystemParams, delta: f64) -> Self {
        let c1 = params.type_exponent();
        Self { c0: 1.0 - c1, c1, c2: 2.0 + 2.0 * params.xi - 0.5 * params.xi.ln(), delta }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RcBound {
    pub constants: RcBoundConstants,
    /// `ln` of `2 sqrt(1 + xi M^c0) exp([c2 + ln ln(xi M) - delta c0 ln M] M^c1)`.
    pub term1_log: f64,
    /// `1 / ln ln(xi M)`.
    pub term2: f64,
    pub total: f64,
}

impl RcBound {
    /// `c2 + ln ln(xi M) - delta c0 ln M`; the first term decays once this is negative.
    pub fn bracket(&self, params: &SystemParams) -> f64 {
        let xm = params.xi * params.molecules as f64;
        self.constants.c2 + xm.ln().ln() - self.constants.delta * self.constants.c0 * (params.molecules as f64).ln()
    }
}

pub fn rc_error_bound(params: &SystemParams, delta: f64) -> Result<RcBound, BoundError> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(BoundError::InvalidDelta(delta));
    }
    let constants = RcBoundConstants::unchecked(params, delta);
    let m = params.molecules as f64;
    let xm = params.xi * m;
    if !(xm > std::f64::consts::E) {
        return Err(BoundError::CoverageTooSmall(xm));
    }
    let ln_m = m.ln();
    let loglog = xm.ln().ln();
    let bracket = constants.c2 + loglog - delta * constants.c0 * ln_m;
    let term1_log = 2f64.ln()
        + 0.5 * (params.xi * (constants.c0 * ln_m).exp()).ln_1p()
        + bracket * (constants.c1 * ln_m).exp();
    let term2 = 1.0 / loglog;
    let total = (clamp_prob_from_log(term1_log) + term2).min(1.0);
    Ok(RcBound { constants, term1_log, term2, total })
}

/// `beta log|A|` in the requested base, i.e. `beta * ln|A| / ln(base)` when
/// `beta` is measured in the same base.
fn scaled_exponent(beta: f64, alphabet_size: u32, base: LogBase) -> f64 {
    beta * base.log(f64::from(alphabet_size))
}

/// Leading factor `(1 - beta log|A|) / 2` of the random-coding log-cardinality.
pub fn rc_density_target(beta: f64, alphabet_size: u32, base: LogBase) -> f64 {
    (1.0 - scaled_exponent(beta, alphabet_size, base)) / 2.0
}

/// Leading factor `rho beta log|A|` of the partition-code log-cardinality.
pub fn pc_density_target(beta: f64, rho: f64, alphabet_size: u32, base: LogBase) -> f64 {
    rho * scaled_exponent(beta, alphabet_size, base)
}

/// `beta` at which the two leading factors coincide: `beta log|A| = 1/(1+2rho)`.
pub fn density_crossing_beta(rho: f64, alphabet_size: u32, base: LogBase) -> f64 {
    1.0 / ((1.0 + 2.0 * rho) * base.log(f64::from(alphabet_size)))
}

/// `ln |C_M|` of the partition code from log-factorials.
pub fn pc_log_codebook_size(sizes: &DerivedSizes) -> f64 {
    log_factorial(sizes.n_eff) - sizes.num_subsets as f64 * log_factorial(sizes.subset_size)
}

/// `ln |C_M| / (n ln M)` for the partition code at the derived sizes.
pub fn pc_exact_density(sizes: &DerivedSizes, molecules: u64) -> f64 {
    pc_log_codebook_size(sizes) / (sizes.n as f64 * (molecules as f64).ln())
}

/// Natural log of a big integer, from its leading 64 bits and bit length.
pub fn ln_biguint(v: &BigUint) -> f64 {
    let bits = v.bits();
    if bits <= 64 {
        return (v.iter_u64_digits().next().unwrap_or(0) as f64).ln();
    }
    let shift = bits - 64;
    let top = (v >> shift).iter_u64_digits().next().unwrap_or(0) as f64;
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// `ln |C_M|` from the exact big-integer cardinality.
pub fn pc_log_codebook_size_exact(sizes: &DerivedSizes) -> f64 {
    ln_biguint(&codebook_size(sizes))
}

/// Natural log of the intermediate quantity
/// `B(n,M,K) = (2 omega sqrt(pi))^n (M/(M-n))^K Gamma(n)/Gamma(n+K) K^K e^-K (K/n)^(n/2)`
/// from the random-coding analysis. Diagnostic only; requires `M > n`.
pub fn proof_quantity_log_b(n: u64, molecules: u64, reads: u64) -> Option<f64> {
    if molecules <= n || n == 0 || reads == 0 {
        return None;
    }
    let (nf, mf, kf) = (n as f64, molecules as f64, reads as f64);
    Some(
        nf * (2.0 * mortici_omega() * PI.sqrt()).ln() + kf * (mf / (mf - nf)).ln() + log_gamma(nf).ok()?
            - log_gamma(nf + kf).ok()?
            + kf * kf.ln()
            - kf
            + 0.5 * nf * (kf / nf).ln(),
    )
}

/// One row of the leading-factor comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityRow {
    pub beta: f64,
    pub rc: f64,
    pub pc: Vec<f64>,
}

/// Leading factors over a `beta` grid spanning `(0, 1/log|A|)` in the given
/// base, with the crossing point of every `rho` inserted exactly.
pub fn density_table(alphabet_size: u32, base: LogBase, rhos: &[f64], steps: usize) -> Vec<DensityRow> {
    let beta_max = 1.0 / base.log(f64::from(alphabet_size));
    let mut betas: Vec<f64> = (1..steps).map(|i| beta_max * i as f64 / steps as f64).collect();
    betas.extend(rhos.iter().map(|&rho| density_crossing_beta(rho, alphabet_size, base)));
    betas.sort_by(f64::total_cmp);
    betas.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    betas
        .into_iter()
        .map(|beta| DensityRow {
            beta,
            rc: rc_density_target(beta, alphabet_size, base),
            pc: rhos.iter().map(|&rho| pc_density_target(beta, rho, alphabet_size, base)).collect(),
        })
        .collect()
}
