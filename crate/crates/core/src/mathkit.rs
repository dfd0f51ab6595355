//! Numeric primitives: divergences between PMFs, log-Gamma, Dirichlet
//! product moments and the inequality checks used to validate the bounds.

use std::f64::consts::{E, PI};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MathError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("argument {0} is outside the domain")]
    Domain(f64),
    #[error("not a probability mass function: {0}")]
    InvalidPmf(String),
}

/// Fixed numerical tolerances used across the crate and its verification suites.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Tolerances {
    /// Absolute tolerance on the sum of a PMF.
    pub pmf_sum_abs: f64,
    /// Relative accuracy of special functions.
    pub special_fn_rel: f64,
    /// Number of standard errors allowed in Monte Carlo cross-checks.
    pub mc_sigmas: f64,
}

pub const TOLERANCES: Tolerances = Tolerances { pmf_sum_abs: 1e-12, special_fn_rel: 1e-12, mc_sigmas: 3.0 };

/// A point of the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pmf {
    probs: Vec<f64>,
}

impl Pmf {
    pub fn new(probs: Vec<f64>) -> Result<Self, MathError> {
        if probs.is_empty() {
            return Err(MathError::InvalidPmf("empty".into()));
        }
        if let Some(bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(MathError::InvalidPmf(format!("entry {bad} outside [0, 1]")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > TOLERANCES.pmf_sum_abs {
            return Err(MathError::InvalidPmf(format!("entries sum to {sum}")));
        }
        Ok(Self { probs })
    }

    /// Normalized frequencies of a nonempty count vector.
    pub fn from_counts(counts: &[u64]) -> Result<Self, MathError> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(MathError::InvalidPmf("all counts are zero".into()));
        }
        let total = total as f64;
        Ok(Self { probs: counts.iter().map(|&c| c as f64 / total).collect() })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

fn check_len(a: &[f64], b: &[f64]) -> Result<(), MathError> {
    if a.len() == b.len() {
        Ok(())
    } else {
        Err(MathError::LengthMismatch { left: a.len(), right: b.len() })
    }
}

/// `KL(q || p)` in nats. Terms with `q(i) = 0` contribute nothing; the result
/// is `+inf` exactly when `q(i) > 0` for some `i` with `p(i) = 0`.
pub fn kl_divergence(q: &Pmf, p: &Pmf) -> Result<f64, MathError> {
    kl_divergence_slices(q.probs(), p.probs())
}

pub(crate) fn kl_divergence_slices(q: &[f64], p: &[f64]) -> Result<f64, MathError> {
    check_len(q, p)?;
    let mut total = 0.0;
    for (&qi, &pi) in q.iter().zip(p) {
        if qi == 0.0 {
            continue;
        }
        if pi == 0.0 {
            return Ok(f64::INFINITY);
        }
        total += qi * (qi / pi).ln();
    }
    // rounding can leave a tiny negative value when q == p
    Ok(total.max(0.0))
}

/// Pearson `chi^2(q || p) = sum (q(i) - p(i))^2 / p(i)` over the support of `p`.
pub fn chi2_divergence(q: &Pmf, p: &Pmf) -> Result<f64, MathError> {
    chi2_divergence_slices(q.probs(), p.probs())
}

pub(crate) fn chi2_divergence_slices(q: &[f64], p: &[f64]) -> Result<f64, MathError> {
    check_len(q, p)?;
    let mut total = 0.0;
    for (&qi, &pi) in q.iter().zip(p) {
        if pi == 0.0 {
            if qi > 0.0 {
                return Ok(f64::INFINITY);
            }
            continue;
        }
        let diff = qi - pi;
        total += diff * diff / pi;
    }
    Ok(total)
}

/// `ln Gamma(t)` for `t > 0`.
///
/// Backed by the musl `lgamma` port in `libm`, which uses dedicated
/// expansions around the zeros at 1 and 2 and is accurate to a few ulp.
pub fn log_gamma(t: f64) -> Result<f64, MathError> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(MathError::Domain(t));
    }
    Ok(libm::lgamma(t))
}

/// `ln(k!)`.
pub fn log_factorial(k: u64) -> f64 {
    libm::lgamma(k as f64 + 1.0)
}

/// Dirichlet product moment `E[prod X_i^beta_i]` for `X ~ Dir(alphas)`:
///
/// `Gamma(sum a) / Gamma(sum (a + b)) * prod Gamma(a_i + b_i) / Gamma(a_i)`,
/// evaluated in log space.
pub fn dirichlet_product_moment(alphas: &[f64], betas: &[f64]) -> Result<f64, MathError> {
    check_len(alphas, betas)?;
    if let Some(&a) = alphas.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
        return Err(MathError::Domain(a));
    }
    if let Some(&b) = betas.iter().find(|b| !(**b >= 0.0) || !b.is_finite()) {
        return Err(MathError::Domain(b));
    }
    if betas.iter().all(|&b| b == 0.0) {
        return Ok(1.0);
    }
    let alpha_sum: f64 = alphas.iter().sum();
    let beta_sum: f64 = betas.iter().sum();
    let mut log_moment = log_gamma(alpha_sum)? - log_gamma(alpha_sum + beta_sum)?;
    for (&a, &b) in alphas.iter().zip(betas) {
        if b > 0.0 {
            log_moment += log_gamma(a + b)? - log_gamma(a)?;
        }
    }
    Ok(log_moment.exp())
}

/// Lower bound `(a - b)^2 / (8 max(a, b))` on the arithmetic-geometric mean
/// gap `(a + b)/2 - sqrt(ab)` of two positive numbers.
pub fn am_gm_gap_lower_bound(a: f64, b: f64) -> Result<f64, MathError> {
    for x in [a, b] {
        if !(x > 0.0) || !x.is_finite() {
            return Err(MathError::Domain(x));
        }
    }
    let diff = a - b;
    Ok(diff * diff / (8.0 * a.max(b)))
}

/// `(a + b)/2 - sqrt(ab)`.
pub fn am_gm_gap(a: f64, b: f64) -> f64 {
    // (sqrt a - sqrt b)^2 / 2 avoids cancellation when a is close to b
    let d = a.sqrt() - b.sqrt();
    0.5 * d * d
}

/// `e * sqrt(3 / (7 pi))`, the constant of the upper bound on `Gamma(1 + x)`.
pub fn mortici_omega() -> f64 {
    E * (3.0 / (7.0 * PI)).sqrt()
}

/// Whether `sqrt(2pi) t^(t-1/2) e^-t <= Gamma(t) <= sqrt(2pi) t^(t-1/2) e^-t e^(1/(12t))`.
pub fn gordon_sandwich_holds(t: f64) -> Result<bool, MathError> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(MathError::Domain(t));
    }
    let stirling = 0.5 * (2.0 * PI).ln() + (t - 0.5) * t.ln() - t;
    let excess = log_gamma(t)? - stirling;
    Ok(excess >= 0.0 && excess <= 1.0 / (12.0 * t))
}

/// Whether `Gamma(1 + x) <= omega sqrt(2pi (x + 1/6)) (x/e)^x`, defined for
/// `x = 0` and `x >= 1`.
pub fn mortici_bound_holds(x: f64) -> Result<bool, MathError> {
    if !x.is_finite() || !(x == 0.0 || x >= 1.0) {
        return Err(MathError::Domain(x));
    }
    let power = if x == 0.0 { 0.0 } else { x * (x.ln() - 1.0) };
    let log_bound = mortici_omega().ln() + 0.5 * (2.0 * PI * (x + 1.0 / 6.0)).ln() + power;
    // equality holds at x = 1, so allow for rounding
    Ok(log_gamma(1.0 + x)? <= log_bound + 1e-12 * log_bound.abs().max(1.0))
}

/// Both Gamma-function checks: the two-sided bound at `t` and the `Gamma(1+x)`
/// upper bound at `x`.
pub fn gamma_bound_checks(t: f64, x: f64) -> Result<(bool, bool), MathError> {
    Ok((gordon_sandwich_holds(t)?, mortici_bound_holds(x)?))
}

/// `ln(1 + chi^2)`, the intermediate quantity between KL and chi^2.
pub fn log1p_chi2(chi2: f64) -> f64 {
    chi2.ln_1p()
}
