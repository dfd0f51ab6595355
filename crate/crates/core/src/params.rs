//! System parameters and the integer sizes derived from them.
//!
//! All logarithms are natural. The number of molecule types is
//! `n = floor(M^(beta * ln|A|))`, the molecule length is `L = ceil(beta * ln M)`
//! and the read count is `K = round(xi * M)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative slack used when snapping a real-valued size onto a nearby integer
/// before flooring or ceiling. `exp(ln 8)` evaluates to `7.999999999999998`.
const INTEGER_SNAP_REL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("M must be at least 1")]
    ZeroMolecules,
    #[error("alphabet size must be at least 2, got {0}")]
    AlphabetTooSmall(u32),
    #[error("beta must be a positive finite number, got {0}")]
    InvalidBeta(f64),
    #[error("coverage depth xi must be a positive finite number, got {0}")]
    InvalidCoverage(f64),
    #[error("rho must lie in [0, 1], got {0}")]
    InvalidRho(f64),
    #[error("derived size {what} does not fit in 64 bits")]
    Overflow { what: &'static str },
}

/// Raw parameters `(M, |A|, beta, xi, rho)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Molecules per codeword.
    #[serde(rename = "M")]
    pub molecules: u64,
    pub alphabet_size: u32,
    pub beta: f64,
    pub xi: f64,
    pub rho: f64,
}

/// Integer quantities shared by the codecs, the channel and the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DerivedSizes {
    /// Number of molecule types.
    pub n: u64,
    /// Molecule length in symbols.
    #[serde(rename = "L")]
    pub length: u64,
    /// Number of reads.
    #[serde(rename = "K")]
    pub reads: u64,
    pub num_subsets: u64,
    pub subset_size: u64,
    pub n_eff: u64,
}

impl SystemParams {
    pub fn new(molecules: u64, alphabet_size: u32, beta: f64, xi: f64, rho: f64) -> Result<Self, ParamError> {
        let params = Self { molecules, alphabet_size, beta, xi, rho };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        if self.molecules == 0 {
            return Err(ParamError::ZeroMolecules);
        }
        if self.alphabet_size < 2 {
            return Err(ParamError::AlphabetTooSmall(self.alphabet_size));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(ParamError::InvalidBeta(self.beta));
        }
        if !(self.xi.is_finite() && self.xi > 0.0) {
            return Err(ParamError::InvalidCoverage(self.xi));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(ParamError::InvalidRho(self.rho));
        }
        Ok(())
    }

    /// `beta * ln|A|`, the exponent of `M` giving the number of molecule types.
    pub fn type_exponent(&self) -> f64 {
        self.beta * f64::from(self.alphabet_size).ln()
    }

    /// Whether `beta * ln|A| < 1`, i.e. molecules are too short to carry a
    /// unique index. Parameters outside this regime are accepted.
    pub fn is_short_molecule(&self) -> bool {
        self.type_exponent() < 1.0
    }

    pub fn derive(&self) -> Result<DerivedSizes, ParamError> {
        derive(self)
    }
}

fn snapped(x: f64) -> Option<f64> {
    let r = x.round();
    ((x - r).abs() <= INTEGER_SNAP_REL * r.abs().max(1.0)).then_some(r)
}

fn snap_floor(x: f64) -> f64 {
    snapped(x).unwrap_or_else(|| x.floor())
}

fn snap_ceil(x: f64) -> f64 {
    snapped(x).unwrap_or_else(|| x.ceil())
}

fn to_u64(x: f64, what: &'static str) -> Result<u64, ParamError> {
    if x.is_finite() && x < u64::MAX as f64 {
        Ok(x as u64)
    } else {
        Err(ParamError::Overflow { what })
    }
}

/// Integer `floor(n^e)` for `n >= 1`, `e` in `[0, 1]`, corrected for
/// floating-point error so that exact powers are not lost.
pub(crate) fn floor_pow(n: u64, e: f64) -> u64 {
    if n <= 1 || e <= 0.0 {
        return 1;
    }
    let approx = (n as f64).powf(e);
    let mut r = (snap_floor(approx) as u64).max(1);
    // `r <= n^e` must hold; walk off by at most one step either way.
    let bound = e * (n as f64).ln() * (1.0 + 1e-12);
    let fits = |r: u64| (r as f64).ln() <= bound;
    while fits(r + 1) {
        r += 1;
    }
    while r > 1 && !fits(r) {
        r -= 1;
    }
    r
}

/// Derive every integer size used downstream.
pub fn derive(params: &SystemParams) -> Result<DerivedSizes, ParamError> {
    params.validate()?;
    let ln_m = (params.molecules as f64).ln();
    let n_real = (params.type_exponent() * ln_m).exp();
    let n = to_u64(snap_floor(n_real), "n")?.max(2);
    let length = to_u64(snap_ceil(params.beta * ln_m), "L")?.max(1);
    let reads = to_u64((params.xi * params.molecules as f64).round(), "K")?.max(1);
    let num_subsets = floor_pow(n, params.rho);
    let subset_size = floor_pow(n, 1.0 - params.rho);
    let n_eff = num_subsets
        .checked_mul(subset_size)
        .ok_or(ParamError::Overflow { what: "n_eff" })?;
    debug_assert!(n_eff <= n);
    Ok(DerivedSizes { n, length, reads, num_subsets, subset_size, n_eff })
}

impl DerivedSizes {
    /// Sizes for a partition code built directly from a subset layout, with
    /// no unused tail types. Used by the codec tooling.
    pub fn from_layout(num_subsets: u64, subset_size: u64, reads: u64) -> Self {
        let n_eff = num_subsets * subset_size;
        Self { n: n_eff.max(2), length: 1, reads: reads.max(1), num_subsets, subset_size, n_eff }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derives_reference_point() {
        let p = SystemParams::new(65536, 2, 0.5, 1.0, 0.5).unwrap();
        let d = p.derive().unwrap();
        assert_eq!(d.n, 46);
        assert_eq!(d.reads, 65536);
        assert_eq!((d.num_subsets, d.subset_size, d.n_eff), (6, 6, 36));
        assert_eq!(d.length, 6); // ceil(0.5 * ln 65536) = ceil(5.545)
    }

    #[test]
    fn clamps_tiny_beta() {
        let p = SystemParams::new(16, 2, 1e-12, 1.0, 1.0).unwrap();
        let d = p.derive().unwrap();
        assert_eq!(d.n, 2);
        assert_eq!(d.reads, 16);
        assert_eq!(d.length, 1);
    }

    #[test]
    fn exact_power_is_not_lost() {
        // beta chosen so that M^(beta ln 4) = 8 exactly.
        let beta = 8f64.ln() / (4f64.ln() * 160f64.ln());
        let p = SystemParams::new(160, 4, beta, 2.0, 0.5).unwrap();
        let d = p.derive().unwrap();
        assert_eq!(d.n, 8);
        assert_eq!(d.reads, 320);
        assert_eq!((d.num_subsets, d.subset_size, d.n_eff), (2, 2, 4));
    }

    #[test]
    fn rejects_invalid() {
        assert_eq!(SystemParams::new(0, 2, 0.5, 1.0, 0.5), Err(ParamError::ZeroMolecules));
        assert_eq!(SystemParams::new(10, 1, 0.5, 1.0, 0.5), Err(ParamError::AlphabetTooSmall(1)));
        assert!(matches!(SystemParams::new(10, 2, 0.5, 0.0, 0.5), Err(ParamError::InvalidCoverage(_))));
        assert!(matches!(SystemParams::new(10, 2, 0.5, -1.0, 0.5), Err(ParamError::InvalidCoverage(_))));
        assert!(matches!(SystemParams::new(10, 2, 0.5, 1.0, 1.5), Err(ParamError::InvalidRho(_))));
        assert!(matches!(SystemParams::new(10, 2, 0.5, 1.0, -0.1), Err(ParamError::InvalidRho(_))));
        assert!(matches!(SystemParams::new(10, 2, 0.0, 1.0, 0.5), Err(ParamError::InvalidBeta(_))));
    }

    #[test]
    fn rounds_reads_to_nearest() {
        let p = SystemParams::new(10, 2, 0.5, 0.25, 0.5).unwrap();
        assert_eq!(p.derive().unwrap().reads, 3); // 2.5 rounds away from zero
        let p = SystemParams::new(10, 2, 0.5, 0.01, 0.5).unwrap();
        assert_eq!(p.derive().unwrap().reads, 1);
    }

    #[test]
    fn floor_pow_matches_integer_search() {
        use num_bigint::BigUint;
        // rho = num/den; r <= n^rho  <=>  r^den <= n^num, checked in exact integers.
        for n in 1..=2000u64 {
            for &(num, den) in &[(0u32, 1u32), (1, 5), (1, 4), (1, 3), (1, 2), (7, 10), (1, 1)] {
                let got = floor_pow(n, f64::from(num) / f64::from(den));
                let nn = BigUint::from(n).pow(num);
                let expected = (1..=n).take_while(|&r| BigUint::from(r).pow(den) <= nn).last().unwrap_or(1);
                assert_eq!(got, expected, "n={n} rho={num}/{den}");
            }
        }
    }

    #[test]
    fn n_eff_never_exceeds_n() {
        for n in 2..=5000u64 {
            for k in 0..=20 {
                let rho = k as f64 / 20.0;
                let s = floor_pow(n, rho);
                let t = floor_pow(n, 1.0 - rho);
                assert!(s * t <= n, "n={n} rho={rho}: {s}*{t}");
            }
        }
    }

    #[test]
    fn n_is_monotone_in_m_and_beta() {
        let mut last = 0;
        for m in (2..20_000u64).step_by(37) {
            let d = SystemParams::new(m, 4, 0.3, 1.0, 0.5).unwrap().derive().unwrap();
            assert!(d.n >= last);
            last = d.n;
        }
        let mut last = 0;
        for i in 1..200 {
            let beta = i as f64 * 0.005;
            let d = SystemParams::new(5000, 2, beta, 1.0, 0.5).unwrap().derive().unwrap();
            assert!(d.n >= last);
            last = d.n;
        }
    }
}
