//! Coding schemes for the noiseless shuffling-sampling DNA storage channel.
//!
//! * [`params`]: system parameters and derived integer sizes.
//! * [`mathkit`]: divergences, log-Gamma, Dirichlet moments, inequality checks.
//! * [`channel`]: multinomial read sampling with reproducible random streams.
//! * [`partition`]: the deterministic partition code and its sort decoder.
//! * [`random_coding`]: quantized Dirichlet codebooks and the minimum-KL decoder.
//! * [`bounds`]: closed-form error bounds and density factors.
//! * [`harness`]: Monte Carlo experiments and resumable sweeps.
//! * [`verify`]: self-check suites.

pub mod bounds;
pub mod channel;
pub mod harness;
pub mod mathkit;
pub mod params;
pub mod partition;
pub mod random_coding;
pub mod verify;

pub use params::{DerivedSizes, SystemParams};
