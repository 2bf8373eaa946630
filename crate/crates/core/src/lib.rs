//! Randomness amplification from partially free bits, driven by chained
//! Bell correlations.
//!
//! The crate models weakly random sources whose bits may be biased by a
//! hidden variable, quantifies how free a bit is via variational distance,
//! and simulates the device-independent machinery that turns many such bits
//! into one arbitrarily free bit: chained Bell tests, freedom bounds, a
//! certification protocol, classical adversaries that try to fake the
//! correlations, and multiparty parity-game variants.
//!
//! Modules build on each other in roughly this order:
//!
//! * [`dist`]: finite distributions, conditional boxes, no-signalling checks
//! * [`chained`]: the chained Bell expression and its quantum/classical values
//! * [`sources`]: partially free bit sources and derived setting weights
//! * [`bounds`]: freedom-deficit bounds and amplification parameter selection
//! * [`certify`]: the round-based certification protocol
//! * [`attacks`]: classical strategies steering the source against the test
//! * [`ghz`]: multiparty parity relations and their adversary constructions
//!
//! All randomness flows through caller-supplied [`rand::Rng`] instances so
//! that every simulation is reproducible from a seed.

pub mod attacks;
pub mod bounds;
pub mod certify;
pub mod chained;
pub mod dist;
mod error;
pub mod ghz;
pub mod sources;

pub use error::{Error, Result};

/// Tolerance for comparing probabilities and distances.
pub const COMPARISON_TOL: f64 = 1e-12;

/// Tolerance for validating that probability vectors sum to one.
pub const NORMALIZATION_TOL: f64 = 1e-9;
