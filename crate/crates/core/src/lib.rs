//! Stability-aware cross-validation inference.
//!
//! The crate is organized around a K-fold cross-validation engine
//! ([`cv_engine`]) whose per-sample held-out losses feed every downstream
//! inference tool: Gaussian-comparison model confidence sets ([`mcs`]),
//! the cross-validated softmax test for the maximum of a mean vector
//! ([`maxmean`]), split/cross conformal prediction ([`conformal`]), online
//! rolling validation ([`rollval`]), and empirical stability diagnostics
//! for SGD-type learners ([`stability`]).
//!
//! All randomized routines take explicit seeds and derive per-task RNG
//! streams, so results are reproducible bit-for-bit at any worker count.

pub mod conformal;
pub mod cv_engine;
pub mod data;
pub mod error;
pub mod experiments;
pub mod gauss;
pub mod learners;
pub mod linalg;
pub mod maxmean;
pub mod mcs;
pub mod rng;
pub mod rollval;
pub mod stability;
pub mod stats;

pub use error::{Error, Result};
