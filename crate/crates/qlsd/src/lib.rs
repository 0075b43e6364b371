//! Quantised Langevin stochastic dynamics for federated Bayesian learning.
//!
//! A simulator for a family of compressed federated MCMC samplers: a central
//! server runs an unadjusted Langevin recursion while clients send stochastic
//! gradient oracles through unbiased lossy compression, with partial client
//! participation, fixed-point and SVRG-style variance reduction, and a memory
//! mechanism that removes heterogeneity-driven bias.
//!
//! The crate is organised around the pieces of that pipeline:
//!
//! - [`rng`]: counter-based keyed random streams so every client/iteration/
//!   purpose owns an independent, replayable substream.
//! - [`models`]: finite-sum potentials (Gaussian quadratic and Bayesian
//!   logistic regression) with per-component gradients, smoothness constants,
//!   minimizers and synthetic federated data generators.
//! - [`compression`]: the s-level stochastic quantizer, exact decoding, and
//!   bit-exact Elias-gamma message encoding for uplink accounting.
//! - [`oracles`]: per-client stochastic gradient oracles (full batch,
//!   minibatch, fixed-point and SVRG variance reduction).
//! - [`sampler`]: the server loop for the sampler family, trace emission and
//!   uplink bit ledger.
//! - [`diagnostics`]: chain statistics, closed-form Gaussian Wasserstein-2,
//!   HPD summaries and the theoretical convergence-bound calculator.

pub mod compression;
pub mod diagnostics;
pub mod error;
pub mod models;
pub mod oracles;
pub mod rng;
pub mod sampler;
pub mod trace;
pub mod vector;

pub use error::{Error, Result};
pub use vector::ParamVector;
