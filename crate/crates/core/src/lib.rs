//! Resonance capture for nonlinear oscillators under decaying perturbations
//! with multiplicative white noise.
//!
//! The crate provides the elliptic functions behind the Duffing action-angle
//! map, decay envelopes, two concrete perturbed systems, a spectral averaging
//! recursion over trigonometric polynomials, regime classification of the
//! averaged dynamics and a reproducible Monte Carlo capture estimator.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod dynamics;
pub mod envelope;
pub mod error;
pub mod numeric;
pub mod oscillator;
pub mod specfun;
pub mod stochastic;
pub mod systems;
pub mod trigpoly;

pub use error::{Error, Result};
