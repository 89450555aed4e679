//! Simulation and estimation toolkit for motional dynamical decoupling of a
//! spin-coupled harmonic oscillator: an NV center in a diamagnetically trapped
//! (or free-falling) nanodiamond, split by a magnetic field gradient and driven
//! by trains of π-pulses.
//!
//! The crate is organised by physical concern:
//!
//! * [`params`]: material constants, particle geometry and trap-level quantities.
//! * [`pulses`]: π-pulse sequences and their ±1 modulation functions.
//! * [`dynamics`]: translational separation of the two spin branches.
//! * [`dephasing`]: relative phases from static, stochastic and weak nonlinear potentials.
//! * [`rotation`]: rotational dynamics, refocusing and electric-field trapping.
//! * [`budget`]: decoherence-source estimators and hard physical limits.
//! * [`config`] and [`output`]: run configuration, CSV/JSON emission and run manifests.
//! * [`checks`]: a fast self-check suite of the core invariants.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod budget;
pub mod checks;
pub mod config;
pub mod dephasing;
pub mod dynamics;
mod error;
pub mod numeric;
pub mod output;
pub mod params;
pub mod pulses;
pub mod rotation;

pub use error::{Error, Result};
