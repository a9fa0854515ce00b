//! Numerical laboratory for heavy-tailed weight spectra in two-layer
//! teacher-student networks trained with full-batch GD and Adam.
//!
//! The pipeline: sample a single-index teacher and Gaussian data
//! ([`dataset`]), train the first layer of a two-layer student for a few
//! full-batch steps ([`student`], [`optim`]), fit the readout by ridge
//! regression on a holdout split ([`readout`]), and analyze the weight
//! spectrum, tail exponents and singular-vector overlaps along the way
//! ([`spectral`], [`theory`]). The [`harness`] module exposes experiment
//! configs, named figure recipes, sweeps and CSV/JSON/checkpoint export
//! behind the `spectral-lab` binary.

pub mod dataset;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod optim;
pub mod readout;
pub mod rng;
pub mod spectral;
pub mod student;
pub mod theory;

pub use error::{Error, Result};
