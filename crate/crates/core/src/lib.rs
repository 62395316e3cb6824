//! Neural-operator benchmarking toolkit.
//!
//! Four operator families (branch-trunk, graph, grid, point) built on a small
//! reverse-mode tensor engine, the geometry kernels they share, parametric
//! fusion adapters, a dataset container with a synthetic Poisson generator,
//! and the training/evaluation harness behind the `nob` command line.

pub mod data;
pub mod diffcore;
pub mod enhancements;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod operators;
pub mod par;

pub use error::{Error, Result};
