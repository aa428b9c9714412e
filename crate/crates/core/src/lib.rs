//! High-dimensional linear discriminant analysis assembled from
//! interchangeable precision-matrix estimators and normal-means shrinkage
//! estimators.
//!
//! The pipeline is:
//!
//! 1. estimate a precision matrix `Ω̂` per group ([`precision`]) and pool them,
//! 2. decorrelate the data with `Ω̂^{1/2}` ([`classifier::whiten`]),
//! 3. shrink the decorrelated group means or their difference
//!    ([`shrinkage`]),
//! 4. score new observations with the resulting linear rule
//!    ([`classifier`]).
//!
//! [`simlab`] generates Gaussian populations and replicates experiments,
//! [`theory`] maps the asymptotic regions of the signal exponents `(a, b)` and
//! probes the growth of the V-statistic by Monte Carlo.
//!
//! The crate is `no_std` and only needs `alloc`. All transcendental functions
//! go through `libm`, so results are bit-identical across platforms and
//! between single- and multi-threaded drivers.

#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod classifier;
pub mod error;
pub mod linalg;
pub mod matrix;
pub mod precision;
pub mod seed;
pub mod shrinkage;
pub mod simlab;
pub mod stats;
pub mod theory;

pub use error::{Error, Result};
pub use matrix::{Matrix, SymMatrix};
