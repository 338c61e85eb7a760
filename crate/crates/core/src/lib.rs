//! Atom-aware nonparametric estimation for mixed discrete-continuous data.
//!
//! Samples drawn from `(1 - π) F + π H`, where `F` has a Lebesgue density and
//! `H` is discrete, contain exact repeats only at atoms of `H` (continuous
//! draws are almost surely distinct). Splitting a sample into observations
//! that occur exactly once and observations that repeat therefore separates
//! the two components without knowing the atom locations or `π`:
//!
//! * [`sample`] partitions a [`Dataset`] into unique and repeated
//!   observations and builds the [`AtomTable`].
//! * [`kernels`] and [`density`] provide the kernel density estimate built on
//!   the unique observations only, plus the classical full-sample baseline.
//! * [`functionals`] evaluates functionals `T(f) = φ(∫ν(f))` together with
//!   their influence functions, and carries a finite-difference Gâteaux
//!   oracle for validating them.
//! * [`estimators`] implements the data-splitting and leave-one-out
//!   influence-corrected estimators on the unique observations.
//! * [`simlab`] holds seeded samplers for the benchmark mixtures, reference
//!   values, and the Monte-Carlo replication engine.
//!
//! The crate is `no_std` and only needs `alloc`. IO, file formats and the
//! command-line front-end live in the `atomkde` crate.

#![cfg_attr(not(any(test, feature = "std")), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod density;
pub mod error;
pub mod estimators;
pub mod functionals;
pub mod kernels;
mod math;
pub mod quadrature;
pub mod sample;
pub mod simlab;

pub use density::{DensityEstimate, DensityGrid, GridBox, MixtureEstimate};
pub use error::{Error, Result};
pub use estimators::{EstimateReport, EstimatorConfig, Method};
pub use functionals::{BuiltinFunctional, Functional, UnivariateDensity};
pub use kernels::{BandwidthRule, KernelSpec};
pub use quadrature::QuadratureConfig;
pub use sample::{AtomTable, Dataset, Partition, TieRule};
