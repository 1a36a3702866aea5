//! Desk-scale laboratory for decomposed mutual information (DMI) and
//! bidirectional source-free domain adaptation.
//!
//! The crate provides, bottom to top:
//!
//! - [`tensor`] — dense f64 tensors with a reverse-mode differentiation tape
//!   and a finite-difference gradient checker;
//! - [`prob`] — batch joint-distribution estimation, entropy and mutual
//!   information over discrete class spaces;
//! - [`dmi`] — candidate class subsets, the decomposed mutual information
//!   objective with its λ-scaled form and bound checker, conditional DMI and
//!   subset-restricted information maximization;
//! - [`models`] — small differentiable classifiers plus frozen prototype and
//!   caption-embedding teachers standing in for large pretrained models;
//! - [`synthdata`] — deterministic synthetic domain-shift scenarios (closed,
//!   partial and open label spaces) with per-teacher feature views;
//! - [`adapt`] — the full adaptation pipeline: source pretraining, proxy
//!   burn-in, alternating teacher-adjustment and target-distillation steps,
//!   SGD with momentum, and evaluation;
//! - [`exp`] — the experiment runner: sweep specs, deterministic metrics
//!   files and aggregate summaries.
//!
//! See the crate examples for runnable entry points into each capability, or
//! the `dmi-lab` binary for the file-driven command-line interface.

pub mod adapt;
pub mod dmi;
pub mod error;
pub mod exp;
pub mod io;
pub mod models;
pub mod prob;
pub mod rng;
pub mod synthdata;
pub mod tensor;

pub use error::{Error, Result};
