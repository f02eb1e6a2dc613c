//! Kolmogorov–Smirnov goodness-of-fit testing for the marginal distribution
//! of a stationary time series whose parameters are estimated from the data.
//!
//! The block bootstrap test ([`gof::npbb_test`]) resamples circular blocks,
//! refits the family on every resample and centers the bootstrap process with
//! either bootstrap expectations or sample estimates. Three baselines
//! ([`gof::npb_test`], [`gof::pb_test`], [`gof::spb_test`]), a Monte Carlo
//! harness ([`experiments`]) and a log-return pipeline ([`returns`]) sit on
//! top of the same kernels.

// `!(x > 0.0)` is used deliberately so that NaN falls on the rejecting side.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod distributions;
pub mod edf;
pub mod error;
pub mod experiments;
pub mod gof;
pub mod resampling;
pub mod returns;
pub mod rng;
pub mod special;
pub mod tsgen;

pub use distributions::{Family, FamilySpec, Params};
pub use error::{Error, Result};
pub use gof::{CorrectionKind, GofResult, TestConfig, TestKind};
pub use resampling::{BlockRule, BootstrapPlan, Scheme};

/// Build identifier printed by `--version` and recorded in manifests.
pub fn build_id() -> String {
    format!("npbb {}", env!("CARGO_PKG_VERSION"))
}
