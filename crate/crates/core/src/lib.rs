//! Membership-inference auditing toolkit core.
//!
//! Everything in this crate is pure computation over in-memory values and
//! builds without `std` (an allocator is required). File formats, the
//! experiment runner and the command-line interface live in the `memaudit`
//! companion crate.
//!
//! Module map:
//!
//! * [`data`]: datasets, synthetic generators, noise, skew, splits, PCA.
//! * [`models`]: decision tree, k-NN, logistic regression, Gaussian naive
//!   Bayes and a small MLP, all producing probability vectors.
//! * [`dp`]: per-example clipping, noisy batch updates, DP-SGD and noise
//!   schedules.
//! * [`accountant`]: Gaussian mechanism calibration, composition and a Rényi
//!   ledger converting composed noise into an `(ε, δ)` statement.
//! * [`attack`]: shadow models, attack datasets and classifiers, threshold
//!   attack, substitute models.
//! * [`report`]: attack metrics, vulnerability reports, utility loss.
//! * [`audit`]: one end-to-end audit (split, train target, attack, evaluate).

#![no_std]
#![forbid(unsafe_code)]
// Range checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod accountant;
pub mod attack;
pub mod audit;
pub mod data;
pub mod dp;
mod error;
mod math;
pub mod models;
pub mod report;
pub mod rng;

pub use error::{Error, Result};
