//! Markov-model Hoeffding test for network anomaly detection.
//!
//! Observed symbols are paired into a lifted chain, the window's empirical
//! law is compared to a reference law by relative entropy, and the threshold
//! comes either from Sanov's theorem or from the weak limit of the statistic.

// Negated comparisons are deliberate: they reject NaN along with the range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clt;
pub mod compare;
pub mod error;
pub mod estimation;
pub mod flow;
pub mod io;
pub mod markov;
pub mod recipe;
pub mod rng;
pub mod selftest;
pub mod traffic;

pub use error::{Error, Result};
