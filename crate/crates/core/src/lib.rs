//! Label inference against log-loss scoring oracles.
//!
//! A scoring server that reports only the log-loss of submitted predictions
//! leaks the hidden labels. This crate simulates such a server under exact or
//! bounded-precision arithmetic and optional noise, implements the attacks
//! that recover the labels, and ships brute-force oracles and an experiment
//! harness for checking them.

pub mod analysis;
pub mod attacks;
pub mod harness;
pub mod loss;
pub mod numerics;
pub mod oracle;
