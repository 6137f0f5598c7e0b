//! Label inference attacks.
//!
//! Every attack talks to the server only through [`LossOracle`] and returns a
//! [`Recovery`]: the inferred labels plus what could not be resolved.

pub mod exact;
pub mod robust;

use thiserror::Error;

use crate::loss::LossError;
use crate::numerics::NumericsError;
use crate::oracle::{LossOracle, OracleError};

pub use exact::{
    multi_query_binary_attack, multi_query_kary_attack, plan_chunks, plan_kary_chunks, single_query_binary_attack,
    single_query_binary_attack_with, single_query_kary_attack, ChunkPlan, ChunkPolicy,
};
pub use robust::{
    decode_with_weights, multi_query_robust_attack, multi_query_robust_attack_with_plan, plan_for_multiplicative,
    robust_chunk_size, robust_log_weights, robust_weights, single_query_robust_attack, tau_for_bounded_support,
    tau_for_subexponential, Decoded, RobustPlan, SubsetDecoder, EXHAUSTIVE_CAP,
};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("attack needs a binary oracle")]
    NotBinary,
    #[error("attack needs a K-ary oracle")]
    NotKary,
    #[error("{0}")]
    Infeasible(String),
    #[error("N = {n} exceeds the exhaustive-search cap of {cap}")]
    TooLarge { n: usize, cap: usize },
    #[error("insufficient precision: {0}")]
    InsufficientPrecision(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Outcome of an attack.
#[derive(Debug, Clone, PartialEq)]
pub struct Recovery<L> {
    pub labels: L,
    /// Indices whose labels could not be extracted; they hold a placeholder
    /// (bit 0 or class 1).
    pub unresolved: Vec<usize>,
    /// Queries spent by this attack.
    pub queries: usize,
    /// Set when the decoder saw evidence of noise beyond the assumed bound
    /// (an argmin tie, or no candidate within the bound).
    pub out_of_contract: bool,
}

impl<L> Recovery<L> {
    pub fn is_complete(&self) -> bool {
        self.unresolved.is_empty()
    }
}

fn require_binary(oracle: &dyn LossOracle) -> Result<(), AttackError> {
    if oracle.is_binary() {
        Ok(())
    } else {
        Err(AttackError::NotBinary)
    }
}

fn require_kary(oracle: &dyn LossOracle) -> Result<(), AttackError> {
    if oracle.is_binary() {
        Err(AttackError::NotKary)
    } else {
        Ok(())
    }
}
