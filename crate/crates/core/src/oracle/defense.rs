//! Randomized-response label perturbation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::loss::BinaryLabeling;

use super::OracleError;

/// Flip each label independently with probability `flip_p` before scoring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomizedResponse {
    pub flip_p: f64,
    pub seed: u64,
}

impl RandomizedResponse {
    pub fn new(flip_p: f64, seed: u64) -> Result<Self, OracleError> {
        if !(0.0..0.5).contains(&flip_p) {
            return Err(OracleError::InvalidConfig(format!("flip probability must lie in [0, 1/2), got {flip_p}")));
        }
        Ok(RandomizedResponse { flip_p, seed })
    }

    pub fn apply(&self, labels: &BinaryLabeling) -> BinaryLabeling {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = labels.clone();
        for i in 0..labels.len() {
            if self.flip_p > 0.0 && rng.random::<f64>() < self.flip_p {
                out.flip(i);
            }
        }
        out
    }
}
