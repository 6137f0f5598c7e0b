//! Noise models applied to scores before they leave the oracle.

use num_rational::BigRational;
use num_traits::Signed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::loss::{Arithmetic, LossScore, ScoreValue};
use crate::numerics::fixed::{Fixed, DEFAULT_FRAC_BITS};
use crate::numerics::{fpa_round, FpaFormat, FpaValue};

use super::OracleError;

/// How a bounded additive perturbation in `[-τ, τ]` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundedMode {
    /// `η ~ Uniform[-τ, τ]`.
    Uniform,
    /// The endpoint `±τ` that leaves the registered decoder with the smaller
    /// margin; alternating signs when no decoder is registered.
    WorstCase,
    /// A fair random sign times `τ`.
    RandomSign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NoiseModel {
    None,
    BoundedAdditive {
        tau: f64,
        mode: BoundedMode,
        seed: u64,
    },
    /// `η = c (Z² - 1)` with `Z` standard normal and `c = min(λ/2, ν/4)`, so
    /// that `η` is sub-exponential with parameters `(λ, ν)`.
    Subexponential {
        lambda: f64,
        nu: f64,
        seed: u64,
    },
    Gaussian {
        stddev: f64,
        seed: u64,
    },
    /// `ℓ (1 + η)` with `η ~ Uniform[-α, α]`.
    Multiplicative {
        alpha: f64,
        seed: u64,
    },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), OracleError> {
        let bad = |m: &str| Err(OracleError::InvalidConfig(m.to_string()));
        match *self {
            NoiseModel::None => Ok(()),
            NoiseModel::BoundedAdditive { tau, .. } if !(tau > 0.0 && tau.is_finite()) => {
                bad("bounded noise needs a finite τ > 0")
            }
            NoiseModel::Subexponential { lambda, nu, .. }
                if !(lambda > 0.0 && nu > 0.0 && lambda.is_finite() && nu.is_finite()) =>
            {
                bad("sub-exponential noise needs λ > 0 and ν > 0")
            }
            NoiseModel::Gaussian { stddev, .. } if !(stddev > 0.0 && stddev.is_finite()) => {
                bad("gaussian noise needs a finite standard deviation > 0")
            }
            NoiseModel::Multiplicative { alpha, .. } if !(0.0..1.0).contains(&alpha) => {
                bad("multiplicative noise needs α in [0, 1)")
            }
            _ => Ok(()),
        }
    }

    /// Short name used in reports.
    pub fn kind(&self) -> &'static str {
        match self {
            NoiseModel::None => "none",
            NoiseModel::BoundedAdditive { .. } => "bounded",
            NoiseModel::Subexponential { .. } => "subexp",
            NoiseModel::Gaussian { .. } => "gauss",
            NoiseModel::Multiplicative { .. } => "mult",
        }
    }

    /// Headline scale parameter (τ, λ, σ or α).
    pub fn scale(&self) -> f64 {
        match *self {
            NoiseModel::None => 0.0,
            NoiseModel::BoundedAdditive { tau, .. } => tau,
            NoiseModel::Subexponential { lambda, .. } => lambda,
            NoiseModel::Gaussian { stddev, .. } => stddev,
            NoiseModel::Multiplicative { alpha, .. } => alpha,
        }
    }

    fn seed(&self) -> u64 {
        match *self {
            NoiseModel::None => 0,
            NoiseModel::BoundedAdditive { seed, .. }
            | NoiseModel::Subexponential { seed, .. }
            | NoiseModel::Gaussian { seed, .. }
            | NoiseModel::Multiplicative { seed, .. } => seed,
        }
    }
}

/// An attacker's decoder, exposed to the worst-case adversary.
pub trait DecodeProbe: Send + Sync {
    /// Gap between the second-nearest and the nearest candidate score when
    /// `observed` is returned. Smaller means harder to decode.
    fn margin(&self, observed: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Perturbation {
    Add(f64),
    Scale(f64),
}

pub(crate) struct NoiseSampler {
    model: NoiseModel,
    rng: ChaCha8Rng,
    draws: u64,
}

impl NoiseSampler {
    pub(crate) fn new(model: NoiseModel) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(model.seed());
        NoiseSampler { model, rng, draws: 0 }
    }

    fn draw(&mut self, truth: f64, probe: Option<&dyn DecodeProbe>) -> Option<Perturbation> {
        let k = self.draws;
        self.draws += 1;
        match self.model {
            NoiseModel::None => None,
            NoiseModel::BoundedAdditive { tau, mode, .. } => Some(Perturbation::Add(match mode {
                BoundedMode::Uniform => self.rng.random_range(-tau..=tau),
                BoundedMode::RandomSign => {
                    if self.rng.random::<bool>() {
                        tau
                    } else {
                        -tau
                    }
                }
                BoundedMode::WorstCase => match probe {
                    Some(p) => {
                        if p.margin(truth - tau) < p.margin(truth + tau) {
                            -tau
                        } else {
                            tau
                        }
                    }
                    None if k.is_multiple_of(2) => tau,
                    None => -tau,
                },
            })),
            NoiseModel::Subexponential { lambda, nu, .. } => {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                Some(Perturbation::Add((lambda / 2.0).min(nu / 4.0) * (z * z - 1.0)))
            }
            NoiseModel::Gaussian { stddev, .. } => {
                let d = Normal::new(0.0, stddev).expect("validated stddev");
                Some(Perturbation::Add(d.sample(&mut self.rng)))
            }
            NoiseModel::Multiplicative { alpha, .. } => {
                let eta = if alpha > 0.0 { self.rng.random_range(-alpha..=alpha) } else { 0.0 };
                Some(Perturbation::Scale(eta))
            }
        }
    }

    /// Noised copy of `truth`.
    pub(crate) fn apply(&mut self, truth: &LossScore, arith: Arithmetic, probe: Option<&dyn DecodeProbe>) -> LossScore {
        let Some(p) = self.draw(truth.to_f64(), probe) else {
            return truth.clone();
        };
        let n = truth.n();
        match arith {
            Arithmetic::Apa => {
                let frac = DEFAULT_FRAC_BITS;
                let l = truth.to_fixed(frac);
                let noised = match p {
                    Perturbation::Add(eta) => &l + &Fixed::from_f64(eta, frac).expect("finite noise"),
                    Perturbation::Scale(eta) => l.mul(&Fixed::from_f64(1.0 + eta, frac).expect("finite noise")),
                };
                LossScore::new(n, ScoreValue::Log(noised))
            }
            Arithmetic::Fpa(fmt) => {
                let ScoreValue::Float(l) = truth.value() else { unreachable!("float oracles produce float scores") };
                let bound = match self.model {
                    NoiseModel::BoundedAdditive { tau, .. } => Some(tau),
                    _ => None,
                };
                let r = match p {
                    Perturbation::Add(eta) => {
                        let r = fmt.add(*l, fpa_round(eta, fmt));
                        match bound {
                            Some(tau) => {
                                let tau = BigRational::from_float(tau).expect("finite τ");
                                clamp(fmt, *l, r, |d, _| d <= tau)
                            }
                            None => r,
                        }
                    }
                    Perturbation::Scale(eta) => {
                        let r = fmt.mul(*l, fpa_round(1.0 + eta, fmt));
                        let alpha = match self.model {
                            NoiseModel::Multiplicative { alpha, .. } => alpha,
                            _ => unreachable!(),
                        };
                        let a = BigRational::from_float(alpha).expect("finite α");
                        clamp(fmt, *l, r, |d, t| d <= &a * t.abs())
                    }
                };
                LossScore::new(n, ScoreValue::Float(r))
            }
        }
    }
}

/// Step `r` toward `truth` on the format grid until `ok(|r - truth|, truth)`
/// holds exactly.
fn clamp(fmt: FpaFormat, truth: FpaValue, mut r: FpaValue, ok: impl Fn(BigRational, BigRational) -> bool) -> FpaValue {
    let Some(t) = BigRational::from_float(truth.get()) else {
        return r;
    };
    loop {
        let Some(x) = BigRational::from_float(r.get()) else {
            r = fmt.next_toward(r, truth.get());
            continue;
        };
        if ok((&x - &t).abs(), t.clone()) || r == truth {
            return r;
        }
        r = fmt.next_toward(r, truth.get());
    }
}
