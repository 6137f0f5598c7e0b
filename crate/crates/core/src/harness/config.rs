//! Experiment configuration.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attacks::{plan_for_multiplicative, tau_for_subexponential, ChunkPolicy};
use crate::loss::Arithmetic;
use crate::oracle::{BoundedMode, NoiseModel, TranscriptLevel};

use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttackKind {
    /// Prime-weight single query.
    Exact1,
    /// Prime-weight chunked queries.
    ExactM,
    Kary1,
    KaryM,
    /// Noise-robust single query.
    Robust1,
    RobustM,
}

impl AttackKind {
    pub const ALL: [AttackKind; 6] = [
        AttackKind::Exact1,
        AttackKind::ExactM,
        AttackKind::Kary1,
        AttackKind::KaryM,
        AttackKind::Robust1,
        AttackKind::RobustM,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Exact1 => "exact1",
            AttackKind::ExactM => "exactM",
            AttackKind::Kary1 => "kary1",
            AttackKind::KaryM => "karyM",
            AttackKind::Robust1 => "robust1",
            AttackKind::RobustM => "robustM",
        }
    }

    pub fn is_kary(self) -> bool {
        matches!(self, AttackKind::Kary1 | AttackKind::KaryM)
    }

    pub fn is_robust(self) -> bool {
        matches!(self, AttackKind::Robust1 | AttackKind::RobustM)
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| HarnessError::Config(format!("unknown attack kind {s:?}")))
    }
}

/// Noise as configured, before per-trial seeds are attached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoiseSpec {
    None,
    Bounded {
        tau: f64,
        mode: BoundedMode,
    },
    /// Gaussian with standard deviation `stddev`; robust attacks assume the
    /// bound `stddev √(2 ln(2/δ))`, exceeded with probability at most `δ`.
    Gaussian {
        stddev: f64,
        delta: f64,
    },
    Subexponential {
        lambda: f64,
        nu: f64,
        delta: f64,
    },
    Multiplicative {
        alpha: f64,
    },
}

impl NoiseSpec {
    pub fn model(&self, seed: u64) -> NoiseModel {
        match *self {
            NoiseSpec::None => NoiseModel::None,
            NoiseSpec::Bounded { tau, mode } => NoiseModel::BoundedAdditive { tau, mode, seed },
            NoiseSpec::Gaussian { stddev, .. } => NoiseModel::Gaussian { stddev, seed },
            NoiseSpec::Subexponential { lambda, nu, .. } => NoiseModel::Subexponential { lambda, nu, seed },
            NoiseSpec::Multiplicative { alpha } => NoiseModel::Multiplicative { alpha, seed },
        }
    }

    pub fn kind(&self) -> &'static str {
        self.model(0).kind()
    }

    pub fn scale(&self) -> f64 {
        self.model(0).scale()
    }

    /// Bound `τ` handed to the robust attacks, and for multiplicative noise
    /// the chunk size that keeps scores small enough for it to hold.
    pub fn robust_bound(&self, fallback: Option<f64>) -> Result<(f64, Option<usize>), HarnessError> {
        let missing = || HarnessError::Config("robust attacks need a noise bound (--scale)".into());
        Ok(match *self {
            NoiseSpec::None => (fallback.ok_or_else(missing)?, None),
            NoiseSpec::Bounded { tau, .. } => (tau, None),
            NoiseSpec::Gaussian { stddev, delta } => {
                if !(delta > 0.0 && delta < 1.0) {
                    return Err(HarnessError::Config(format!("δ = {delta} is outside (0, 1)")));
                }
                (stddev * (2.0 * (2.0 / delta).ln()).sqrt(), None)
            }
            NoiseSpec::Subexponential { lambda, nu, delta } => (tau_for_subexponential(lambda, nu, delta)?, None),
            NoiseSpec::Multiplicative { alpha } => {
                let (m, tau) = plan_for_multiplicative(alpha)?;
                (tau, Some(m))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelSource {
    /// Fresh uniformly random labels per trial.
    Simulated,
    /// The same labels, read from a file, in every trial.
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(HarnessError::Config(format!("unknown report format {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub attack: AttackKind,
    /// Dataset sizes, run in order. Ignored for file labels, whose length
    /// is used instead.
    pub n_values: Vec<usize>,
    pub k: u32,
    /// Trials per `N`; `None` picks 1000 up to `N = 64` and 100 above.
    pub trials: Option<usize>,
    pub arithmetic: Arithmetic,
    pub noise: NoiseSpec,
    /// Bound assumed by robust attacks when no noise is configured.
    pub assumed_tau: Option<f64>,
    pub chunk: ChunkPolicy,
    pub seed: u64,
    pub labels: LabelSource,
    /// Randomized-response flip probability applied by the server.
    pub rr_p: Option<f64>,
    /// Worker threads; `None` uses all cores.
    pub workers: Option<usize>,
    pub transcript: TranscriptLevel,
    pub output: Option<(PathBuf, ReportFormat)>,
}

impl ExperimentConfig {
    /// Noiseless, simulated, single-`N` defaults.
    pub fn new(attack: AttackKind, n: usize, arithmetic: Arithmetic, seed: u64) -> Self {
        ExperimentConfig {
            attack,
            n_values: vec![n],
            k: 2,
            trials: None,
            arithmetic,
            noise: NoiseSpec::None,
            assumed_tau: None,
            chunk: ChunkPolicy::Theory,
            seed,
            labels: LabelSource::Simulated,
            rr_p: None,
            workers: None,
            transcript: TranscriptLevel::Counts,
            output: None,
        }
    }

    pub fn trials_for(&self, n: usize) -> usize {
        self.trials.unwrap_or(if n <= 64 { 1000 } else { 100 })
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.n_values.is_empty() && self.labels == LabelSource::Simulated {
            return bad("no dataset sizes".into());
        }
        if self.n_values.contains(&0) {
            return bad("N must be positive".into());
        }
        if self.k < 2 {
            return bad(format!("K = {} is below 2", self.k));
        }
        if !self.attack.is_kary() && self.k != 2 {
            return bad(format!("{} is a binary attack but K = {}", self.attack, self.k));
        }
        if self.trials == Some(0) {
            return bad("trials must be positive".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be positive".into());
        }
        if let Some(p) = self.rr_p {
            if self.attack.is_kary() {
                return bad("randomized response applies to binary labels only".into());
            }
            if !(0.0..0.5).contains(&p) {
                return bad(format!("flip probability {p} is outside [0, 0.5)"));
            }
        }
        self.noise.model(0).validate()?;
        if self.attack.is_robust() {
            let (tau, _) = self.noise.robust_bound(self.assumed_tau)?;
            if !(tau > 0.0 && tau.is_finite()) {
                return bad(format!("robust bound τ = {tau} must be positive"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attack_names_round_trip() {
        for k in AttackKind::ALL {
            assert_eq!(k.name().parse::<AttackKind>().unwrap(), k);
        }
        assert!("exact2".parse::<AttackKind>().is_err());
    }

    #[test]
    fn trial_defaults() {
        let cfg = ExperimentConfig::new(AttackKind::Exact1, 5, Arithmetic::Apa, 0);
        assert_eq!(cfg.trials_for(64), 1000);
        assert_eq!(cfg.trials_for(65), 100);
    }

    #[test]
    fn gaussian_bound() {
        let (tau, m) = NoiseSpec::Gaussian { stddev: 0.5, delta: 0.1 }.robust_bound(None).unwrap();
        assert!((tau - 0.5 * (2.0 * 20f64.ln()).sqrt()).abs() < 1e-12);
        assert_eq!(m, None);
        assert!(NoiseSpec::None.robust_bound(None).is_err());
        assert_eq!(NoiseSpec::None.robust_bound(Some(0.2)).unwrap().0, 0.2);
        assert_eq!(NoiseSpec::Multiplicative { alpha: 0.125 }.robust_bound(None).unwrap().1, Some(1));
    }

    #[test]
    fn validation() {
        let mut cfg = ExperimentConfig::new(AttackKind::Robust1, 5, Arithmetic::Apa, 0);
        assert!(cfg.validate().is_err());
        cfg.noise = NoiseSpec::Bounded { tau: 0.1, mode: BoundedMode::Uniform };
        cfg.validate().unwrap();
        cfg.k = 3;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::new(AttackKind::Kary1, 5, Arithmetic::Apa, 0);
        cfg.k = 3;
        cfg.validate().unwrap();
        cfg.rr_p = Some(0.1);
        assert!(cfg.validate().is_err());
    }
}
