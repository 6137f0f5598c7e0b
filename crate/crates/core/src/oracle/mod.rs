//! The simulated scoring server.
//!
//! An [`Oracle`] holds a hidden labeling and answers prediction queries with
//! their log-loss, evaluated in a chosen arithmetic and optionally perturbed by
//! noise. Attacks see it only through [`LossOracle`]; the transcript and the
//! labels stay on the audit side.

mod defense;
mod noise;

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::loss::{
    binary_log_loss_in, kary_log_loss_in, Arithmetic, Labeling, LossError, LossScore, PredictionMatrix,
    PredictionVector,
};

pub use defense::RandomizedResponse;
pub use noise::{BoundedMode, DecodeProbe, NoiseModel};

use noise::NoiseSampler;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("query has {got} entries, oracle holds {expected} labels")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("query has {got} classes, oracle holds {expected}")]
    ClassMismatch { expected: u32, got: u32 },
    #[error("{0}")]
    WrongKind(&'static str),
    #[error("query budget of {budget} exhausted")]
    BudgetExhausted { budget: usize },
    #[error("invalid oracle configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// What an attacker can do with a scoring server.
pub trait LossOracle: Send + Sync {
    /// Number of hidden labels.
    fn len(&self) -> usize;
    /// Number of classes; 2 for a binary oracle.
    fn classes(&self) -> u32;
    fn is_binary(&self) -> bool;
    fn arithmetic(&self) -> Arithmetic;
    fn query_binary(&self, u: &PredictionVector) -> Result<LossScore, OracleError>;
    fn query_kary(&self, u: &PredictionMatrix) -> Result<LossScore, OracleError>;
    fn queries_made(&self) -> usize;
    /// Let an adaptive adversary see how the next queries will be decoded.
    fn register_probe(&self, _probe: Option<Arc<dyn DecodeProbe>>) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TranscriptLevel {
    /// Queries, returned scores and unperturbed scores.
    #[default]
    Full,
    /// Scores only.
    Scores,
    /// Only the query count.
    Counts,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Query {
    Binary(PredictionVector),
    Kary(PredictionMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptEntry {
    pub query: Option<Query>,
    pub returned: LossScore,
    pub truth: LossScore,
}

#[derive(Debug, Clone)]
pub struct OracleConfig {
    pub labeling: Labeling,
    pub arithmetic: Arithmetic,
    pub noise: NoiseModel,
    pub budget: Option<usize>,
    pub defense: Option<RandomizedResponse>,
    pub transcript: TranscriptLevel,
}

impl OracleConfig {
    pub fn new(labeling: Labeling, arithmetic: Arithmetic) -> Self {
        OracleConfig {
            labeling,
            arithmetic,
            noise: NoiseModel::None,
            budget: None,
            defense: None,
            transcript: TranscriptLevel::Full,
        }
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn with_defense(mut self, defense: RandomizedResponse) -> Self {
        self.defense = Some(defense);
        self
    }

    pub fn with_transcript(mut self, level: TranscriptLevel) -> Self {
        self.transcript = level;
        self
    }
}

struct State {
    count: usize,
    transcript: Vec<TranscriptEntry>,
    sampler: NoiseSampler,
    probe: Option<Arc<dyn DecodeProbe>>,
}

/// A scoring server. Queries are serialized, so the count and the noise
/// stream stay consistent when shared across threads.
pub struct Oracle {
    labels: Labeling,
    scoring: Labeling,
    arithmetic: Arithmetic,
    budget: Option<usize>,
    level: TranscriptLevel,
    state: Mutex<State>,
}

impl Oracle {
    pub fn new(cfg: OracleConfig) -> Result<Self, OracleError> {
        if cfg.labeling.is_empty() {
            return Err(OracleError::InvalidConfig("no labels".into()));
        }
        if cfg.budget == Some(0) {
            return Err(OracleError::InvalidConfig("query budget must be positive".into()));
        }
        cfg.noise.validate()?;
        let scoring = match (&cfg.defense, &cfg.labeling) {
            (None, l) => l.clone(),
            (Some(rr), Labeling::Binary(b)) => {
                let rr = RandomizedResponse::new(rr.flip_p, rr.seed)?;
                Labeling::Binary(rr.apply(b))
            }
            (Some(_), Labeling::Kary(_)) => {
                return Err(OracleError::InvalidConfig("randomized response is only defined for binary labels".into()))
            }
        };
        Ok(Oracle {
            labels: cfg.labeling,
            scoring,
            arithmetic: cfg.arithmetic,
            budget: cfg.budget,
            level: cfg.transcript,
            state: Mutex::new(State {
                count: 0,
                transcript: Vec::new(),
                sampler: NoiseSampler::new(cfg.noise),
                probe: None,
            }),
        })
    }

    /// The labeling the server was configured with.
    pub fn labels(&self) -> &Labeling {
        &self.labels
    }

    /// The labeling actually scored against (after any defense).
    pub fn scoring_labels(&self) -> &Labeling {
        &self.scoring
    }

    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        self.lock().transcript.clone()
    }

    /// Re-score every recorded query and check it reproduces the recorded
    /// unperturbed score. Entries without a stored query are skipped.
    pub fn replay_matches(&self) -> Result<bool, OracleError> {
        for e in self.transcript() {
            let truth = match &e.query {
                Some(q) => self.score(q.into())?,
                None => continue,
            };
            if truth != e.truth {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn score(&self, q: QueryRef<'_>) -> Result<LossScore, OracleError> {
        Ok(match (q, &self.scoring) {
            (QueryRef::Binary(u), Labeling::Binary(s)) => binary_log_loss_in(u, s, self.arithmetic)?,
            (QueryRef::Kary(u), Labeling::Kary(s)) => kary_log_loss_in(u, s, self.arithmetic)?,
            (QueryRef::Binary(_), _) => return Err(OracleError::WrongKind("binary query sent to a K-ary oracle")),
            (QueryRef::Kary(_), _) => return Err(OracleError::WrongKind("K-ary query sent to a binary oracle")),
        })
    }

    fn check_shape(&self, q: QueryRef<'_>) -> Result<(), OracleError> {
        let got = match q {
            QueryRef::Binary(u) => u.len(),
            QueryRef::Kary(u) => {
                if u.k() != self.classes() && !self.is_binary() {
                    return Err(OracleError::ClassMismatch { expected: self.classes(), got: u.k() });
                }
                u.len()
            }
        };
        if got != self.len() {
            return Err(OracleError::DimensionMismatch { expected: self.len(), got });
        }
        Ok(())
    }

    fn answer(&self, q: QueryRef<'_>) -> Result<LossScore, OracleError> {
        self.check_shape(q)?;
        let mut st = self.lock();
        if let Some(budget) = self.budget {
            if st.count >= budget {
                return Err(OracleError::BudgetExhausted { budget });
            }
        }
        let truth = self.score(q)?;
        st.count += 1;
        let probe = st.probe.clone();
        let returned = st.sampler.apply(&truth, self.arithmetic, probe.as_deref());
        let query = match self.level {
            TranscriptLevel::Counts => return Ok(returned),
            TranscriptLevel::Scores => None,
            TranscriptLevel::Full => Some(match q {
                QueryRef::Binary(u) => Query::Binary(u.clone()),
                QueryRef::Kary(u) => Query::Kary(u.clone()),
            }),
        };
        st.transcript.push(TranscriptEntry { query, returned: returned.clone(), truth });
        Ok(returned)
    }
}

#[derive(Clone, Copy)]
enum QueryRef<'a> {
    Binary(&'a PredictionVector),
    Kary(&'a PredictionMatrix),
}

impl<'a> From<&'a Query> for QueryRef<'a> {
    fn from(q: &'a Query) -> Self {
        match q {
            Query::Binary(u) => QueryRef::Binary(u),
            Query::Kary(u) => QueryRef::Kary(u),
        }
    }
}

impl LossOracle for Oracle {
    fn len(&self) -> usize {
        self.labels.len()
    }

    fn classes(&self) -> u32 {
        self.labels.k()
    }

    fn is_binary(&self) -> bool {
        matches!(self.labels, Labeling::Binary(_))
    }

    fn arithmetic(&self) -> Arithmetic {
        self.arithmetic
    }

    fn query_binary(&self, u: &PredictionVector) -> Result<LossScore, OracleError> {
        self.answer(QueryRef::Binary(u))
    }

    fn query_kary(&self, u: &PredictionMatrix) -> Result<LossScore, OracleError> {
        self.answer(QueryRef::Kary(u))
    }

    fn queries_made(&self) -> usize {
        self.lock().count
    }

    fn register_probe(&self, probe: Option<Arc<dyn DecodeProbe>>) {
        self.lock().probe = probe;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{BinaryLabeling, KaryLabeling, Prob};
    use crate::numerics::{exact, FpaFormat};
    use num_rational::BigRational;
    use num_traits::Signed;

    fn binary(bits: &[u8]) -> Labeling {
        Labeling::Binary(BinaryLabeling::new(bits.to_vec()).unwrap())
    }

    fn five_point_query() -> PredictionVector {
        PredictionVector::new(
            [(2, 3), (3, 4), (5, 6), (7, 8), (11, 12)].iter().map(|&(a, b)| Prob::ratio(a, b).unwrap()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn uniform_query_returns_ln2() {
        let o = Oracle::new(OracleConfig::new(binary(&[1, 0, 1, 1]), Arithmetic::Apa)).unwrap();
        let s = o.query_binary(&PredictionVector::uniform_half(4).unwrap()).unwrap();
        assert_eq!(s.likelihood(), Some(&exact::ratio(1, 16)));
        assert!((s.to_f64() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn five_point_example() {
        let o = Oracle::new(OracleConfig::new(binary(&[0, 1, 1, 0, 1]), Arithmetic::Apa)).unwrap();
        let s = o.query_binary(&five_point_query()).unwrap();
        assert_eq!(s.likelihood(), Some(&exact::ratio(55, 2304)));
        assert!((s.to_f64() - (2304f64 / 55.0).ln() / 5.0).abs() < 1e-14);
        assert!(o.replay_matches().unwrap());
    }

    #[test]
    fn budget_is_enforced() {
        let o = Oracle::new(OracleConfig::new(binary(&[1, 0]), Arithmetic::Apa).with_budget(1)).unwrap();
        let q = PredictionVector::uniform_half(2).unwrap();
        o.query_binary(&q).unwrap();
        assert!(matches!(o.query_binary(&q), Err(OracleError::BudgetExhausted { budget: 1 })));
        assert_eq!(o.queries_made(), 1);
    }

    #[test]
    fn shape_errors() {
        let o = Oracle::new(OracleConfig::new(binary(&[1, 0, 1]), Arithmetic::Apa)).unwrap();
        let q = PredictionVector::uniform_half(2).unwrap();
        assert!(matches!(o.query_binary(&q), Err(OracleError::DimensionMismatch { expected: 3, got: 2 })));
        let m = PredictionMatrix::uniform(3, 3).unwrap();
        assert!(o.query_kary(&m).is_err());
        assert_eq!(o.queries_made(), 0);

        let k = Labeling::Kary(KaryLabeling::new(vec![1, 3, 2], 3).unwrap());
        let o = Oracle::new(OracleConfig::new(k, Arithmetic::Apa)).unwrap();
        assert!(matches!(
            o.query_kary(&PredictionMatrix::uniform(3, 4).unwrap()),
            Err(OracleError::ClassMismatch { .. })
        ));
        let s = o.query_kary(&PredictionMatrix::uniform(3, 3).unwrap()).unwrap();
        assert_eq!(s.likelihood(), Some(&exact::ratio(1, 27)));
    }

    #[test]
    fn bounded_noise_stays_within_tau() {
        let tau = 0.1;
        let cfg = OracleConfig::new(binary(&[0, 1, 1, 0, 1]), Arithmetic::Fpa(FpaFormat::BINARY64))
            .with_noise(NoiseModel::BoundedAdditive { tau, mode: BoundedMode::Uniform, seed: 11 });
        let o = Oracle::new(cfg).unwrap();
        let q = five_point_query();
        for _ in 0..1000 {
            o.query_binary(&q).unwrap();
        }
        let t = BigRational::from_float(tau).unwrap();
        for e in o.transcript() {
            let d = BigRational::from_float(e.returned.to_f64()).unwrap()
                - BigRational::from_float(e.truth.to_f64()).unwrap();
            assert!(d.abs() <= t);
        }
    }

    #[test]
    fn noise_is_reproducible_from_seed() {
        let run = |seed| {
            let cfg = OracleConfig::new(binary(&[1, 1, 0]), Arithmetic::Apa)
                .with_noise(NoiseModel::Gaussian { stddev: 0.5, seed });
            let o = Oracle::new(cfg).unwrap();
            let q = PredictionVector::uniform_half(3).unwrap();
            (0..5).map(|_| o.query_binary(&q).unwrap().to_f64()).collect::<Vec<_>>()
        };
        assert_eq!(run(4), run(4));
        assert_ne!(run(4), run(5));
    }

    #[test]
    fn defense_changes_scoring_labels_only() {
        let l = BinaryLabeling::random(2000, &mut rand::rng()).unwrap();
        let cfg = OracleConfig::new(Labeling::Binary(l.clone()), Arithmetic::Apa)
            .with_defense(RandomizedResponse { flip_p: 0.2, seed: 1 });
        let o = Oracle::new(cfg).unwrap();
        assert_eq!(o.labels(), &Labeling::Binary(l.clone()));
        let Labeling::Binary(s) = o.scoring_labels() else { panic!() };
        let frac = s.hamming(&l) as f64 / 2000.0;
        assert!((0.15..0.25).contains(&frac), "{frac}");

        let k = Labeling::Kary(KaryLabeling::new(vec![1, 2], 3).unwrap());
        let cfg = OracleConfig::new(k, Arithmetic::Apa).with_defense(RandomizedResponse { flip_p: 0.2, seed: 1 });
        assert!(Oracle::new(cfg).is_err());
        let cfg =
            OracleConfig::new(binary(&[1]), Arithmetic::Apa).with_defense(RandomizedResponse { flip_p: 0.5, seed: 1 });
        assert!(Oracle::new(cfg).is_err());
    }

    #[test]
    fn transcript_levels() {
        let q = PredictionVector::uniform_half(2).unwrap();
        for (level, stored, has_query) in
            [(TranscriptLevel::Full, 1, true), (TranscriptLevel::Scores, 1, false), (TranscriptLevel::Counts, 0, false)]
        {
            let o = Oracle::new(OracleConfig::new(binary(&[0, 1]), Arithmetic::Apa).with_transcript(level)).unwrap();
            o.query_binary(&q).unwrap();
            let t = o.transcript();
            assert_eq!(t.len(), stored);
            assert_eq!(t.first().map(|e| e.query.is_some()).unwrap_or(false), has_query);
            assert_eq!(o.queries_made(), 1);
        }
    }

    #[test]
    fn counter_is_exact_across_threads() {
        let o = Oracle::new(OracleConfig::new(binary(&[0, 1, 1]), Arithmetic::Apa)).unwrap();
        let q = PredictionVector::uniform_half(3).unwrap();
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| {
                    for _ in 0..50 {
                        o.query_binary(&q).unwrap();
                    }
                });
            }
        });
        assert_eq!(o.queries_made(), 400);
        assert_eq!(o.transcript().len(), 400);
    }
}
