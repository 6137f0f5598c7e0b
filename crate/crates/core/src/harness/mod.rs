//! Experiment harness: runs an attack over many seeded trials and reports
//! per-trial accuracy, query count and time.
//!
//! Trials are independent. Each owns a fresh oracle whose labels and noise
//! come from a seed derived from `(seed, N, trial)`, so a configuration
//! reproduces its report exactly, apart from `wall_ms`.

pub mod config;
pub mod labels;
pub mod report;

use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::attacks::{
    multi_query_binary_attack, multi_query_kary_attack, multi_query_robust_attack_with_plan, plan_chunks,
    plan_kary_chunks, robust_chunk_size, single_query_binary_attack, single_query_kary_attack,
    single_query_robust_attack, AttackError, ChunkPolicy, Recovery, RobustPlan,
};
use crate::loss::{Arithmetic, BinaryLabeling, KaryLabeling, Labeling, LossError};
use crate::oracle::{LossOracle, Oracle, OracleConfig, OracleError, RandomizedResponse};

pub use config::{AttackKind, ExperimentConfig, LabelSource, NoiseSpec, ReportFormat};
pub use labels::{load_labels, parse_labels, write_labels, LabelKind};
pub use report::{
    aggregate, emit_report, labeling_hash, read_report, Aggregate, AttackReport, RowSink, TrialDetail, TrialRow,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// Everything about one finished trial.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub row: TrialRow,
    pub detail: TrialDetail,
    /// Labels the server was configured with.
    pub truth: Labeling,
    /// Attack output, when it ran to completion.
    pub recovered: Option<Labeling>,
}

/// Seed of trial `trial` at size `n`: an independent ChaCha stream per
/// `(n, trial)` under the experiment seed.
pub fn trial_seed(seed: u64, n: usize, trial: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((n as u64) << 32) ^ trial as u64);
    rng.next_u64()
}

/// Labels for file-driven runs, loaded once.
fn fixed_labels(cfg: &ExperimentConfig) -> Result<Option<Labeling>, HarnessError> {
    match &cfg.labels {
        LabelSource::Simulated => Ok(None),
        LabelSource::File(path) => {
            let kind = if cfg.attack.is_kary() { LabelKind::Kary(cfg.k) } else { LabelKind::Binary };
            Ok(Some(load_labels(path, kind)?))
        }
    }
}

/// Sizes actually run: the file length for file labels.
pub fn sizes(cfg: &ExperimentConfig, fixed: Option<&Labeling>) -> Vec<usize> {
    match fixed {
        Some(l) => vec![l.len()],
        None => cfg.n_values.clone(),
    }
}

/// Runs every trial, streaming rows to `cfg.output` as each `N` finishes.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<AttackReport, HarnessError> {
    run_experiment_with(cfg, |_| {})
}

/// As [`run_experiment`], also handing each finished trial to `observe`, in
/// row order.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    mut observe: impl FnMut(&TrialOutcome),
) -> Result<AttackReport, HarnessError> {
    cfg.validate()?;
    let fixed = fixed_labels(cfg)?;
    let mut sink = match &cfg.output {
        Some((path, format)) => Some(RowSink::create(path, *format)?),
        None => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.unwrap_or(0))
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut report = AttackReport::default();
    for n in sizes(cfg, fixed.as_ref()) {
        let trials = cfg.trials_for(n);
        let mut outcomes: Vec<TrialOutcome> =
            pool.install(|| (0..trials).into_par_iter().map(|t| run_trial_with(cfg, n, t, fixed.as_ref())).collect());
        outcomes.sort_by_key(|o| o.row.trial);
        for o in outcomes {
            observe(&o);
            if let Some(s) = sink.as_mut() {
                s.push(&o.row)?;
            }
            report.rows.push(o.row);
            report.details.push(o.detail);
        }
    }
    if let Some(s) = sink {
        s.finish()?;
    }
    Ok(report)
}

/// Re-runs a single trial of `cfg`; identical to the corresponding trial of
/// [`run_experiment`] apart from timing.
pub fn run_trial(cfg: &ExperimentConfig, n: usize, trial: usize) -> Result<TrialOutcome, HarnessError> {
    cfg.validate()?;
    let fixed = fixed_labels(cfg)?;
    Ok(run_trial_with(cfg, n, trial, fixed.as_ref()))
}

fn run_trial_with(cfg: &ExperimentConfig, n: usize, trial: usize, fixed: Option<&Labeling>) -> TrialOutcome {
    let seed = trial_seed(cfg.seed, n, trial);
    let (phi_a, phi_b) = match cfg.arithmetic {
        Arithmetic::Apa => (None, None),
        Arithmetic::Fpa(f) => (Some(f.exp_bits()), Some(f.frac_bits())),
    };
    let mut row = TrialRow {
        attack: cfg.attack.name().to_string(),
        n,
        k: cfg.k,
        trial,
        seed,
        noise_kind: cfg.noise.kind().to_string(),
        noise_scale: cfg.noise.scale(),
        phi_a,
        phi_b,
        queries: 0,
        accuracy: None,
        wall_ms: 0.0,
    };
    let mut detail = TrialDetail { labeling_hash: None, unresolved: 0, out_of_contract: false, error: None };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Sizes and class counts were checked by `validate`.
    let truth = match fixed {
        Some(l) => Ok(l.clone()),
        None if cfg.attack.is_kary() => KaryLabeling::random(n, cfg.k, &mut rng).map(Labeling::Kary),
        None => BinaryLabeling::random(n, &mut rng).map(Labeling::Binary),
    }
    .expect("validated configuration");
    let noise_seed = rng.next_u64();
    let rr_seed = rng.next_u64();

    let result = execute(cfg, &truth, noise_seed, rr_seed);
    let recovered = match result {
        Ok((rec, queries, ms)) => {
            row.queries = queries;
            row.wall_ms = ms;
            detail.unresolved = rec.unresolved.len();
            detail.out_of_contract = rec.out_of_contract;
            detail.labeling_hash = Some(labeling_hash(&rec.labels));
            row.accuracy = Some(accuracy(&truth, &rec.labels, &rec.unresolved));
            Some(rec.labels)
        }
        Err((e, queries)) => {
            row.queries = queries;
            detail.error = Some(e.to_string());
            None
        }
    };
    TrialOutcome { row, detail, truth, recovered }
}

/// Fraction of labels matching `truth`; unresolved positions count as wrong
/// whatever placeholder they hold.
pub fn accuracy(truth: &Labeling, got: &Labeling, unresolved: &[usize]) -> f64 {
    let (a, b) = (truth.values(), got.values());
    if a.len() != b.len() {
        return 0.0;
    }
    let mut ok = vec![true; a.len()];
    for &i in unresolved {
        if let Some(x) = ok.get_mut(i) {
            *x = false;
        }
    }
    let correct = a.iter().zip(&b).zip(&ok).filter(|((x, y), &r)| r && x == y).count();
    correct as f64 / a.len() as f64
}

type Executed = Result<(Recovery<Labeling>, usize, f64), (HarnessError, usize)>;

fn execute(cfg: &ExperimentConfig, truth: &Labeling, noise_seed: u64, rr_seed: u64) -> Executed {
    let n = truth.len();
    let setup = || -> Result<(Oracle, Plan), HarnessError> {
        let mut oc = OracleConfig::new(truth.clone(), cfg.arithmetic)
            .with_noise(cfg.noise.model(noise_seed))
            .with_transcript(cfg.transcript);
        if let Some(p) = cfg.rr_p {
            oc = oc.with_defense(RandomizedResponse::new(p, rr_seed)?);
        }
        Ok((Oracle::new(oc)?, plan(cfg, n)?))
    };
    let (oracle, plan) = setup().map_err(|e| (e, 0))?;

    let start = Instant::now();
    let result = match (cfg.attack, plan) {
        (AttackKind::Exact1, _) => single_query_binary_attack(&oracle).map(binary),
        (AttackKind::ExactM, Plan::Chunks(p)) => multi_query_binary_attack(&oracle, &p).map(binary),
        (AttackKind::Kary1, _) => single_query_kary_attack(&oracle).map(kary),
        (AttackKind::KaryM, Plan::Chunks(p)) => multi_query_kary_attack(&oracle, &p).map(kary),
        (AttackKind::Robust1, Plan::Robust(p)) => single_query_robust_attack(&oracle, p.tau).map(binary),
        (AttackKind::RobustM, Plan::Robust(p)) => multi_query_robust_attack_with_plan(&oracle, &p).map(binary),
        _ => unreachable!("plan() matches the attack kind"),
    };
    let ms = start.elapsed().as_secs_f64() * 1e3;
    match result {
        Ok(r) => Ok((r, oracle.queries_made(), ms)),
        Err(e) => Err((e.into(), oracle.queries_made())),
    }
}

enum Plan {
    None,
    Chunks(crate::attacks::ChunkPlan),
    Robust(RobustPlan),
}

fn plan(cfg: &ExperimentConfig, n: usize) -> Result<Plan, HarnessError> {
    Ok(match cfg.attack {
        AttackKind::Exact1 | AttackKind::Kary1 => Plan::None,
        AttackKind::ExactM => Plan::Chunks(plan_chunks(n, cfg.arithmetic, cfg.chunk)?),
        AttackKind::KaryM => Plan::Chunks(plan_kary_chunks(n, cfg.k, cfg.arithmetic, cfg.chunk)?),
        AttackKind::Robust1 => {
            let (tau, _) = cfg.noise.robust_bound(cfg.assumed_tau)?;
            Plan::Robust(RobustPlan::new(n, tau, n)?)
        }
        AttackKind::RobustM => {
            let (tau, noise_m) = cfg.noise.robust_bound(cfg.assumed_tau)?;
            Plan::Robust(match (cfg.chunk, noise_m) {
                (ChunkPolicy::Fixed(m), _) => RobustPlan::new(n, tau, m.min(n))?,
                (_, Some(m)) => RobustPlan::new(n, tau, m.min(n))?,
                _ => robust_chunk_size(n, tau, cfg.arithmetic)?,
            })
        }
    })
}

fn binary(r: Recovery<BinaryLabeling>) -> Recovery<Labeling> {
    Recovery {
        labels: Labeling::Binary(r.labels),
        unresolved: r.unresolved,
        queries: r.queries,
        out_of_contract: r.out_of_contract,
    }
}

fn kary(r: Recovery<KaryLabeling>) -> Recovery<Labeling> {
    Recovery {
        labels: Labeling::Kary(r.labels),
        unresolved: r.unresolved,
        queries: r.queries,
        out_of_contract: r.out_of_contract,
    }
}
