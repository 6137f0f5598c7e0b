//! `llinfer`: run label-inference experiments against a simulated log-loss
//! scoring server and check the combinatorial facts they rely on.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::FromPrimitive;

use logloss_inference::analysis::{delta_loss_gap, mu_subset_sums, robust_vector_lower_bound_check, verify_robustness};
use logloss_inference::attacks::ChunkPolicy;
use logloss_inference::harness::{
    load_labels, run_experiment, AttackKind, ExperimentConfig, HarnessError, LabelKind, LabelSource, NoiseSpec,
    ReportFormat,
};
use logloss_inference::loss::{Arithmetic, WeightVector};
use logloss_inference::numerics::FpaFormat;
use logloss_inference::oracle::BoundedMode;

#[derive(Parser)]
#[command(name = "llinfer", version, about = "Label inference from log-loss scores")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one attack configuration at a single N.
    Attack(AttackArgs),
    /// Run an attack over a range of N.
    Sweep(SweepArgs),
    /// Brute-force checks on weight vectors and subset sums.
    #[command(subcommand)]
    Verify(Verify),
    /// Run an attack or sweep against a server that applies randomized response.
    Defend(DefendArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Arith {
    Apa,
    Fpa,
}

#[derive(Clone, Copy, ValueEnum)]
enum Noise {
    None,
    Bounded,
    Gauss,
    Subexp,
    Mult,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Clone)]
struct AttackArgs {
    #[arg(long, value_parser = parse_kind)]
    kind: AttackKind,
    /// Dataset size; taken from the file when --labels is given.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 2)]
    k: u32,
    #[arg(long, value_enum)]
    arith: Arith,
    /// Exponent bits of the float format.
    #[arg(long, default_value_t = 11)]
    phi_a: u32,
    /// Significand bits (hidden bit included) of the float format.
    #[arg(long, default_value_t = 53)]
    phi_b: u32,
    #[arg(long, value_enum, default_value_t = Noise::None)]
    noise: Noise,
    /// τ for bounded noise, σ for gaussian noise; the assumed bound for
    /// robust attacks without noise.
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    lambda: f64,
    #[arg(long, default_value_t = 4.0)]
    nu: f64,
    /// Failure probability for gaussian and sub-exponential bounds.
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long)]
    alpha: Option<f64>,
    /// theory, budget or fixed:M.
    #[arg(long, default_value = "theory", value_parser = parse_chunk)]
    chunk: ChunkPolicy,
    #[arg(long)]
    seed: u64,
    /// Label file, one label per line.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Trials per N; 1000 up to N = 64 and 100 above by default.
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads; all cores by default.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Clone)]
struct SweepArgs {
    #[command(flatten)]
    base: AttackArgs,
    #[arg(long)]
    n_from: usize,
    #[arg(long)]
    n_to: usize,
    #[arg(long, default_value_t = 1)]
    n_step: usize,
}

#[derive(Subcommand)]
enum Verify {
    /// Smallest gap between distinct subset sums.
    Mu {
        /// Comma-separated positive reals.
        #[arg(long)]
        set: String,
    },
    /// Smallest loss gap between distinct labelings.
    Delta {
        /// Comma-separated weights: integers, fractions a/b or decimals.
        #[arg(long)]
        weights: String,
    },
    /// Whether a weight vector tolerates noise of size τ.
    Robust {
        #[arg(long)]
        weights: String,
        #[arg(long)]
        tau: f64,
    },
    /// Grid search for the smallest robust vector at N ≤ 6.
    Lowerbound {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        tau: f64,
        #[arg(long, default_value_t = 4)]
        steps: u64,
    },
}

#[derive(Args)]
struct DefendArgs {
    /// Probability of flipping each label.
    #[arg(long)]
    rr_p: f64,
    #[command(subcommand)]
    run: DefendRun,
}

#[derive(Subcommand)]
enum DefendRun {
    Attack(AttackArgs),
    Sweep(SweepArgs),
}

fn parse_kind(s: &str) -> Result<AttackKind, String> {
    s.parse().map_err(|e: HarnessError| e.to_string())
}

fn parse_chunk(s: &str) -> Result<ChunkPolicy, String> {
    s.parse().map_err(|e: logloss_inference::attacks::AttackError| e.to_string())
}

fn config(a: &AttackArgs, n_values: Vec<usize>) -> Result<ExperimentConfig> {
    let arithmetic = match a.arith {
        Arith::Apa => Arithmetic::Apa,
        Arith::Fpa => Arithmetic::Fpa(FpaFormat::new(a.phi_a, a.phi_b)?),
    };
    let need_scale = || a.scale.context("--scale is required for this noise model");
    let noise = match a.noise {
        Noise::None => NoiseSpec::None,
        Noise::Bounded => NoiseSpec::Bounded { tau: need_scale()?, mode: BoundedMode::Uniform },
        Noise::Gauss => NoiseSpec::Gaussian { stddev: need_scale()?, delta: a.delta },
        Noise::Subexp => NoiseSpec::Subexponential { lambda: a.lambda, nu: a.nu, delta: a.delta },
        Noise::Mult => NoiseSpec::Multiplicative { alpha: a.alpha.or(a.scale).context("--alpha is required")? },
    };
    let mut cfg = ExperimentConfig::new(a.kind, 1, arithmetic, a.seed);
    cfg.n_values = n_values;
    cfg.k = a.k;
    cfg.trials = a.trials;
    cfg.noise = noise;
    cfg.assumed_tau = if matches!(a.noise, Noise::None) { a.scale } else { None };
    cfg.chunk = a.chunk;
    cfg.workers = a.workers;
    cfg.labels = a.labels.clone().map_or(LabelSource::Simulated, LabelSource::File);
    let format = match a.format {
        Format::Csv => ReportFormat::Csv,
        Format::Json => ReportFormat::Json,
    };
    cfg.output = Some((a.out.clone(), format));
    Ok(cfg)
}

fn attack_config(a: &AttackArgs) -> Result<ExperimentConfig> {
    let n = match (a.n, &a.labels) {
        (Some(n), _) => vec![n],
        (None, Some(_)) => Vec::new(),
        (None, None) => bail!("--n is required without --labels"),
    };
    let cfg = config(a, n)?;
    if let (Some(n), Some(path)) = (a.n, &a.labels) {
        let kind = if a.kind.is_kary() { LabelKind::Kary(a.k) } else { LabelKind::Binary };
        let len = load_labels(path, kind)?.len();
        if len != n {
            bail!("--n {n} does not match the {len} labels in {}", path.display());
        }
    }
    Ok(cfg)
}

fn sweep_config(s: &SweepArgs) -> Result<ExperimentConfig> {
    if s.n_step == 0 || s.n_from == 0 || s.n_from > s.n_to {
        bail!("need 1 <= --n-from <= --n-to and --n-step >= 1");
    }
    config(&s.base, (s.n_from..=s.n_to).step_by(s.n_step).collect())
}

fn run(cfg: ExperimentConfig) -> Result<()> {
    let report = run_experiment(&cfg)?;
    println!("attack,N,K,trials,failed,mean_accuracy,max_accuracy,mean_queries,mean_wall_ms");
    for a in report.aggregates() {
        println!(
            "{},{},{},{},{},{:.6},{:.6},{:.1},{:.4}",
            a.attack, a.n, a.k, a.trials, a.failed, a.mean_accuracy, a.max_accuracy, a.mean_queries, a.mean_wall_ms
        );
    }
    if let Some(first) = report.details.iter().find_map(|d| d.error.as_deref()) {
        eprintln!("some trials failed, first error: {first}");
    }
    Ok(())
}

fn parse_weights(s: &str) -> Result<WeightVector> {
    let entries = s
        .split(',')
        .map(|t| {
            let t = t.trim();
            if let Some((a, b)) = t.split_once('/') {
                let a: BigInt = a.trim().parse().with_context(|| format!("bad numerator in {t:?}"))?;
                let b: BigInt = b.trim().parse().with_context(|| format!("bad denominator in {t:?}"))?;
                if b == BigInt::from(0) {
                    bail!("zero denominator in {t:?}");
                }
                Ok(BigRational::new(a, b))
            } else if let Ok(i) = t.parse::<BigInt>() {
                Ok(BigRational::from_integer(i))
            } else {
                let x: f64 = t.parse().with_context(|| format!("bad weight {t:?}"))?;
                BigRational::from_f64(x).with_context(|| format!("weight {t:?} is not finite"))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WeightVector::from_rationals(entries)?)
}

fn parse_reals(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|t| t.trim().parse::<f64>().with_context(|| format!("bad number {t:?}"))).collect()
}

fn verify(v: Verify) -> Result<()> {
    let json = match v {
        Verify::Mu { set } => serde_json::to_string_pretty(&mu_subset_sums(&parse_reals(&set)?)?)?,
        Verify::Delta { weights } => serde_json::to_string_pretty(&delta_loss_gap(&parse_weights(&weights)?)?)?,
        Verify::Robust { weights, tau } => {
            serde_json::to_string_pretty(&verify_robustness(&parse_weights(&weights)?, tau)?)?
        }
        Verify::Lowerbound { n, tau, steps } => {
            serde_json::to_string_pretty(&robust_vector_lower_bound_check(n, tau, steps)?)?
        }
    };
    println!("{json}");
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Attack(a) => run(attack_config(&a)?),
        Command::Sweep(s) => run(sweep_config(&s)?),
        Command::Verify(v) => verify(v),
        Command::Defend(d) => {
            let mut cfg = match &d.run {
                DefendRun::Attack(a) => attack_config(a)?,
                DefendRun::Sweep(s) => sweep_config(s)?,
            };
            cfg.rr_p = Some(d.rr_p);
            run(cfg)
        }
    }
}
