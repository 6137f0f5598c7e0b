//! Per-trial report rows and their CSV/JSON encodings.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::loss::Labeling;

use super::config::ReportFormat;
use super::HarnessError;

/// One CSV/JSON row. A failed trial has an empty accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub attack: String,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: u32,
    pub trial: usize,
    pub seed: u64,
    pub noise_kind: String,
    pub noise_scale: f64,
    pub phi_a: Option<u32>,
    pub phi_b: Option<u32>,
    pub queries: usize,
    pub accuracy: Option<f64>,
    pub wall_ms: f64,
}

/// What a row leaves out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialDetail {
    /// Hash of the recovered labeling, see [`labeling_hash`].
    pub labeling_hash: Option<String>,
    pub unresolved: usize,
    pub out_of_contract: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub rows: Vec<TrialRow>,
    pub details: Vec<TrialDetail>,
}

/// Summary of the rows sharing one `(attack, N, K)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub attack: String,
    pub n: usize,
    pub k: u32,
    pub trials: usize,
    pub failed: usize,
    pub mean_accuracy: f64,
    pub max_accuracy: f64,
    /// Fraction of trials with accuracy 1.
    pub perfect: f64,
    pub mean_wall_ms: f64,
    pub mean_queries: f64,
}

impl AttackReport {
    pub fn aggregates(&self) -> Vec<Aggregate> {
        aggregate(&self.rows)
    }
}

/// Groups consecutive rows by `(attack, N, K)`. Failed trials count as
/// accuracy 0 in the mean and towards `failed`.
pub fn aggregate(rows: &[TrialRow]) -> Vec<Aggregate> {
    let mut out: Vec<Aggregate> = Vec::new();
    for chunk in rows.chunk_by(|a, b| (&a.attack, a.n, a.k) == (&b.attack, b.n, b.k)) {
        let t = chunk.len() as f64;
        let acc = |r: &TrialRow| r.accuracy.unwrap_or(0.0);
        out.push(Aggregate {
            attack: chunk[0].attack.clone(),
            n: chunk[0].n,
            k: chunk[0].k,
            trials: chunk.len(),
            failed: chunk.iter().filter(|r| r.accuracy.is_none()).count(),
            mean_accuracy: chunk.iter().map(acc).sum::<f64>() / t,
            max_accuracy: chunk.iter().map(acc).fold(0.0, f64::max),
            perfect: chunk.iter().filter(|r| r.accuracy == Some(1.0)).count() as f64 / t,
            mean_wall_ms: chunk.iter().map(|r| r.wall_ms).sum::<f64>() / t,
            mean_queries: chunk.iter().map(|r| r.queries as f64).sum::<f64>() / t,
        });
    }
    out
}

/// First 16 hex digits of the SHA-256 of the label values, one per line.
pub fn labeling_hash(labels: &Labeling) -> String {
    let mut h = Sha256::new();
    for v in labels.values() {
        h.update(v.to_string().as_bytes());
        h.update(b"\n");
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Streams rows to a file as they arrive.
pub enum RowSink {
    Csv(csv::Writer<File>),
    Json { out: BufWriter<File>, first: bool },
}

impl RowSink {
    pub fn create(path: &Path, format: ReportFormat) -> Result<Self, HarnessError> {
        let file = File::create(path)?;
        Ok(match format {
            ReportFormat::Csv => {
                let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
                // Written by hand so an empty report still has a header.
                w.write_record(CSV_HEADER)?;
                RowSink::Csv(w)
            }
            ReportFormat::Json => {
                let mut out = BufWriter::new(file);
                out.write_all(b"[")?;
                RowSink::Json { out, first: true }
            }
        })
    }

    pub fn push(&mut self, row: &TrialRow) -> Result<(), HarnessError> {
        match self {
            RowSink::Csv(w) => {
                w.serialize(row)?;
                w.flush()?;
            }
            RowSink::Json { out, first } => {
                if !*first {
                    out.write_all(b",")?;
                }
                *first = false;
                out.write_all(b"\n  ")?;
                serde_json::to_writer(&mut *out, row)?;
                out.flush()?;
            }
        }
        Ok(())
    }

    pub fn finish(self) -> Result<(), HarnessError> {
        match self {
            RowSink::Csv(mut w) => w.flush()?,
            RowSink::Json { mut out, first } => {
                out.write_all(if first { b"]\n" } else { b"\n]\n" })?;
                out.flush()?;
            }
        }
        Ok(())
    }
}

pub const CSV_HEADER: [&str; 12] = [
    "attack",
    "N",
    "K",
    "trial",
    "seed",
    "noise_kind",
    "noise_scale",
    "phi_a",
    "phi_b",
    "queries",
    "accuracy",
    "wall_ms",
];

pub fn emit_report(rows: &[TrialRow], format: ReportFormat, path: &Path) -> Result<(), HarnessError> {
    let mut sink = RowSink::create(path, format)?;
    for r in rows {
        sink.push(r)?;
    }
    sink.finish()
}

pub fn read_report(path: &Path, format: ReportFormat) -> Result<Vec<TrialRow>, HarnessError> {
    match format {
        ReportFormat::Csv => {
            let mut r = csv::Reader::from_path(path)?;
            let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
            if header != CSV_HEADER {
                return Err(HarnessError::Parse { line: 1, message: format!("unexpected header {header:?}") });
            }
            Ok(r.deserialize().collect::<Result<_, _>>()?)
        }
        ReportFormat::Json => Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::BinaryLabeling;

    fn row(trial: usize, accuracy: Option<f64>) -> TrialRow {
        TrialRow {
            attack: "exact1".into(),
            n: 5,
            k: 2,
            trial,
            seed: 17 + trial as u64,
            noise_kind: "bounded".into(),
            noise_scale: 0.1,
            phi_a: Some(11),
            phi_b: Some(53),
            queries: 1,
            accuracy,
            wall_ms: 0.1 + trial as f64 / 3.0,
        }
    }

    #[test]
    fn empty_csv_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        emit_report(&[], ReportFormat::Csv, &p).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "attack,N,K,trial,seed,noise_kind,noise_scale,phi_a,phi_b,queries,accuracy,wall_ms\n"
        );
        assert!(read_report(&p, ReportFormat::Csv).unwrap().is_empty());
        let p = dir.path().join("r.json");
        emit_report(&[], ReportFormat::Json, &p).unwrap();
        assert!(read_report(&p, ReportFormat::Json).unwrap().is_empty());
    }

    #[test]
    fn round_trips() {
        let rows = vec![row(0, Some(1.0)), row(1, Some(0.6)), row(2, None)];
        let dir = tempfile::tempdir().unwrap();
        for (name, f) in [("r.csv", ReportFormat::Csv), ("r.json", ReportFormat::Json)] {
            let p = dir.path().join(name);
            emit_report(&rows, f, &p).unwrap();
            assert_eq!(read_report(&p, f).unwrap(), rows);
        }
        let text = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn aggregates_recompute() {
        let mut rows = vec![row(0, Some(1.0)), row(1, Some(0.6)), row(2, None)];
        rows.push(TrialRow { n: 6, ..row(0, Some(0.5)) });
        let a = aggregate(&rows);
        assert_eq!(a.len(), 2);
        assert_eq!((a[0].trials, a[0].failed), (3, 1));
        assert!((a[0].mean_accuracy - 1.6 / 3.0).abs() < 1e-12);
        assert_eq!(a[0].max_accuracy, 1.0);
        assert!((a[0].perfect - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(a[1].mean_accuracy, 0.5);
    }

    #[test]
    fn hash_is_stable() {
        let a = Labeling::Binary(BinaryLabeling::new(vec![0, 1, 1]).unwrap());
        let b = Labeling::Binary(BinaryLabeling::new(vec![0, 1, 0]).unwrap());
        assert_eq!(labeling_hash(&a), labeling_hash(&a.clone()));
        assert_ne!(labeling_hash(&a), labeling_hash(&b));
        assert_eq!(labeling_hash(&a).len(), 16);
    }
}
