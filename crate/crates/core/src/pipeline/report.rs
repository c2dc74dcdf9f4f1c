//! Quality report, its CSV/JSON forms, and the artifact manifest.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cluster::AlgorithmKind;
use crate::embed::Provenance;

pub const REPORT_CSV_HEADER: &str = "approach,algorithm,best_k,ss,chi,dbi";

/// Silhouette for one candidate `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k: usize,
    pub ss: f64,
}

/// Best-by-silhouette result of one algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub approach: String,
    pub algorithm: AlgorithmKind,
    pub best_k: usize,
    pub ss: f64,
    #[serde(with = "maybe_infinite")]
    pub chi: f64,
    pub dbi: f64,
    pub sweep: Vec<SweepPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub approach: String,
    pub provenance: Provenance,
    pub rows: Vec<ReportRow>,
    /// Highest silhouette; ties go to the first configured algorithm.
    pub best_algorithm: AlgorithmKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest_hash: Option<String>,
}

impl QualityReport {
    /// Picks the best algorithm from `rows`, which must be non-empty.
    pub fn new(approach: String, provenance: Provenance, rows: Vec<ReportRow>) -> Self {
        let best = rows
            .iter()
            .fold(None::<&ReportRow>, |best, r| match best {
                Some(b) if r.ss <= b.ss => Some(b),
                _ => Some(r),
            })
            .expect("report has at least one row");
        Self {
            approach,
            best_algorithm: best.algorithm,
            provenance,
            rows,
            manifest_hash: None,
        }
    }

    pub fn best(&self) -> &ReportRow {
        self.rows
            .iter()
            .find(|r| r.algorithm == self.best_algorithm)
            .expect("best algorithm is one of the rows")
    }
}

/// CHI is `+inf` for perfectly tight clusters; JSON has no infinity, so it
/// is written as the string `"inf"`.
mod maybe_infinite {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Str(s) => Err(serde::de::Error::custom(format!(
                "expected number or \"inf\", got {s:?}"
            ))),
        }
    }
}

fn fixed(v: f64, places: usize) -> String {
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{v:.places$}");
    // Avoid "-0.0000".
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

/// `approach,algorithm,best_k,ss,chi,dbi` with SS to 4 places and CHI, DBI
/// to 2.
pub fn write_report_csv<W: Write>(mut out: W, report: &QualityReport) -> std::io::Result<()> {
    writeln!(out, "{REPORT_CSV_HEADER}")?;
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.approach,
            r.algorithm.name(),
            r.best_k,
            fixed(r.ss, 4),
            fixed(r.chi, 2),
            fixed(r.dbi, 2)
        )?;
    }
    Ok(())
}

pub fn report_json(report: &QualityReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Content hashes of the configuration and every artifact of a run, plus
/// the train/test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_sha256: Option<String>,
    pub artifacts: BTreeMap<String, String>,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    /// SHA-256 over all fields above.
    pub hash: String,
}

impl Manifest {
    pub fn build(
        config_json: &[u8],
        dataset: Option<&[u8]>,
        artifacts: BTreeMap<String, String>,
        train_rows: Vec<usize>,
        test_rows: Vec<usize>,
    ) -> Self {
        let mut m = Manifest {
            config_sha256: sha256_hex(config_json),
            dataset_sha256: dataset.map(sha256_hex),
            artifacts,
            train_rows,
            test_rows,
            hash: String::new(),
        };
        m.hash = m.compute_hash();
        m
    }

    pub fn compute_hash(&self) -> String {
        let unhashed = Manifest {
            hash: String::new(),
            ..self.clone()
        };
        sha256_hex(&serde_json::to_vec(&unhashed).expect("manifest serializes"))
    }
}

/// SHA-256 of each listed file under `dir`, keyed by file name.
pub fn hash_artifacts(dir: &Path, names: &[String]) -> std::io::Result<BTreeMap<String, String>> {
    names
        .iter()
        .map(|name| Ok((name.clone(), sha256_hex(&std::fs::read(dir.join(name))?))))
        .collect()
}
