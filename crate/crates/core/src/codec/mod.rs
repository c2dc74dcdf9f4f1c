//! Tabular rows to "feature is value," sentences.
//!
//! A row becomes one [`Clause`] per column. The clause order of a
//! [`TextualRecord`] is a permutation that [`shuffle_record`] redraws from a
//! seeded generator, and [`verbalize_record`] optionally spells out numbers.

mod verbalize;

use std::collections::HashSet;
use std::fmt;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use verbalize::{
    integer_words, is_decimal_literal, parse_verbalized, verbalize_number, verbalize_text, verbalize_word,
    VerbalizeError, VERBALIZE_LIMIT,
};

use crate::rng::shuffle_rng;

/// Literal rendered for missing cells.
pub const MISSING_TEXT: &str = "None";

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("csv parse error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("row index {index} out of range for {rows} rows")]
    RowOutOfRange { index: usize, rows: usize },
    #[error("record has no clauses")]
    EmptyRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Text(String),
    Number(f64),
    Missing,
}

impl Cell {
    /// Text used for the value slot of a clause. Numbers use the shortest
    /// decimal string that parses back to the same `f64`.
    pub fn value_text(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Number(x) => format!("{x}"),
            Cell::Missing => MISSING_TEXT.to_string(),
        }
    }
}

/// Per-column parsing override for [`load_csv`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    #[default]
    Auto,
    Text,
    Numeric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    feature_names: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl TabularDataset {
    pub fn new(feature_names: Vec<String>, rows: Vec<Vec<Cell>>) -> Result<Self, CodecError> {
        if feature_names.is_empty() {
            return Err(CodecError::Schema("no columns".into()));
        }
        let mut seen = HashSet::new();
        for name in &feature_names {
            if name.trim().is_empty() {
                return Err(CodecError::Schema("empty feature name".into()));
            }
            if name.contains(',') {
                return Err(CodecError::Schema(format!(
                    "feature name `{name}` contains the clause delimiter ','"
                )));
            }
            if !seen.insert(name.as_str()) {
                return Err(CodecError::Schema(format!("duplicate feature name `{name}`")));
            }
        }
        if rows.is_empty() {
            return Err(CodecError::Schema("no data rows".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != feature_names.len() {
                return Err(CodecError::RaggedRow {
                    row: i,
                    expected: feature_names.len(),
                    found: row.len(),
                });
            }
        }
        Ok(Self { feature_names, rows })
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.feature_names.len()
    }

    pub fn cell(&self, row: usize, col: usize) -> &Cell {
        &self.rows[row][col]
    }
}

fn parse_cell(field: &str, kind: ColumnKind, row: usize, col: &str) -> Result<Cell, CodecError> {
    if field.is_empty() {
        return Ok(Cell::Missing);
    }
    match kind {
        ColumnKind::Text => Ok(Cell::Text(field.to_string())),
        ColumnKind::Auto if !is_decimal_literal(field) => Ok(Cell::Text(field.to_string())),
        ColumnKind::Auto | ColumnKind::Numeric => field
            .parse::<f64>()
            .ok()
            .filter(|_| is_decimal_literal(field))
            .map(Cell::Number)
            .ok_or_else(|| CodecError::Schema(format!("row {row}, column `{col}`: `{field}` is not numeric"))),
    }
}

/// Reads a header-first CSV. `type_hints` is indexed by column; missing
/// entries default to [`ColumnKind::Auto`]. Row indices in errors are
/// zero-based data-row positions (the header is not counted).
pub fn read_csv<R: Read>(reader: R, type_hints: &[ColumnKind]) -> Result<TabularDataset, CodecError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(CodecError::RaggedRow {
                row: i,
                expected: header.len(),
                found: record.len(),
            });
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(j, field)| {
                let kind = type_hints.get(j).copied().unwrap_or_default();
                parse_cell(field, kind, i, &header[j])
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    TabularDataset::new(header, rows)
}

pub fn load_csv(path: &Path, type_hints: &[ColumnKind]) -> Result<TabularDataset, CodecError> {
    let file = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(file), type_hints)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Clause {
    pub feature_name: String,
    pub value_text: String,
}

impl Clause {
    pub fn rendered(&self) -> String {
        format!("{} is {},", self.feature_name, self.value_text)
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} is {},", self.feature_name, self.value_text)
    }
}

/// Clauses of one row in column order plus the order they are rendered in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextualRecord {
    clauses: Vec<Clause>,
    permutation: Vec<usize>,
    source_row: usize,
}

impl TextualRecord {
    pub fn new(clauses: Vec<Clause>, permutation: Vec<usize>, source_row: usize) -> Result<Self, CodecError> {
        if clauses.is_empty() {
            return Err(CodecError::EmptyRecord);
        }
        let mut seen = vec![false; clauses.len()];
        let valid = permutation.len() == clauses.len()
            && permutation
                .iter()
                .all(|&p| p < seen.len() && !std::mem::replace(&mut seen[p], true));
        if !valid {
            return Err(CodecError::Schema(format!(
                "{permutation:?} is not a permutation of 0..{}",
                clauses.len()
            )));
        }
        Ok(Self {
            clauses,
            permutation,
            source_row,
        })
    }

    /// Clauses in column order, independent of the permutation.
    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    /// Zero-based column indices in render order.
    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn source_row(&self) -> usize {
        self.source_row
    }

    pub fn ordered_clauses(&self) -> impl Iterator<Item = &Clause> {
        self.permutation.iter().map(|&p| &self.clauses[p])
    }
}

/// Builds the identity-ordered record for row `row` (zero-based).
pub fn encode_row(dataset: &TabularDataset, row: usize) -> Result<TextualRecord, CodecError> {
    let cells = dataset.rows.get(row).ok_or(CodecError::RowOutOfRange {
        index: row,
        rows: dataset.n_rows(),
    })?;
    let clauses: Vec<Clause> = dataset
        .feature_names
        .iter()
        .zip(cells)
        .map(|(name, cell)| Clause {
            feature_name: name.clone(),
            value_text: cell.value_text(),
        })
        .collect();
    let identity = (0..clauses.len()).collect();
    TextualRecord::new(clauses, identity, row)
}

/// Reorders the clauses by a uniform permutation drawn (Fisher–Yates) from a
/// SplitMix64 stream keyed by `seed` and the record's source row. The draw
/// is composed with the record's current order.
pub fn shuffle_record(record: &TextualRecord, seed: u64) -> TextualRecord {
    let mut rng = shuffle_rng(seed, record.source_row as u64);
    let mut draw: Vec<usize> = (0..record.clauses.len()).collect();
    draw.shuffle(&mut rng);
    let permutation = draw.iter().map(|&d| record.permutation[d]).collect();
    TextualRecord {
        clauses: record.clauses.clone(),
        permutation,
        source_row: record.source_row,
    }
}

/// Spells out numeric words inside every clause value.
pub fn verbalize_record(record: &TextualRecord) -> TextualRecord {
    let clauses = record
        .clauses
        .iter()
        .map(|c| Clause {
            feature_name: c.feature_name.clone(),
            value_text: verbalize_text(&c.value_text),
        })
        .collect();
    TextualRecord {
        clauses,
        permutation: record.permutation.clone(),
        source_row: record.source_row,
    }
}

/// Clauses joined by single spaces in permutation order.
pub fn render(record: &TextualRecord) -> String {
    let mut out = String::new();
    for (i, clause) in record.ordered_clauses().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&clause.rendered());
    }
    out
}

/// Which encoding path a corpus goes through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Converter and shuffle only.
    Base,
    /// Converter, shuffle and number verbalizer.
    Nv,
}

impl Variant {
    pub fn approach_name(self) -> &'static str {
        match self {
            Variant::Base => "ERASMO_base",
            Variant::Nv => "ERASMO_NV",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "base" => Ok(Variant::Base),
            "nv" => Ok(Variant::Nv),
            other => Err(format!("unknown variant `{other}` (expected base or nv)")),
        }
    }
}

/// Encode, shuffle and (for [`Variant::Nv`]) verbalize one row.
pub fn encode_text(dataset: &TabularDataset, row: usize, seed: u64, variant: Variant) -> Result<String, CodecError> {
    let record = shuffle_record(&encode_row(dataset, row)?, seed);
    let record = match variant {
        Variant::Base => record,
        Variant::Nv => verbalize_record(&record),
    };
    Ok(render(&record))
}

/// One rendered record per line, LF terminated.
pub fn write_corpus<W: std::io::Write>(mut out: W, lines: &[String]) -> std::io::Result<()> {
    for line in lines {
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(csv: &str) -> TabularDataset {
        read_csv(csv.as_bytes(), &[]).unwrap()
    }

    #[test]
    fn csv_parsing_rules() {
        let ds = dataset("age,job\n35,admin.\n,\"x, y\"\n");
        assert_eq!(ds.n_cols(), 2);
        assert_eq!(ds.cell(0, 0), &Cell::Number(35.0));
        assert_eq!(ds.cell(0, 1), &Cell::Text("admin.".into()));
        assert_eq!(ds.cell(1, 0), &Cell::Missing);
        assert_eq!(ds.cell(1, 1), &Cell::Text("x, y".into()));
    }

    #[test]
    fn ragged_row_reports_index() {
        let err = read_csv("age,job\n1,a\n35,,\n".as_bytes(), &[]).unwrap_err();
        assert!(matches!(
            err,
            CodecError::RaggedRow {
                row: 1,
                expected: 2,
                found: 3
            }
        ));
    }

    #[test]
    fn duplicate_header_is_schema_error() {
        let err = read_csv("a,a\n1,2\n".as_bytes(), &[]).unwrap_err();
        assert!(matches!(err, CodecError::Schema(_)));
    }

    #[test]
    fn type_hints() {
        let ds = read_csv(
            "zip,score\n01234,7\n".as_bytes(),
            &[ColumnKind::Text, ColumnKind::Numeric],
        )
        .unwrap();
        assert_eq!(ds.cell(0, 0), &Cell::Text("01234".into()));
        let err = read_csv("score\nhigh\n".as_bytes(), &[ColumnKind::Numeric]).unwrap_err();
        assert!(matches!(err, CodecError::Schema(_)));
    }

    #[test]
    fn encode_examples() {
        let ds = dataset("age,job\n35,admin.\n");
        assert_eq!(render(&encode_row(&ds, 0).unwrap()), "age is 35, job is admin.,");
        let ds = dataset("x,y\n,1\n");
        assert_eq!(render(&encode_row(&ds, 0).unwrap()), "x is None, y is 1,");
        let ds = dataset("f\n0\n");
        assert_eq!(render(&encode_row(&ds, 0).unwrap()), "f is 0,");
        let ds = dataset("f\n35.0\n");
        assert_eq!(render(&encode_row(&ds, 0).unwrap()), "f is 35,");
        assert!(matches!(
            encode_row(&ds, 1),
            Err(CodecError::RowOutOfRange { index: 1, rows: 1 })
        ));
    }

    #[test]
    fn render_follows_permutation() {
        let a = Clause {
            feature_name: "a".into(),
            value_text: "1".into(),
        };
        let b = Clause {
            feature_name: "b".into(),
            value_text: "2".into(),
        };
        let rec = TextualRecord::new(vec![a, b], vec![1, 0], 0).unwrap();
        assert_eq!(render(&rec), "b is 2, a is 1,");
        assert!(TextualRecord::new(vec![], vec![], 0).is_err());
        let c = Clause {
            feature_name: "c".into(),
            value_text: "3".into(),
        };
        assert!(TextualRecord::new(vec![c.clone(), c], vec![0, 0], 0).is_err());
    }

    #[test]
    fn shuffle_single_column_is_identity() {
        let ds = dataset("f\n0\n");
        let rec = encode_row(&ds, 0).unwrap();
        for seed in 0..20 {
            assert_eq!(shuffle_record(&rec, seed), rec);
        }
    }

    #[test]
    fn shuffle_is_deterministic() {
        let ds = dataset("a,b,c\n1,2,3\n");
        let rec = encode_row(&ds, 0).unwrap();
        assert_eq!(shuffle_record(&rec, 42), shuffle_record(&rec, 42));
    }

    #[test]
    fn shuffle_permutations_are_uniform() {
        // Chi-square style check: each of the 6 orders appears 1000/6 times
        // in expectation with sd sqrt(1000 * 1/6 * 5/6).
        let ds = dataset("a,b,c\n1,2,3\n");
        let rec = encode_row(&ds, 0).unwrap();
        let mut counts = std::collections::HashMap::new();
        for seed in 0..1000 {
            *counts
                .entry(shuffle_record(&rec, seed).permutation().to_vec())
                .or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 6);
        let expected = 1000.0 / 6.0;
        let sd = (1000.0f64 * (1.0 / 6.0) * (5.0 / 6.0)).sqrt();
        for (perm, c) in counts {
            assert!((c as f64 - expected).abs() < 5.0 * sd, "{perm:?} appeared {c} times");
        }
    }

    #[test]
    fn verbalize_examples() {
        let ds = dataset("age,job,score\n35,admin.,-2.5\n");
        let rec = verbalize_record(&encode_row(&ds, 0).unwrap());
        assert_eq!(
            render(&rec),
            "age is thirty-five, job is admin., score is minus two point five,"
        );
        assert_eq!(verbalize_record(&rec), rec);
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("nv".parse::<Variant>().unwrap(), Variant::Nv);
        assert!("xx".parse::<Variant>().is_err());
    }
}
