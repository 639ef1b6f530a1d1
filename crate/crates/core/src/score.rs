//! Score vectors and the label manifest CSV (`id,y_b,y_s,y_cr,y_co,y_o`).

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_SCORE: f32 = 4.0;
pub const MANIFEST_HEADER: [&str; 6] = ["id", "y_b", "y_s", "y_cr", "y_co", "y_o"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribute {
    Brightness,
    Squareness,
    Cracking,
    Contamination,
    Overall,
}

impl Attribute {
    pub const ALL: [Attribute; 5] = [
        Attribute::Brightness,
        Attribute::Squareness,
        Attribute::Cracking,
        Attribute::Contamination,
        Attribute::Overall,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Brightness => "brightness",
            Attribute::Squareness => "squareness",
            Attribute::Cracking => "cracking",
            Attribute::Contamination => "contamination",
            Attribute::Overall => "overall",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `[y_b, y_s, y_cr, y_co, y_o]`, each in [0,4] or absent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreVector(pub [Option<f32>; 5]);

impl ScoreVector {
    pub fn unlabeled() -> Self {
        ScoreVector([None; 5])
    }

    pub fn full(values: [f32; 5]) -> Self {
        ScoreVector(values.map(Some))
    }

    pub fn get(&self, attr: Attribute) -> Option<f32> {
        self.0[attr.index()]
    }

    pub fn set(&mut self, attr: Attribute, value: Option<f32>) {
        self.0[attr.index()] = value;
    }

    pub fn is_unlabeled(&self) -> bool {
        self.0.iter().all(Option::is_none)
    }

    pub fn is_full(&self) -> bool {
        self.0.iter().all(Option::is_some)
    }

    /// Values rounded to the nearest integer score, as used for training.
    pub fn rounded(&self) -> Self {
        ScoreVector(self.0.map(|v| v.map(|x| x.round().clamp(0.0, MAX_SCORE))))
    }

    pub fn validate(&self) -> Result<(), LabelError> {
        for (i, v) in self.0.iter().enumerate() {
            if let Some(x) = *v {
                if !(0.0..=MAX_SCORE).contains(&x) {
                    return Err(LabelError::ScoreOutOfRange {
                        line: 0,
                        column: MANIFEST_HEADER[i + 1],
                        value: x.to_string(),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: {column} score {value} outside [0,4]")]
    ScoreOutOfRange { line: u64, column: &'static str, value: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelRecord {
    pub id: String,
    pub scores: ScoreVector,
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<LabelRecord>, LabelError> {
    parse_labels(std::fs::File::open(path)?)
}

/// Parses a manifest; blank cells become absent scores.
pub fn parse_labels(reader: impl Read) -> Result<Vec<LabelRecord>, LabelError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i as u64 + 1;
        let row = row.map_err(|e| LabelError::MalformedRow { line, reason: e.to_string() })?;
        if row.len() != MANIFEST_HEADER.len() {
            return Err(LabelError::MalformedRow {
                line,
                reason: format!("expected {} fields, found {}", MANIFEST_HEADER.len(), row.len()),
            });
        }
        if i == 0 && row.iter().eq(MANIFEST_HEADER.iter().copied()) {
            continue;
        }
        let id = row[0].to_string();
        if id.is_empty() {
            return Err(LabelError::MalformedRow { line, reason: "empty id".into() });
        }
        if !seen.insert(id.clone()) {
            return Err(LabelError::MalformedRow { line, reason: format!("duplicate id {id}") });
        }
        let mut scores = ScoreVector::unlabeled();
        for k in 0..5 {
            let cell = &row[k + 1];
            if cell.is_empty() {
                continue;
            }
            let value: f32 = cell.parse().map_err(|_| LabelError::MalformedRow {
                line,
                reason: format!("{} is not a number: {cell:?}", MANIFEST_HEADER[k + 1]),
            })?;
            if !(0.0..=MAX_SCORE).contains(&value) {
                return Err(LabelError::ScoreOutOfRange {
                    line,
                    column: MANIFEST_HEADER[k + 1],
                    value: cell.to_string(),
                });
            }
            scores.0[k] = Some(value);
        }
        records.push(LabelRecord { id, scores });
    }
    Ok(records)
}

pub fn write_labels(path: impl AsRef<Path>, records: &[LabelRecord]) -> Result<(), LabelError> {
    let file = std::fs::File::create(path)?;
    format_labels(file, records)
}

pub fn format_labels(writer: impl Write, records: &[LabelRecord]) -> Result<(), LabelError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| LabelError::Io(e.into());
    wtr.write_record(MANIFEST_HEADER).map_err(io)?;
    for rec in records {
        let mut row = vec![rec.id.clone()];
        row.extend(rec.scores.0.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
        wtr.write_record(&row).map_err(io)?;
    }
    wtr.flush()?;
    Ok(())
}
