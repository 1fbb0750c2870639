//! CSV ingestion and export.
//!
//! Schema: a header row with feature columns `f0..f{d-1}`, then `error`
//! (required for source files, optional for production files) and an optional
//! `score` column holding precomputed estimator outputs.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use csv::StringRecord;

use crate::data::{check_error, Dataset, ErrorSample, StreamEvent};
use crate::error::{Error, Result};

fn ingest(msg: impl Into<String>) -> Error {
    Error::Ingest(msg.into())
}

/// Column positions resolved from a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    features: Vec<usize>,
    error: Option<usize>,
    score: Option<usize>,
}

impl CsvSchema {
    pub fn from_headers(headers: &StringRecord) -> Result<Self> {
        let mut features: Vec<(usize, usize)> = Vec::new();
        let mut error = None;
        let mut score = None;
        for (col, name) in headers.iter().enumerate() {
            let name = name.trim();
            match name {
                "error" => error = Some(col),
                "score" => score = Some(col),
                _ => {
                    let idx = name
                        .strip_prefix('f')
                        .and_then(|rest| rest.parse::<usize>().ok())
                        .ok_or_else(|| ingest(format!("unknown column `{name}`")))?;
                    features.push((idx, col));
                }
            }
        }
        features.sort_unstable();
        for (expected, &(idx, _)) in features.iter().enumerate() {
            if idx != expected {
                return Err(ingest(format!(
                    "feature columns must be f0..f{}, missing f{expected}",
                    features.len().saturating_sub(1)
                )));
            }
        }
        Ok(Self {
            features: features.into_iter().map(|(_, c)| c).collect(),
            error,
            score,
        })
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    pub fn has_error(&self) -> bool {
        self.error.is_some()
    }

    pub fn has_score(&self) -> bool {
        self.score.is_some()
    }

    fn field(record: &StringRecord, col: usize, line: u64) -> Result<f64> {
        let raw = record
            .get(col)
            .ok_or_else(|| ingest(format!("line {line}: missing column {col}")))?;
        let v: f64 = raw
            .trim()
            .parse()
            .map_err(|_| ingest(format!("line {line}: cannot parse `{raw}` as a number")))?;
        if !v.is_finite() {
            return Err(ingest(format!("line {line}: non-finite value `{raw}`")));
        }
        Ok(v)
    }

    fn optional(record: &StringRecord, col: Option<usize>, line: u64) -> Result<Option<f64>> {
        match col {
            Some(c) if record.get(c).is_some_and(|s| !s.trim().is_empty()) => {
                Self::field(record, c, line).map(Some)
            }
            _ => Ok(None),
        }
    }

    fn features(&self, record: &StringRecord, line: u64) -> Result<Vec<f64>> {
        self.features
            .iter()
            .map(|&c| Self::field(record, c, line))
            .collect()
    }

    fn checked_error(&self, record: &StringRecord, line: u64) -> Result<Option<f64>> {
        let e = Self::optional(record, self.error, line)?;
        if let Some(e) = e {
            check_error(e).map_err(|err| ingest(format!("line {line}: {err}")))?;
        }
        Ok(e)
    }

    /// Parses a labeled source row; `error` must be present.
    pub fn parse_sample(&self, record: &StringRecord, line: u64) -> Result<ErrorSample> {
        let features = self.features(record, line)?;
        let true_error = self
            .checked_error(record, line)?
            .ok_or_else(|| ingest(format!("line {line}: source rows need an `error` value")))?;
        Ok(ErrorSample {
            features,
            true_error,
            est_score: Self::optional(record, self.score, line)?,
        })
    }

    /// Parses a production row as the event at time `t`.
    pub fn parse_event(&self, record: &StringRecord, t: u64, line: u64) -> Result<StreamEvent> {
        Ok(StreamEvent {
            t,
            features: self.features(record, line)?,
            true_error: self.checked_error(record, line)?,
            score: Self::optional(record, self.score, line)?,
        })
    }
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(r)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| ingest(format!("{}: {e}", path.display())))
}

/// Reads a labeled source dataset.
pub fn read_dataset_from<R: Read>(r: R) -> Result<Dataset> {
    let mut rdr = reader(r);
    let schema = CsvSchema::from_headers(rdr.headers().map_err(|e| ingest(e.to_string()))?)?;
    if !schema.has_error() {
        return Err(ingest("source file has no `error` column"));
    }
    let mut samples = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| ingest(e.to_string()))?;
        samples.push(schema.parse_sample(&rec, i as u64 + 2)?);
    }
    if samples.is_empty() {
        return Err(ingest("source file has no data rows"));
    }
    Dataset::new(samples).map_err(|e| ingest(e.to_string()))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    read_dataset_from(open(path.as_ref())?)
}

/// Reads every production row. Times are assigned `1, 2, ...` in file order.
pub fn read_events_from<R: Read>(r: R) -> Result<Vec<StreamEvent>> {
    let mut rdr = reader(r);
    let schema = CsvSchema::from_headers(rdr.headers().map_err(|e| ingest(e.to_string()))?)?;
    rdr.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| ingest(e.to_string()))?;
            schema.parse_event(&rec, i as u64 + 1, i as u64 + 2)
        })
        .collect()
}

pub fn read_events(path: impl AsRef<Path>) -> Result<Vec<StreamEvent>> {
    read_events_from(open(path.as_ref())?)
}

pub(crate) fn read_score_column(path: &Path) -> Result<Vec<f64>> {
    let mut rdr = reader(open(path)?);
    let headers = rdr.headers().map_err(|e| ingest(e.to_string()))?.clone();
    let col = headers
        .iter()
        .position(|h| h.trim() == "score")
        .ok_or_else(|| ingest(format!("{}: no `score` column", path.display())))?;
    let mut scores = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| ingest(e.to_string()))?;
        scores.push(CsvSchema::field(&rec, col, i as u64 + 2)?);
    }
    if scores.is_empty() {
        return Err(ingest(format!("{}: no data rows", path.display())));
    }
    Ok(scores)
}

fn header(dim: usize, with_error: bool, with_score: bool) -> Vec<String> {
    let mut h: Vec<String> = (0..dim).map(|j| format!("f{j}")).collect();
    if with_error {
        h.push("error".into());
    }
    if with_score {
        h.push("score".into());
    }
    h
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    ingest(format!("write failed: {e}"))
}

/// Writes a dataset in the source schema. The `score` column is included when
/// every row is scored.
pub fn write_dataset<W: Write>(w: W, data: &Dataset) -> Result<()> {
    let with_score = data.has_scores();
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(header(data.dim(), true, with_score))
        .map_err(csv_err)?;
    for s in data {
        let mut row: Vec<String> = s.features.iter().map(|v| v.to_string()).collect();
        row.push(s.true_error.to_string());
        if let Some(score) = s.est_score.filter(|_| with_score) {
            row.push(score.to_string());
        }
        wtr.write_record(&row).map_err(csv_err)?;
    }
    wtr.flush().map_err(csv_err)
}

/// Writes a production stream for replay. `error` and `score` columns are
/// emitted when every event carries them.
pub fn write_events<W: Write>(w: W, events: &[StreamEvent]) -> Result<()> {
    let dim = events.first().map_or(0, |e| e.features.len());
    let with_error = !events.is_empty() && events.iter().all(|e| e.true_error.is_some());
    let with_score = !events.is_empty() && events.iter().all(|e| e.score.is_some());
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(header(dim, with_error, with_score))
        .map_err(csv_err)?;
    for e in events {
        let mut row: Vec<String> = e.features.iter().map(|v| v.to_string()).collect();
        if with_error {
            row.push(e.true_error.unwrap_or_default().to_string());
        }
        if with_score {
            row.push(e.score.unwrap_or_default().to_string());
        }
        wtr.write_record(&row).map_err(csv_err)?;
    }
    wtr.flush().map_err(csv_err)
}
