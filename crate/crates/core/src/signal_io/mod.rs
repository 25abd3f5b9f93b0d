//! Recording ingestion, serialization and the synthetic PPG generator.
//!
//! Three on-disk layouts are understood:
//!
//! * PPG CSV with header `t,ppg` (seconds, arbitrary units), uniformly sampled;
//! * reference CSV with header `t,rr` (seconds, breaths/min);
//! * record JSON `{"id", "fs", "samples", "reference": {"t", "rr"}}` where
//!   `reference` is optional.
//!
//! Lines starting with `#` are comments in both CSV layouts, so files written
//! with a provenance header read back unchanged.

mod dataset;
mod synth;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dataset::{load_dataset, Dataset, Subject};
pub use synth::{synthesize, ModDepths, SynthSpec};

/// Relative tolerance on the sample step of a PPG CSV.
pub const STEP_TOLERANCE: f64 = 1e-6;

/// Uniformly sampled PPG waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct PpgRecord {
    id: String,
    fs: f64,
    samples: Vec<f64>,
}

impl PpgRecord {
    pub fn new(id: impl Into<String>, fs: f64, samples: Vec<f64>) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::Validation(format!("sampling rate must be > 0, got {fs}")));
        }
        if samples.is_empty() {
            return Err(Error::Validation("record has no samples".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            id: id.into(),
            fs,
            samples,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }

    /// Same id and rate, new samples.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        Self::new(self.id.clone(), self.fs, samples)
    }
}

/// Reference respiratory rate annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRr {
    #[serde(rename = "t")]
    times_s: Vec<f64>,
    rr: Vec<f64>,
}

impl ReferenceRr {
    pub const MAX_RR: f64 = 120.0;

    pub fn new(times_s: Vec<f64>, rr: Vec<f64>) -> Result<Self> {
        if times_s.len() != rr.len() {
            return Err(Error::Validation(format!(
                "reference has {} timestamps but {} rates",
                times_s.len(),
                rr.len()
            )));
        }
        if times_s.is_empty() {
            return Err(Error::Validation("reference is empty".into()));
        }
        for (i, (&t, &r)) in times_s.iter().zip(&rr).enumerate() {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::Validation(format!("reference time {t} at row {i} is invalid")));
            }
            if i > 0 && t < times_s[i - 1] {
                return Err(Error::Validation(format!(
                    "reference timestamps decrease at row {i} ({} -> {t})",
                    times_s[i - 1]
                )));
            }
            if !(r > 0.0 && r < Self::MAX_RR) {
                return Err(Error::Validation(format!(
                    "reference rate {r} at row {i} outside (0, {})",
                    Self::MAX_RR
                )));
            }
        }
        Ok(Self { times_s, rr })
    }

    pub fn times_s(&self) -> &[f64] {
        &self.times_s
    }

    pub fn rr(&self) -> &[f64] {
        &self.rr
    }

    pub fn len(&self) -> usize {
        self.rr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rr.is_empty()
    }

    /// Checks that every annotation falls inside the recording.
    pub fn check_within(&self, record: &PpgRecord) -> Result<()> {
        let d = record.duration_s();
        match self.times_s.iter().find(|&&t| t > d + 1e-9) {
            Some(t) => Err(Error::Validation(format!(
                "reference time {t} s beyond record duration {d} s"
            ))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordFormat {
    Csv,
    Json,
}

impl RecordFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(RecordFormat::Csv),
            "json" => Some(RecordFormat::Json),
            _ => None,
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn file_id(path: &Path) -> String {
    let name = path
        .file_name()
        .and_then(|s| s.to_str())
        .unwrap_or("record");
    // `subject.ppg.csv` -> `subject`
    name.split('.').next().unwrap_or(name).to_string()
}

pub fn read_record(path: &Path, format: RecordFormat) -> Result<PpgRecord> {
    let reader = open(path)?;
    match format {
        RecordFormat::Csv => parse_record_csv(reader, &file_id(path)),
        RecordFormat::Json => parse_record_json(reader).map(|(r, _)| r),
    }
}

/// Reads a JSON record together with its embedded reference, if any.
pub fn read_record_json(path: &Path) -> Result<(PpgRecord, Option<ReferenceRr>)> {
    parse_record_json(open(path)?)
}

pub fn read_reference(path: &Path) -> Result<ReferenceRr> {
    parse_reference_csv(open(path)?)
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(reader)
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        line,
        field: String::new(),
        message: e.to_string(),
    }
}

/// Reads two-column numeric CSV, checking the header names.
fn read_columns<R: Read>(reader: R, names: [&str; 2]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.len() != 2 || headers[0] != *names[0] || headers[1] != *names[1] {
        return Err(Error::Parse {
            line: 1,
            field: "header".into(),
            message: format!(
                "expected `{},{}`, found `{}`",
                names[0],
                names[1],
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 2 {
            return Err(Error::Parse {
                line,
                field: "row".into(),
                message: format!("expected 2 fields, found {}", rec.len()),
            });
        }
        for (k, out) in [&mut a, &mut b].into_iter().enumerate() {
            let v: f64 = rec[k].parse().map_err(|_| Error::Parse {
                line,
                field: names[k].to_string(),
                message: format!("`{}` is not a number", &rec[k]),
            })?;
            out.push(v);
        }
    }
    Ok((a, b))
}

pub fn parse_record_csv<R: Read>(reader: R, id: &str) -> Result<PpgRecord> {
    let (t, ppg) = read_columns(reader, ["t", "ppg"])?;
    if t.len() < 2 {
        return Err(Error::Validation(
            "at least two samples are needed to determine the sampling rate".into(),
        ));
    }
    if let Some(i) = t.iter().position(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("non-finite time at row {i}")));
    }
    let n = t.len();
    let step = (t[n - 1] - t[0]) / (n - 1) as f64;
    if !(step > 0.0) {
        return Err(Error::Validation("time column must be strictly increasing".into()));
    }
    for (i, w) in t.windows(2).enumerate() {
        let d = w[1] - w[0];
        if d <= 0.0 {
            return Err(Error::Validation(format!("time not strictly increasing at row {}", i + 1)));
        }
        if (d - step).abs() > STEP_TOLERANCE * step {
            return Err(Error::Validation(format!(
                "non-uniform sampling at row {}: step {d} vs {step}",
                i + 1
            )));
        }
    }
    let mut fs = 1.0 / step;
    if (fs - fs.round()).abs() < STEP_TOLERANCE * fs {
        fs = fs.round();
    }
    PpgRecord::new(id, fs, ppg)
}

pub fn parse_reference_csv<R: Read>(reader: R) -> Result<ReferenceRr> {
    let (t, rr) = read_columns(reader, ["t", "rr"])?;
    ReferenceRr::new(t, rr)
}

#[derive(Serialize, Deserialize)]
struct RecordJson {
    id: String,
    fs: f64,
    samples: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reference: Option<ReferenceRr>,
}

pub fn parse_record_json<R: Read>(reader: R) -> Result<(PpgRecord, Option<ReferenceRr>)> {
    let raw: RecordJson = serde_json::from_reader(reader).map_err(|e| Error::Parse {
        line: e.line() as u64,
        field: "json".into(),
        message: e.to_string(),
    })?;
    let record = PpgRecord::new(raw.id, raw.fs, raw.samples)?;
    // re-run the constructor checks on the deserialized reference
    let reference = match raw.reference {
        Some(r) => Some(ReferenceRr::new(r.times_s, r.rr)?),
        None => None,
    };
    Ok((record, reference))
}

/// Writes `t,ppg` CSV, preceded by an optional `#` comment line.
pub fn write_record_csv<W: Write>(mut w: W, record: &PpgRecord, comment: Option<&str>) -> std::io::Result<()> {
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "t,ppg")?;
    for (i, v) in record.samples.iter().enumerate() {
        writeln!(w, "{},{}", i as f64 / record.fs, v)?;
    }
    w.flush()
}

pub fn write_reference_csv<W: Write>(mut w: W, reference: &ReferenceRr, comment: Option<&str>) -> std::io::Result<()> {
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "t,rr")?;
    for (t, r) in reference.times_s.iter().zip(&reference.rr) {
        writeln!(w, "{t},{r}")?;
    }
    w.flush()
}

pub fn write_record_json<W: Write>(w: W, record: &PpgRecord, reference: Option<&ReferenceRr>) -> Result<()> {
    let raw = RecordJson {
        id: record.id.clone(),
        fs: record.fs,
        samples: record.samples.clone(),
        reference: reference.cloned(),
    };
    serde_json::to_writer(w, &raw).map_err(|e| Error::Validation(e.to_string()))
}

pub fn save_record(path: &Path, record: &PpgRecord, comment: Option<&str>) -> Result<()> {
    let w = create(path)?;
    match RecordFormat::from_path(path) {
        Some(RecordFormat::Json) => write_record_json(w, record, None),
        _ => write_record_csv(w, record, comment).map_err(|e| Error::io(path, e)),
    }
}

pub fn save_reference(path: &Path, reference: &ReferenceRr, comment: Option<&str>) -> Result<()> {
    write_reference_csv(create(path)?, reference, comment).map_err(|e| Error::io(path, e))
}
