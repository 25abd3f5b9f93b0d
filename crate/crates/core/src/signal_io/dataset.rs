//! Directory of subjects: `<id>.ppg.csv` + `<id>.rr.csv`, or `<id>.json` with
//! an embedded reference.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::{read_record, read_record_json, read_reference, PpgRecord, RecordFormat, ReferenceRr};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Subject {
    pub id: String,
    pub record: PpgRecord,
    pub reference: ReferenceRr,
}

/// Subjects in id order, plus `(id, reason)` for every subject that could not be read.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub subjects: Vec<Subject>,
    pub skipped: Vec<(String, String)>,
}

enum Source {
    Csv(PathBuf),
    Json(PathBuf),
}

fn load_subject(source: &Source, dir: &Path, id: &str) -> Result<(PpgRecord, ReferenceRr)> {
    let (record, reference) = match source {
        Source::Csv(path) => {
            let record = read_record(path, RecordFormat::Csv)?;
            let rr_path = dir.join(format!("{id}.rr.csv"));
            if !rr_path.is_file() {
                return Err(Error::Validation(format!("missing reference file {}", rr_path.display())));
            }
            (record, read_reference(&rr_path)?)
        }
        Source::Json(path) => match read_record_json(path)? {
            (record, Some(reference)) => (record, reference),
            (_, None) => return Err(Error::Validation("no embedded reference".into())),
        },
    };
    reference.check_within(&record)?;
    Ok((record, reference))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut sources: BTreeMap<String, Source> = BTreeMap::new();
    let mut skipped = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|s| s.to_str()).map(str::to_string) else {
            continue;
        };
        let (id, source) = if let Some(id) = name.strip_suffix(".ppg.csv") {
            (id.to_string(), Source::Csv(path))
        } else if let Some(id) = name.strip_suffix(".json") {
            (id.to_string(), Source::Json(path))
        } else {
            continue;
        };
        if sources.contains_key(&id) {
            skipped.push((id.clone(), "both CSV and JSON present; using CSV".into()));
            if matches!(source, Source::Json(_)) {
                continue;
            }
        }
        sources.insert(id, source);
    }
    let mut subjects = Vec::new();
    for (id, source) in &sources {
        match load_subject(source, dir, id) {
            Ok((record, reference)) => subjects.push(Subject {
                id: id.clone(),
                record,
                reference,
            }),
            Err(e) => skipped.push((id.clone(), e.to_string())),
        }
    }
    skipped.sort();
    Ok(Dataset { subjects, skipped })
}
