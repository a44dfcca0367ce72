//! CSV ingestion and serialization of datasets.
//!
//! Longitudinal file: `id, age, visit, rep, value[, x1, ...]`, one row per
//! measurement. Events file: `id, entry_age, last_healthy_age,
//! diagnosis_age, dem, terminal_age, death[, w1, ...]`, one row per subject,
//! `diagnosis_age` empty when `dem = 0`. Ages are in years and converted
//! with the model's [`TimeScale`].

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{EventRecord, SubjectData, VisitBlock};
use crate::error::{Error, Result};
use crate::time::TimeScale;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestionReport {
    pub rows_read: usize,
    pub rows_dropped: Vec<DroppedRow>,
    /// Subjects excluded from the dataset, with the reason.
    pub subjects_dropped: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub subjects: Vec<SubjectData>,
    pub report: IngestionReport,
}

/// Marker data of one subject as read from the longitudinal file.
#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalRecord {
    pub visits: Vec<VisitBlock>,
    pub covariates: Vec<f64>,
}

fn parse_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse { path: path.display().to_string(), message: message.into() }
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    Ok(csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_path(path)?)
}

fn number(field: &str, name: &str) -> std::result::Result<f64, String> {
    let v: f64 = field.parse().map_err(|_| format!("{name} '{field}' is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{name} '{field}' is not finite"))
    }
}

fn index(field: &str, name: &str) -> std::result::Result<u64, String> {
    field.parse().map_err(|_| format!("{name} '{field}' is not a non-negative integer"))
}

fn flag(field: &str, name: &str) -> std::result::Result<bool, String> {
    match field {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(format!("{name} must be 0 or 1, got '{field}'")),
    }
}

/// Reads marker measurements, grouped by subject and visit. Malformed rows
/// are dropped and reported; a repeated `(id, visit, rep)` is an error.
pub fn parse_longitudinal(
    path: &Path,
    scale: &TimeScale,
) -> Result<(BTreeMap<String, LongitudinalRecord>, IngestionReport)> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() < 5 {
        return Err(parse_error(path, "expected columns id, age, visit, rep, value[, covariates]"));
    }
    let width = headers.len();
    let mut report = IngestionReport::default();
    let mut seen = HashSet::new();
    // id -> visit index -> (age, measurements)
    let mut raw: BTreeMap<String, (BTreeMap<u64, (f64, Vec<f64>)>, Vec<f64>)> = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        report.rows_read += 1;
        let parsed = (|| {
            if row.len() != width {
                return Err(format!("expected {width} fields, found {}", row.len()));
            }
            let id = row[0].to_string();
            if id.is_empty() {
                return Err("empty id".to_string());
            }
            let age = number(&row[1], "age")?;
            let visit = index(&row[2], "visit")?;
            let rep = index(&row[3], "rep")?;
            let value = number(&row[4], "value")?;
            let covs = (5..width)
                .map(|k| number(&row[k], &headers[k]))
                .collect::<std::result::Result<Vec<f64>, String>>()?;
            Ok((id, age, visit, rep, value, covs))
        })();
        let (id, age, visit, rep, value, covs) = match parsed {
            Ok(v) => v,
            Err(reason) => {
                report.rows_dropped.push(DroppedRow { line, reason });
                continue;
            }
        };
        if !seen.insert((id.clone(), visit, rep)) {
            return Err(parse_error(
                path,
                format!("line {line}: duplicate measurement (id {id}, visit {visit}, rep {rep})"),
            ));
        }
        let entry = raw.entry(id.clone()).or_insert_with(|| (BTreeMap::new(), covs.clone()));
        if entry.1 != covs {
            return Err(parse_error(path, format!("line {line}: covariates of subject {id} change between rows")));
        }
        let slot = entry.0.entry(visit).or_insert((age, Vec::new()));
        if slot.0 != age {
            return Err(parse_error(
                path,
                format!("line {line}: subject {id}, visit {visit} has rows at different ages"),
            ));
        }
        slot.1.push(value);
    }
    let out = raw
        .into_iter()
        .map(|(id, (visits, covariates))| {
            let visits = visits
                .into_values()
                .map(|(age, ys)| VisitBlock::new(scale.transform(age), ys))
                .collect();
            (id, LongitudinalRecord { visits, covariates })
        })
        .collect();
    Ok((out, report))
}

/// Reads one event record per subject; any malformed row or violated
/// invariant is an error naming the subject.
pub fn parse_events(path: &Path, scale: &TimeScale) -> Result<Vec<(String, EventRecord)>> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() < 7 {
        return Err(parse_error(
            path,
            "expected columns id, entry_age, last_healthy_age, diagnosis_age, dem, terminal_age, death[, covariates]",
        ));
    }
    let width = headers.len();
    let mut ids = HashSet::new();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let id = row.get(0).unwrap_or_default().to_string();
        let fail = |reason: String| parse_error(path, format!("line {line}, subject '{id}': {reason}"));
        if row.len() != width {
            return Err(fail(format!("expected {width} fields, found {}", row.len())));
        }
        if id.is_empty() {
            return Err(fail("empty id".into()));
        }
        if !ids.insert(id.clone()) {
            return Err(fail("duplicate subject".into()));
        }
        let entry = number(&row[1], "entry_age").map_err(fail)?;
        let last = number(&row[2], "last_healthy_age").map_err(fail)?;
        let dem = flag(&row[4], "dem").map_err(fail)?;
        let diagnosis = match (row[3].is_empty(), dem) {
            (true, false) => None,
            (false, true) => Some(number(&row[3], "diagnosis_age").map_err(fail)?),
            (true, true) => return Err(fail("dem = 1 requires diagnosis_age".into())),
            (false, false) => return Err(fail("diagnosis_age must be empty when dem = 0".into())),
        };
        let terminal = number(&row[5], "terminal_age").map_err(fail)?;
        let death = flag(&row[6], "death").map_err(fail)?;
        let covs = (7..width)
            .map(|k| number(&row[k], &headers[k]))
            .collect::<std::result::Result<Vec<f64>, String>>()
            .map_err(fail)?;
        let record = EventRecord::new(
            scale.transform(entry),
            scale.transform(last),
            diagnosis.map(|r| scale.transform(r)),
            scale.transform(terminal),
            death,
        )
        .with_covariates(covs);
        record.validate().map_err(|e| fail(e.to_string()))?;
        out.push((id, record));
    }
    Ok(out)
}

/// Joins both files. Subjects without an event record, or failing the
/// subject invariants, are listed in the report and left out.
pub fn load_dataset(longitudinal: &Path, events: &Path, scale: &TimeScale) -> Result<DatasetBundle> {
    let (mut markers, mut report) = parse_longitudinal(longitudinal, scale)?;
    let records = parse_events(events, scale)?;
    let mut subjects = Vec::with_capacity(records.len());
    for (id, event) in records {
        let m = markers.remove(&id);
        let (visits, covariates) = m.map_or((Vec::new(), Vec::new()), |m| (m.visits, m.covariates));
        let subject = SubjectData { id: id.clone(), visits, marker_covariates: covariates, event };
        match subject.validate() {
            Ok(()) => subjects.push(subject),
            Err(e) => report.subjects_dropped.push((id, e.to_string())),
        }
    }
    for id in markers.into_keys() {
        report.subjects_dropped.push((id, "marker rows without an event record".into()));
    }
    if !report.rows_dropped.is_empty() || !report.subjects_dropped.is_empty() {
        log::warn!(
            "ingestion dropped {} rows and {} subjects",
            report.rows_dropped.len(),
            report.subjects_dropped.len()
        );
    }
    Ok(DatasetBundle { subjects, report })
}

/// Shortest decimal that reads back to the same `f64`.
fn fmt(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_longitudinal(path: &Path, dataset: &[SubjectData], scale: &TimeScale) -> Result<()> {
    let n_cov = dataset.first().map_or(0, |s| s.marker_covariates.len());
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["id", "age", "visit", "rep", "value"].map(String::from).to_vec();
    header.extend((1..=n_cov).map(|k| format!("x{k}")));
    w.write_record(&header)?;
    for s in dataset {
        if s.marker_covariates.len() != n_cov {
            return Err(Error::Dimension(format!("subject {} has a different number of covariates", s.id)));
        }
        for (j, v) in s.visits.iter().enumerate() {
            let age = scale.age_for(v.time);
            for (l, y) in v.measurements.iter().enumerate() {
                let mut rec = vec![s.id.clone(), fmt(age), (j + 1).to_string(), (l + 1).to_string(), fmt(*y)];
                rec.extend(s.marker_covariates.iter().map(|x| fmt(*x)));
                w.write_record(&rec)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_events(path: &Path, dataset: &[SubjectData], scale: &TimeScale) -> Result<()> {
    let n_cov = dataset.first().map_or(0, |s| s.event.covariates[0].len());
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = [
        "id",
        "entry_age",
        "last_healthy_age",
        "diagnosis_age",
        "dem",
        "terminal_age",
        "death",
    ]
    .map(String::from)
    .to_vec();
    header.extend((1..=n_cov).map(|k| format!("w{k}")));
    w.write_record(&header)?;
    for s in dataset {
        let e = &s.event;
        if e.covariates.iter().any(|c| *c != e.covariates[0]) || e.covariates[0].len() != n_cov {
            return Err(Error::InvalidInput(format!(
                "subject {}: the events file holds one covariate row shared by all transitions",
                s.id
            )));
        }
        let mut rec = vec![
            s.id.clone(),
            fmt(scale.age_for(e.entry)),
            fmt(scale.age_for(e.last_healthy)),
            e.diagnosis.map_or(String::new(), |r| fmt(scale.age_for(r))),
            u8::from(e.dementia()).to_string(),
            fmt(scale.age_for(e.terminal)),
            u8::from(e.death).to_string(),
        ];
        rec.extend(e.covariates[0].iter().map(|x| fmt(*x)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
