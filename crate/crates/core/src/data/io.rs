//! Line-delimited JSON dataset files.
//!
//! The first line is a header `{"feature_names": [...], "baseline_names": [...]}`
//! (optionally with `"binary_baseline": [bool...]`); every following non-empty
//! line is one patient:
//!
//! ```text
//! {"id": "p1", "baseline": [63.0, 1.0], "visits": [{"t": 0.0, "values": [7.1, 140.0]}, ...], "label": 0}
//! ```
//!
//! `values` may also be an object keyed by feature name; it must then name every
//! feature exactly once. Visit times are rebased so the first visit is at hour 0.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::{Dataset, PatientCase};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    feature_names: Vec<String>,
    baseline_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    binary_baseline: Option<Vec<bool>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum VisitValues {
    Ordered(Vec<f64>),
    Named(HashMap<String, f64>),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Visit {
    t: f64,
    values: VisitValues,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseLine {
    id: String,
    baseline: Vec<f64>,
    visits: Vec<Visit>,
    label: u8,
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };

    let mut lines = BufReader::new(file).lines().enumerate();
    let header: Header = loop {
        match lines.next() {
            Some((i, line)) => {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                break serde_json::from_str(&line)
                    .map_err(|e| parse_err(i + 1, format!("header: {e}")))?;
            }
            None => return Err(parse_err(0, "missing header line".into())),
        }
    };
    let feature_index: HashMap<&str, usize> = header
        .feature_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    if feature_index.len() != header.feature_names.len() {
        return Err(parse_err(1, "duplicate feature name in header".into()));
    }

    let mut cases = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: CaseLine =
            serde_json::from_str(&line).map_err(|e| parse_err(i + 1, e.to_string()))?;
        cases.push(case_from_line(raw, &header.feature_names, &feature_index)?);
    }

    let binary_baseline = match header.binary_baseline {
        Some(flags) => flags,
        None => infer_binary(header.baseline_names.len(), &cases),
    };
    let dataset = Dataset {
        feature_names: header.feature_names,
        baseline_names: header.baseline_names,
        binary_baseline,
        cases,
        normalization: None,
    };
    dataset.validate()?;
    Ok(dataset)
}

fn case_from_line(
    raw: CaseLine,
    feature_names: &[String],
    feature_index: &HashMap<&str, usize>,
) -> Result<PatientCase> {
    let n = feature_names.len();
    if raw.visits.is_empty() {
        return Err(Error::InvalidCase {
            id: raw.id,
            reason: "no visits".into(),
        });
    }
    let origin = raw.visits[0].t;
    let mut timestamps = Vec::with_capacity(raw.visits.len());
    let mut records = vec![Vec::with_capacity(raw.visits.len()); n];
    for (t, visit) in raw.visits.into_iter().enumerate() {
        timestamps.push(visit.t - origin);
        let values = match visit.values {
            VisitValues::Ordered(v) => {
                if v.len() != n {
                    return Err(Error::InvalidCase {
                        id: raw.id,
                        reason: format!("visit {t} has {} values, expected {n}", v.len()),
                    });
                }
                v
            }
            VisitValues::Named(map) => {
                let mut v = vec![f64::NAN; n];
                for (name, value) in map {
                    let k = *feature_index
                        .get(name.as_str())
                        .ok_or_else(|| Error::UnknownFeature(name.clone()))?;
                    v[k] = value;
                }
                if let Some(k) = v.iter().position(|x| x.is_nan()) {
                    return Err(Error::InvalidCase {
                        id: raw.id,
                        reason: format!("visit {t} is missing feature `{}`", feature_names[k]),
                    });
                }
                v
            }
        };
        for (row, value) in records.iter_mut().zip(values) {
            row.push(value);
        }
    }
    Ok(PatientCase {
        id: raw.id,
        baseline: raw.baseline,
        timestamps,
        records,
        label: raw.label,
    })
}

fn infer_binary(n_baseline: usize, cases: &[PatientCase]) -> Vec<bool> {
    (0..n_baseline)
        .map(|s| {
            !cases.is_empty()
                && cases
                    .iter()
                    .all(|c| c.baseline.get(s).is_some_and(|&v| v == 0.0 || v == 1.0))
        })
        .collect()
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_dataset(dataset, &mut w).map_err(|e| match e {
        Error::Json(j) if j.is_io() => Error::io(path, j.into()),
        other => other,
    })?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_dataset<W: Write>(dataset: &Dataset, w: &mut W) -> Result<()> {
    let header = Header {
        feature_names: dataset.feature_names.clone(),
        baseline_names: dataset.baseline_names.clone(),
        binary_baseline: Some(dataset.binary_baseline.clone()),
    };
    serde_json::to_writer(&mut *w, &header)?;
    w.write_all(b"\n").map_err(serde_json::Error::io)?;
    for case in &dataset.cases {
        let line = CaseLine {
            id: case.id.clone(),
            baseline: case.baseline.clone(),
            visits: case
                .timestamps
                .iter()
                .enumerate()
                .map(|(t, &ts)| Visit {
                    t: ts,
                    values: VisitValues::Ordered(case.records.iter().map(|r| r[t]).collect()),
                })
                .collect(),
            label: case.label,
        };
        serde_json::to_writer(&mut *w, &line)?;
        w.write_all(b"\n").map_err(serde_json::Error::io)?;
    }
    Ok(())
}
