use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One patient: static baseline, visit times in hours, and the feature-by-visit record matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct PatientCase {
    pub id: String,
    pub baseline: Vec<f64>,
    /// Hours since the first visit; starts at 0 and strictly increases.
    pub timestamps: Vec<f64>,
    /// `records[n][t]` is feature `n` at visit `t`.
    pub records: Vec<Vec<f64>>,
    pub label: u8,
}

impl PatientCase {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn validate(&self, n_features: usize, n_baseline: usize) -> Result<()> {
        let fail = |reason: String| {
            Err(Error::InvalidCase {
                id: self.id.clone(),
                reason,
            })
        };
        let t = self.timestamps.len();
        if t == 0 {
            return fail("no visits".into());
        }
        if self.timestamps[0] != 0.0 {
            return fail(format!(
                "first timestamp is {}, expected 0",
                self.timestamps[0]
            ));
        }
        if let Some(w) = self.timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return fail(format!(
                "timestamps not strictly increasing at visit {} ({} then {})",
                w + 1,
                self.timestamps[w],
                self.timestamps[w + 1]
            ));
        }
        if self.timestamps.iter().any(|v| !v.is_finite()) {
            return fail("non-finite timestamp".into());
        }
        if self.records.len() != n_features {
            return fail(format!(
                "{} feature rows, expected {}",
                self.records.len(),
                n_features
            ));
        }
        if let Some(n) = self.records.iter().position(|r| r.len() != t) {
            return fail(format!(
                "feature row {} has {} values for {} visits",
                n,
                self.records[n].len(),
                t
            ));
        }
        if self.records.iter().flatten().any(|v| !v.is_finite()) {
            return fail("non-finite record value".into());
        }
        if self.baseline.len() != n_baseline {
            return fail(format!(
                "baseline has {} values, expected {}",
                self.baseline.len(),
                n_baseline
            ));
        }
        if self.baseline.iter().any(|v| !v.is_finite()) {
            return fail("non-finite baseline value".into());
        }
        if self.label > 1 {
            return fail(format!("label {} is not 0 or 1", self.label));
        }
        Ok(())
    }
}

/// Per-feature and per-baseline z-score statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub baseline_mean: Vec<f64>,
    pub baseline_std: Vec<f64>,
}

impl Normalization {
    pub fn apply_case(&self, case: &PatientCase) -> PatientCase {
        let mut out = case.clone();
        for (n, row) in out.records.iter_mut().enumerate() {
            for v in row.iter_mut() {
                *v = (*v - self.feature_mean[n]) / self.feature_std[n];
            }
        }
        for (s, v) in out.baseline.iter_mut().enumerate() {
            *v = (*v - self.baseline_mean[s]) / self.baseline_std[s];
        }
        out
    }

    /// Returns a copy of `dataset` with these statistics applied and recorded.
    pub fn apply(&self, dataset: &Dataset) -> Dataset {
        Dataset {
            feature_names: dataset.feature_names.clone(),
            baseline_names: dataset.baseline_names.clone(),
            binary_baseline: dataset.binary_baseline.clone(),
            cases: dataset.cases.iter().map(|c| self.apply_case(c)).collect(),
            normalization: Some(self.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub baseline_names: Vec<String>,
    /// Binary (one-hot / flag) baseline dimensions are never z-scored.
    pub binary_baseline: Vec<bool>,
    pub cases: Vec<PatientCase>,
    /// Statistics already applied to `cases`, if any.
    pub normalization: Option<Normalization>,
}

impl Dataset {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_baseline(&self) -> usize {
        self.baseline_names.len()
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn labels(&self, indices: &[usize]) -> Vec<u8> {
        indices.iter().map(|&i| self.cases[i].label).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.binary_baseline.len() != self.baseline_names.len() {
            return Err(Error::Shape(format!(
                "{} binary flags for {} baseline dimensions",
                self.binary_baseline.len(),
                self.baseline_names.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for case in &self.cases {
            case.validate(self.n_features(), self.n_baseline())?;
            if !seen.insert(case.id.as_str()) {
                return Err(Error::InvalidCase {
                    id: case.id.clone(),
                    reason: "duplicate id".into(),
                });
            }
        }
        Ok(())
    }

    /// Fails unless `other` lists the same features and baseline dimensions in the same order.
    pub fn check_schema(&self, feature_names: &[String], baseline_names: &[String]) -> Result<()> {
        if self.feature_names != feature_names {
            return Err(Error::FeatureMismatch(describe_mismatch(
                "features",
                feature_names,
                &self.feature_names,
            )));
        }
        if self.baseline_names != baseline_names {
            return Err(Error::FeatureMismatch(describe_mismatch(
                "baseline",
                baseline_names,
                &self.baseline_names,
            )));
        }
        Ok(())
    }
}

fn describe_mismatch(what: &str, expected: &[String], found: &[String]) -> String {
    if expected.len() != found.len() {
        return format!(
            "{what}: expected {} names, dataset has {}",
            expected.len(),
            found.len()
        );
    }
    let i = expected
        .iter()
        .zip(found)
        .position(|(a, b)| a != b)
        .unwrap_or(0);
    format!(
        "{what}[{i}]: expected `{}`, dataset has `{}`",
        expected[i], found[i]
    )
}
