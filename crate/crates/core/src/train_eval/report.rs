use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{all_metrics, METRIC_NAMES};
use crate::{Error, Result};

/// Attempts per bootstrap replicate before giving up on drawing both classes.
const MAX_REDRAWS: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    /// Metric on the full (un-resampled or pooled) predictions.
    pub point: f64,
    pub mean: f64,
    /// Population standard deviation over `replicates`.
    pub std: f64,
    pub replicates: Vec<f64>,
}

impl MetricSummary {
    pub fn from_replicates(point: f64, replicates: Vec<f64>) -> Self {
        let n = replicates.len().max(1) as f64;
        let mean = replicates.iter().sum::<f64>() / n;
        let var = replicates.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            point,
            mean,
            std: var.sqrt(),
            replicates,
        }
    }
}

/// Metric name → summary, ordered by name.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: BTreeMap<String, MetricSummary>,
}

impl EvalReport {
    pub fn get(&self, name: &str) -> Option<&MetricSummary> {
        self.metrics.get(name)
    }

    /// Point estimates only, no resampling.
    pub fn point(scores: &[f64], labels: &[u8]) -> Result<Self> {
        let values = all_metrics(scores, labels)?;
        Ok(Self::from_columns(values, vec![Vec::new(); 3]))
    }

    fn from_columns(points: [f64; 3], replicates: Vec<Vec<f64>>) -> Self {
        let metrics = METRIC_NAMES
            .iter()
            .zip(points)
            .zip(replicates)
            .map(|((name, p), reps)| {
                let summary = if reps.is_empty() {
                    MetricSummary {
                        point: p,
                        mean: p,
                        std: 0.0,
                        replicates: reps,
                    }
                } else {
                    MetricSummary::from_replicates(p, reps)
                };
                (name.to_string(), summary)
            })
            .collect();
        Self { metrics }
    }

    /// Plain-text table with `mean(std)` columns, e.g. `0.8702(0.0021)`.
    pub fn to_table(&self) -> String {
        let mut out = String::from("metric        point    mean(std)\n");
        for name in METRIC_NAMES {
            if let Some(m) = self.metrics.get(name) {
                let _ = writeln!(
                    out,
                    "{:<13} {:.4}   {}",
                    name,
                    m.point,
                    format_mean_std(m.mean, m.std)
                );
            }
        }
        out
    }
}

pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.4}({std:.4})")
}

/// Resamples `(score, label)` pairs with replacement `reps` times.
///
/// A replicate missing either class is redrawn from the same replicate stream.
pub fn bootstrap_eval(scores: &[f64], labels: &[u8], reps: usize, seed: u64) -> Result<EvalReport> {
    if reps == 0 {
        return Err(Error::InvalidArgument("bootstrap needs at least one replicate".into()));
    }
    let points = all_metrics(scores, labels)?;
    let n = scores.len();
    let rows: Vec<[f64; 3]> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64 + 1);
            for _ in 0..MAX_REDRAWS {
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
                let l: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
                if let Ok(values) = all_metrics(&s, &l) {
                    return Ok(values);
                }
            }
            Err(Error::InvalidArgument(format!(
                "bootstrap replicate {r} never drew both classes"
            )))
        })
        .collect::<Result<_>>()?;
    let columns = (0..3).map(|k| rows.iter().map(|r| r[k]).collect()).collect();
    Ok(EvalReport::from_columns(points, columns))
}
