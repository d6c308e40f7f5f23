//! Synthetic EMR cohorts with planted temporal and cross-feature structure.
//!
//! Each feature follows a mean-reverting (Ornstein-Uhlenbeck) walk sampled at
//! irregular visit times. The label depends on the latest value of every
//! `Fast` feature, the time-weighted average of every `Slow` feature, and the
//! latest value of each interacting feature multiplied by its baseline flag.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use super::types::{Dataset, PatientCase};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayProfile {
    /// Only the most recent value matters.
    Fast,
    /// The whole stay matters (time-weighted average).
    Slow,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedWeights {
    pub fast: f64,
    pub slow: f64,
    pub interaction: f64,
}

impl Default for PlantedWeights {
    fn default() -> Self {
        Self {
            fast: 1.0,
            slow: 1.0,
            interaction: 1.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_features: usize,
    /// Dimension 0 is a numeric age; dimensions `1..` are binary condition flags.
    pub n_baseline: usize,
    pub n_cases: usize,
    pub decay_profile: Vec<DecayProfile>,
    /// `(feature index, baseline flag index)` pairs.
    pub interactions: Vec<(usize, usize)>,
    /// Probability of flipping each label after thresholding.
    pub label_noise: f64,
    pub target_prevalence: f64,
    pub weights: PlantedWeights,
    pub min_visits: usize,
    pub max_visits: usize,
    pub mean_gap_hours: f64,
    /// Mean-reversion time constant of the feature walks, in hours.
    pub reversion_hours: f64,
    pub flag_probability: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Alternating fast/slow features, no interactions, 25% prevalence.
    pub fn new(n_features: usize, n_baseline: usize, n_cases: usize, seed: u64) -> Self {
        Self {
            n_features,
            n_baseline,
            n_cases,
            decay_profile: (0..n_features)
                .map(|i| {
                    if i % 2 == 0 {
                        DecayProfile::Fast
                    } else {
                        DecayProfile::Slow
                    }
                })
                .collect(),
            interactions: Vec::new(),
            label_noise: 0.0,
            target_prevalence: 0.25,
            weights: PlantedWeights::default(),
            min_visits: 6,
            max_visits: 24,
            mean_gap_hours: 12.0,
            reversion_hours: 24.0,
            flag_probability: 0.4,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_features == 0 || self.n_baseline == 0 || self.n_cases == 0 {
            return bad("synthetic spec needs at least one feature, baseline dimension and case".into());
        }
        if self.decay_profile.len() != self.n_features {
            return bad(format!(
                "{} decay tags for {} features",
                self.decay_profile.len(),
                self.n_features
            ));
        }
        for &(f, b) in &self.interactions {
            if f >= self.n_features || b == 0 || b >= self.n_baseline {
                return bad(format!(
                    "interaction ({f}, {b}) must pair a feature with a baseline flag (index 1..{})",
                    self.n_baseline
                ));
            }
        }
        if !(0.0..1.0).contains(&self.label_noise) || self.label_noise >= 0.5 {
            return bad(format!("label_noise {} not in [0, 0.5)", self.label_noise));
        }
        if !(self.target_prevalence > 0.0 && self.target_prevalence < 1.0) {
            return bad(format!(
                "target_prevalence {} not in (0, 1)",
                self.target_prevalence
            ));
        }
        if self.min_visits < 2 || self.max_visits < self.min_visits {
            return bad(format!(
                "visit range [{}, {}] invalid",
                self.min_visits, self.max_visits
            ));
        }
        if self.mean_gap_hours <= 0.0 || self.reversion_hours <= 0.0 {
            return bad("gap and reversion scales must be positive".into());
        }
        Ok(())
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.decay_profile
            .iter()
            .enumerate()
            .map(|(i, p)| match p {
                DecayProfile::Fast => format!("f{i}_fast"),
                DecayProfile::Slow => format!("f{i}_slow"),
            })
            .collect()
    }

    pub fn baseline_names(&self) -> Vec<String> {
        std::iter::once("age".to_string())
            .chain((1..self.n_baseline).map(|i| format!("flag{i}")))
            .collect()
    }
}

/// Ground truth written next to a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticManifest {
    pub spec: SyntheticSpec,
    pub feature_names: Vec<String>,
    pub baseline_names: Vec<String>,
    /// Threshold applied to the planted score before label noise.
    pub threshold: f64,
    pub prevalence: f64,
}

impl SyntheticManifest {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Planted score components of one case, before thresholding.
pub fn planted_score(spec: &SyntheticSpec, case: &PatientCase) -> f64 {
    let w = spec.weights;
    let mut score = 0.0;
    for (n, profile) in spec.decay_profile.iter().enumerate() {
        score += match profile {
            DecayProfile::Fast => w.fast * latest(&case.records[n]),
            DecayProfile::Slow => w.slow * time_average(&case.timestamps, &case.records[n]),
        };
    }
    for &(n, b) in &spec.interactions {
        score += w.interaction * latest(&case.records[n]) * case.baseline[b];
    }
    score
}

fn latest(series: &[f64]) -> f64 {
    *series.last().expect("non-empty series")
}

/// Trapezoidal average over the stay; a single visit averages to itself.
pub fn time_average(timestamps: &[f64], values: &[f64]) -> f64 {
    let span = timestamps[timestamps.len() - 1] - timestamps[0];
    if span <= 0.0 {
        return values[0];
    }
    let area: f64 = timestamps
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (v[0] + v[1]) * (t[1] - t[0]))
        .sum();
    area / span
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, SyntheticManifest)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gap = Exp::new(1.0 / spec.mean_gap_hours).expect("positive rate");
    let theta = 1.0 / spec.reversion_hours;

    let mut cases = Vec::with_capacity(spec.n_cases);
    for i in 0..spec.n_cases {
        let t_len = rng.random_range(spec.min_visits..=spec.max_visits);
        let mut timestamps = Vec::with_capacity(t_len);
        let mut now = 0.0;
        timestamps.push(now);
        while timestamps.len() < t_len {
            // exponential gaps are almost surely positive; guard the degenerate draw
            let dt: f64 = gap.sample(&mut rng);
            now += dt.max(1e-3);
            timestamps.push(now);
        }

        let mut records = Vec::with_capacity(spec.n_features);
        for _ in 0..spec.n_features {
            let mu = 0.7 * normal(&mut rng);
            let mut x = mu + normal(&mut rng);
            let mut row = Vec::with_capacity(t_len);
            row.push(x);
            for w in timestamps.windows(2) {
                let decay = (-theta * (w[1] - w[0])).exp();
                x = mu + (x - mu) * decay + (1.0 - decay * decay).sqrt() * normal(&mut rng);
                row.push(x);
            }
            records.push(row);
        }

        let mut baseline = Vec::with_capacity(spec.n_baseline);
        baseline.push(65.0 + 12.0 * normal(&mut rng));
        for _ in 1..spec.n_baseline {
            baseline.push(f64::from(u8::from(rng.random::<f64>() < spec.flag_probability)));
        }

        cases.push(PatientCase {
            id: format!("syn{i:06}"),
            baseline,
            timestamps,
            records,
            label: 0,
        });
    }

    // Threshold at the quantile that yields the target prevalence after symmetric flips.
    let eps = spec.label_noise;
    let pre_flip = ((spec.target_prevalence - eps) / (1.0 - 2.0 * eps)).clamp(0.0, 1.0);
    let scores: Vec<f64> = cases.iter().map(|c| planted_score(spec, c)).collect();
    let mut sorted = scores.clone();
    sorted.sort_by(f64::total_cmp);
    let n_pos = (pre_flip * spec.n_cases as f64).round() as usize;
    let threshold = if n_pos == 0 {
        f64::INFINITY
    } else if n_pos >= sorted.len() {
        f64::NEG_INFINITY
    } else {
        let k = sorted.len() - n_pos;
        0.5 * (sorted[k - 1] + sorted[k])
    };
    for (case, &s) in cases.iter_mut().zip(&scores) {
        let mut y = s > threshold;
        if eps > 0.0 && rng.random::<f64>() < eps {
            y = !y;
        }
        case.label = u8::from(y);
    }

    let prevalence = cases.iter().map(|c| f64::from(c.label)).sum::<f64>() / spec.n_cases as f64;
    let dataset = Dataset {
        feature_names: spec.feature_names(),
        baseline_names: spec.baseline_names(),
        binary_baseline: (0..spec.n_baseline).map(|s| s > 0).collect(),
        cases,
        normalization: None,
    };
    dataset.validate()?;
    let manifest = SyntheticManifest {
        spec: spec.clone(),
        feature_names: dataset.feature_names.clone(),
        baseline_names: dataset.baseline_names.clone(),
        threshold,
        prevalence,
    };
    Ok((dataset, manifest))
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}
