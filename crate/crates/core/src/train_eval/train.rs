use std::io::Write;

use serde::{Deserialize, Serialize};

use super::metrics::{auprc, auroc};
use crate::data::{fit_normalization, make_batches, split_holdout, Dataset, PatientCase, Split};
use crate::head::{cross_entropy, HeadKeys};
use crate::model::{ConCare, ModelConfig, TrainedModel};
use crate::numerics::{adam_step, AdamConfig, ParamStore};
use crate::train_eval::report::EvalReport;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub lambda_decorr: f64,
    pub seed: u64,
    pub hidden: usize,
    pub heads: usize,
    pub ffn: usize,
    pub time_aware: bool,
    pub head_keys: HeadKeys,
    pub test_fraction: f64,
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            lambda_decorr: 1.0,
            seed: 0,
            hidden: 32,
            heads: 4,
            ffn: 64,
            time_aware: true,
            head_keys: HeadKeys::Shared,
            test_fraction: 0.15,
            val_fraction: 0.15,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch_size, max_epochs and patience must be positive");
        }
        if !(self.lambda_decorr >= 0.0) {
            return bad("lambda_decorr must be non-negative");
        }
        if !(0.0..1.0).contains(&self.test_fraction) || !(0.0..1.0).contains(&self.val_fraction) {
            return bad("split fractions must lie in [0, 1)");
        }
        self.model_config(1, 1).validate()
    }

    pub fn model_config(&self, n_features: usize, n_baseline: usize) -> ModelConfig {
        ModelConfig {
            n_features,
            n_baseline,
            hidden: self.hidden,
            heads: self.heads,
            ffn: self.ffn,
            time_aware: self.time_aware,
            head_keys: self.head_keys,
        }
    }
}

/// Mixes a root seed with a tag (splitmix64 finalizer).
pub fn derive_seed(root: u64, tag: u64) -> u64 {
    let mut z = root ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_cross_entropy: f64,
    pub train_decorrelation: f64,
    pub val_auprc: Option<f64>,
    pub val_auroc: Option<f64>,
    pub val_cross_entropy: Option<f64>,
    pub lambda_decorr: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (the last one when there is no validation set).
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainingLog {
    pub fn write_jsonl<W: Write>(&self, w: &mut W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut *w, r)?;
            w.write_all(b"\n").map_err(serde_json::Error::io)?;
        }
        Ok(())
    }
}

/// Validation summary used for model selection.
struct Validation {
    auprc: Option<f64>,
    auroc: Option<f64>,
    cross_entropy: f64,
}

impl Validation {
    /// Validation AUPRC, or negative cross-entropy when the split has no positives.
    fn criterion(&self) -> f64 {
        self.auprc.unwrap_or(-self.cross_entropy)
    }
}

fn validate_on(net: &ConCare, store: &ParamStore, cases: &[&PatientCase]) -> Validation {
    let scores = net.predict_many(store, cases);
    let labels: Vec<u8> = cases.iter().map(|c| c.label).collect();
    let ce = scores
        .iter()
        .zip(&labels)
        .map(|(&s, &l)| cross_entropy(s, l))
        .sum::<f64>()
        / cases.len() as f64;
    Validation {
        auprc: auprc(&scores, &labels).ok(),
        auroc: auroc(&scores, &labels).ok(),
        cross_entropy: ce,
    }
}

/// Trains on a normalized dataset with Adam, keeping the best-validation parameters.
///
/// An empty `validation` set disables early stopping and keeps the final parameters.
pub fn train(
    dataset: &Dataset,
    train_indices: &[usize],
    validation: &[usize],
    config: &TrainConfig,
) -> Result<(ConCare, ParamStore, TrainingLog)> {
    config.validate()?;
    if train_indices.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if validation.iter().any(|v| train_indices.contains(v)) {
        return Err(Error::InvalidArgument(
            "training and validation sets overlap".into(),
        ));
    }
    let (net, mut store) = ConCare::new(
        config.model_config(dataset.n_features(), dataset.n_baseline()),
        derive_seed(config.seed, 1),
    )?;
    let adam = AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    };
    let val_cases: Vec<&PatientCase> = validation.iter().map(|&i| &dataset.cases[i]).collect();

    let mut log = TrainingLog::default();
    let mut best: Option<(f64, ParamStore)> = None;
    let mut since_best = 0;
    for epoch in 1..=config.max_epochs {
        let batches = make_batches(
            dataset,
            train_indices,
            config.batch_size,
            derive_seed(config.seed, 1000 + epoch as u64),
        );
        let (mut sum_total, mut sum_ce, mut sum_dec, mut seen) = (0.0, 0.0, 0.0, 0usize);
        for (b, batch) in batches.iter().enumerate() {
            let cases: Vec<&PatientCase> = batch.iter().map(|&i| &dataset.cases[i]).collect();
            let (loss, grads) = net.batch_loss_and_grad(&store, &cases, config.lambda_decorr);
            if !loss.total.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            store.zero_grad();
            store.accumulate(&grads);
            adam_step(&mut store, &adam)?;
            let w = cases.len() as f64;
            sum_total += loss.total * w;
            sum_ce += loss.cross_entropy * w;
            sum_dec += loss.decorrelation * w;
            seen += cases.len();
        }
        let n = seen as f64;
        let mut record = EpochRecord {
            epoch,
            train_loss: sum_total / n,
            train_cross_entropy: sum_ce / n,
            train_decorrelation: sum_dec / n,
            val_auprc: None,
            val_auroc: None,
            val_cross_entropy: None,
            lambda_decorr: config.lambda_decorr,
        };
        if val_cases.is_empty() {
            log.records.push(record);
            log.best_epoch = epoch;
            continue;
        }
        let v = validate_on(&net, &store, &val_cases);
        record.val_auprc = v.auprc;
        record.val_auroc = v.auroc;
        record.val_cross_entropy = Some(v.cross_entropy);
        log.records.push(record);
        let score = v.criterion();
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, store.clone()));
            log.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                log.stopped_early = true;
                break;
            }
        }
    }
    if let Some((_, kept)) = best {
        store = kept;
    }
    store.zero_grad();
    Ok((net, store, log))
}

/// Result of a train/validation/test run on a raw dataset.
#[derive(Clone, Debug)]
pub struct HoldoutRun {
    pub model: TrainedModel,
    pub split: Split,
    pub log: TrainingLog,
    /// Test-set scores in `split.test` order.
    pub test_scores: Vec<f64>,
    /// `None` when the test split lacks a class.
    pub test_report: Option<EvalReport>,
}

/// Splits, normalizes with training statistics, trains and scores the test split.
pub fn fit_holdout(raw: &Dataset, config: &TrainConfig) -> Result<HoldoutRun> {
    let split = split_holdout(
        raw.len(),
        config.test_fraction,
        config.val_fraction,
        derive_seed(config.seed, 2),
    )?;
    let model = fit(raw, &split.train, &split.validation, config)?;
    let prepared = model.0.normalization.apply(raw);
    let test_scores = model.0.scores(&prepared, &split.test);
    let labels = prepared.labels(&split.test);
    let test_report = EvalReport::point(&test_scores, &labels).ok();
    Ok(HoldoutRun {
        model: model.0,
        split,
        log: model.1,
        test_scores,
        test_report,
    })
}

/// Normalizes `raw` with statistics of `train_indices`, trains, and bundles the model.
pub fn fit(
    raw: &Dataset,
    train_indices: &[usize],
    validation: &[usize],
    config: &TrainConfig,
) -> Result<(TrainedModel, TrainingLog)> {
    if raw.normalization.is_some() {
        return Err(Error::InvalidArgument(
            "fit expects raw records; dataset is already normalized".into(),
        ));
    }
    let normalization = fit_normalization(raw, train_indices)?;
    let prepared = normalization.apply(raw);
    let (net, params, log) = train(&prepared, train_indices, validation, config)?;
    Ok((
        TrainedModel {
            net,
            params,
            feature_names: raw.feature_names.clone(),
            baseline_names: raw.baseline_names.clone(),
            normalization,
        },
        log,
    ))
}
