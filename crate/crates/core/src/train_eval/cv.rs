use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::metrics::{all_metrics, METRIC_NAMES};
use super::report::{EvalReport, MetricSummary};
use super::train::{derive_seed, fit, TrainConfig};
use crate::data::{split_folds_stratified, split_validation, Dataset};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct FoldResult {
    pub fold: usize,
    pub test_indices: Vec<usize>,
    pub scores: Vec<f64>,
    /// Metrics in [`METRIC_NAMES`] order.
    pub metrics: [f64; 3],
    pub best_epoch: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvResult {
    /// `point` is computed on the pooled out-of-fold scores; replicates are per fold.
    pub report: EvalReport,
    pub folds: Vec<FoldResult>,
}

/// k-fold cross-validation on a raw dataset.
///
/// Folds are stratified by label. Each training pool carves out a validation
/// slice for early stopping and is normalized with its own statistics.
pub fn cross_validate(
    raw: &Dataset,
    k: usize,
    config: &TrainConfig,
    parallel: bool,
) -> Result<CvResult> {
    let labels = raw.labels(&(0..raw.len()).collect::<Vec<_>>());
    let folds = split_folds_stratified(&labels, k, derive_seed(config.seed, 3))?;
    let run = |fold: usize| -> Result<FoldResult> {
        run_fold(raw, &folds, fold, config).map_err(|e| Error::Fold {
            fold,
            source: Box::new(e),
        })
    };
    let results: Vec<FoldResult> = if parallel {
        (0..k).into_par_iter().map(run).collect::<Result<_>>()?
    } else {
        (0..k).map(run).collect::<Result<_>>()?
    };

    let mut pooled_scores = Vec::with_capacity(raw.len());
    let mut pooled_labels = Vec::with_capacity(raw.len());
    for r in &results {
        pooled_scores.extend_from_slice(&r.scores);
        pooled_labels.extend(r.test_indices.iter().map(|&i| labels[i]));
    }
    let pooled = all_metrics(&pooled_scores, &pooled_labels)?;
    let mut report = EvalReport::default();
    for (m, name) in METRIC_NAMES.iter().enumerate() {
        let reps = results.iter().map(|r| r.metrics[m]).collect();
        report
            .metrics
            .insert(name.to_string(), MetricSummary::from_replicates(pooled[m], reps));
    }
    Ok(CvResult {
        report,
        folds: results,
    })
}

fn run_fold(raw: &Dataset, folds: &[Vec<usize>], fold: usize, config: &TrainConfig) -> Result<FoldResult> {
    let test = folds[fold].clone();
    let mut pool: Vec<usize> = folds
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != fold)
        .flat_map(|(_, f)| f.iter().copied())
        .collect();
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 100 + fold as u64)));
    let mut validation = split_validation(&mut pool, config.val_fraction)?;
    pool.sort_unstable();
    validation.sort_unstable();

    let fold_config = TrainConfig {
        seed: derive_seed(config.seed, 200 + fold as u64),
        ..config.clone()
    };
    let (model, log) = fit(raw, &pool, &validation, &fold_config)?;
    let prepared = model.normalization.apply(raw);
    let scores = model.scores(&prepared, &test);
    let metrics = all_metrics(&scores, &prepared.labels(&test))?;
    Ok(FoldResult {
        fold,
        test_indices: test,
        scores,
        metrics,
        best_epoch: log.best_epoch,
    })
}
