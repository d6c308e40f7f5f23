use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::types::{Dataset, Normalization};
use crate::error::{Error, Result};

pub const STD_FLOOR: f64 = 1e-6;

/// Mean and population standard deviation, shifted by the first value so constant input is exact.
fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let mut it = values.clone();
    let Some(first) = it.next() else {
        return (0.0, 1.0);
    };
    let n = values.clone().count() as f64;
    let shift_mean = values.clone().map(|v| v - first).sum::<f64>() / n;
    let var = values
        .map(|v| (v - first - shift_mean).powi(2))
        .sum::<f64>()
        / n;
    (first + shift_mean, var.sqrt().max(STD_FLOOR))
}

/// Z-score statistics from the cases at `train_indices`.
pub fn fit_normalization(dataset: &Dataset, train_indices: &[usize]) -> Result<Normalization> {
    if train_indices.is_empty() {
        return Err(Error::InvalidArgument(
            "normalization needs at least one training case".into(),
        ));
    }
    let train = || train_indices.iter().map(|&i| &dataset.cases[i]);
    let (feature_mean, feature_std) = (0..dataset.n_features())
        .map(|n| mean_std(train().flat_map(move |c| c.records[n].iter().copied())))
        .unzip();
    let (baseline_mean, baseline_std) = (0..dataset.n_baseline())
        .map(|s| {
            if dataset.binary_baseline[s] {
                (0.0, 1.0)
            } else {
                mean_std(train().map(move |c| c.baseline[s]))
            }
        })
        .unzip();
    Ok(Normalization {
        feature_mean,
        feature_std,
        baseline_mean,
        baseline_std,
    })
}

/// Z-scores dynamic features and numeric baseline dimensions with training-split statistics.
pub fn normalize(dataset: &Dataset, train_indices: &[usize]) -> Result<Dataset> {
    Ok(fit_normalization(dataset, train_indices)?.apply(dataset))
}

/// Partitions `0..n_cases` into `k` folds whose sizes differ by at most one.
pub fn split_folds(n_cases: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be at least 2, got {k}")));
    }
    if k > n_cases {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the {n_cases} available cases"
        )));
    }
    let mut order: Vec<usize> = (0..n_cases).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (pos, idx) in order.into_iter().enumerate() {
        folds[pos % k].push(idx);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Like [`split_folds`], but spreads each label class evenly over the folds.
pub fn split_folds_stratified(labels: &[u8], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let n_cases = labels.len();
    if k < 2 || k > n_cases {
        return split_folds(n_cases, k, seed);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<usize> = (0..n_cases).filter(|&i| labels[i] == 1).collect();
    let mut neg: Vec<usize> = (0..n_cases).filter(|&i| labels[i] != 1).collect();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); k];
    for (slot, idx) in pos.into_iter().chain(neg).enumerate() {
        folds[slot % k].push(idx);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Train / validation / test index sets.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Holds out `test_fraction` of the cases, then `val_fraction` of the remainder.
pub fn split_holdout(
    n_cases: usize,
    test_fraction: f64,
    val_fraction: f64,
    seed: u64,
) -> Result<Split> {
    let mut order: Vec<usize> = (0..n_cases).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = (n_cases as f64 * test_fraction).round() as usize;
    let test = order.split_off(n_cases - n_test);
    let validation = split_validation(&mut order, val_fraction)?;
    Ok(Split {
        train: sorted(order),
        validation: sorted(validation),
        test: sorted(test),
    })
}

/// Moves `fraction` of `pool` (at least one case, leaving at least one) into a validation set.
pub(crate) fn split_validation(pool: &mut Vec<usize>, fraction: f64) -> Result<Vec<usize>> {
    if pool.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 cases to carve out a validation set, have {}",
            pool.len()
        )));
    }
    let n_val = ((pool.len() as f64 * fraction).round() as usize).clamp(1, pool.len() - 1);
    Ok(pool.split_off(pool.len() - n_val))
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

/// Groups cases of identical visit count into shuffled batches of at most `batch_size`.
pub fn make_batches(
    dataset: &Dataset,
    indices: &[usize],
    batch_size: usize,
    seed: u64,
) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buckets: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in indices {
        buckets.entry(dataset.cases[i].len()).or_default().push(i);
    }
    let mut batches = Vec::new();
    for (_, mut bucket) in buckets {
        bucket.shuffle(&mut rng);
        batches.extend(bucket.chunks(batch_size).map(<[usize]>::to_vec));
    }
    batches.shuffle(&mut rng);
    batches
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::data::types::PatientCase;

    fn toy(values: &[&[f64]]) -> Dataset {
        Dataset {
            feature_names: vec!["a".into()],
            baseline_names: vec!["age".into(), "flag".into()],
            binary_baseline: vec![false, true],
            cases: values
                .iter()
                .enumerate()
                .map(|(i, v)| PatientCase {
                    id: format!("c{i}"),
                    baseline: vec![40.0 + i as f64, (i % 2) as f64],
                    timestamps: (0..v.len()).map(|t| t as f64).collect(),
                    records: vec![v.to_vec()],
                    label: (i % 2) as u8,
                })
                .collect(),
            normalization: None,
        }
    }

    #[test]
    fn constant_feature_becomes_zero() {
        let ds = toy(&[&[0.1, 0.1], &[0.1]]);
        let out = normalize(&ds, &[0, 1]).unwrap();
        assert!(out.cases.iter().flat_map(|c| &c.records[0]).all(|&v| v == 0.0));
    }

    #[test]
    fn two_point_z_score() {
        let ds = toy(&[&[0.0], &[2.0], &[7.0]]);
        let norm = fit_normalization(&ds, &[0, 1]).unwrap();
        assert_eq!(norm.feature_mean, vec![1.0]);
        assert_eq!(norm.feature_std, vec![1.0]);
        let out = norm.apply(&ds);
        assert_eq!(out.cases[1].records[0][0], 1.0);
        // flags are untouched
        assert_eq!(out.cases[1].baseline[1], 1.0);
    }

    #[test]
    fn training_columns_are_standardized() {
        let ds = toy(&[&[1.0, 4.0, 2.5], &[9.0], &[-3.0, 0.5], &[100.0]]);
        let out = normalize(&ds, &[0, 1, 2]).unwrap();
        let vals: Vec<f64> = [0, 1, 2]
            .iter()
            .flat_map(|&i| out.cases[i].records[0].clone())
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!(mean.abs() < 1e-9);
        assert!((var - 1.0).abs() < 1e-6);
        let again = normalize(&out, &[0, 1, 2]).unwrap();
        for (a, b) in again.cases.iter().zip(&out.cases) {
            for (x, y) in a.records[0].iter().zip(&b.records[0]) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn singleton_folds() {
        let folds = split_folds(10, 10, 3).unwrap();
        assert!(folds.iter().all(|f| f.len() == 1));
        let folds = split_folds(11, 10, 3).unwrap();
        let mut sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        sizes.sort();
        assert_eq!(sizes, [1, 1, 1, 1, 1, 1, 1, 1, 1, 2]);
        assert!(split_folds(3, 4, 0).is_err());
    }

    #[test]
    fn batches_share_sequence_length() {
        let ds = toy(&[&[1.0; 5], &[1.0; 5], &[1.0; 7]]);
        let mut batches = make_batches(&ds, &[0, 1, 2], 2, 9);
        for b in &mut batches {
            b.sort();
        }
        batches.sort();
        assert_eq!(batches, vec![vec![0, 1], vec![2]]);
        let singles = make_batches(&ds, &[0, 1, 2], 1, 9);
        assert_eq!(singles.len(), 3);
    }

    proptest! {
        #[test]
        fn folds_partition(n in 2usize..60, k in 2usize..12, seed in any::<u64>()) {
            prop_assume!(k <= n);
            let folds = split_folds(n, k, seed).unwrap();
            let mut all: Vec<usize> = folds.concat();
            all.sort();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let max = folds.iter().map(Vec::len).max().unwrap();
            let min = folds.iter().map(Vec::len).min().unwrap();
            prop_assert!(max - min <= 1);
            prop_assert_eq!(folds, split_folds(n, k, seed).unwrap());
        }

        #[test]
        fn stratified_folds_partition_and_balance(
            labels in prop::collection::vec(0u8..2, 2..60),
            k in 2usize..8,
            seed in any::<u64>(),
        ) {
            prop_assume!(k <= labels.len());
            let folds = split_folds_stratified(&labels, k, seed).unwrap();
            let mut all: Vec<usize> = folds.concat();
            all.sort();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
            let pos: Vec<usize> = folds.iter().map(|f| f.iter().filter(|&&i| labels[i] == 1).count()).collect();
            prop_assert!(pos.iter().max().unwrap() - pos.iter().min().unwrap() <= 1);
            let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }

        #[test]
        fn batches_cover_requested_ids(
            lens in prop::collection::vec(1usize..5, 1..30),
            bs in 1usize..6,
            seed in any::<u64>(),
        ) {
            let rows: Vec<Vec<f64>> = lens.iter().map(|&l| vec![0.0; l]).collect();
            let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
            let ds = toy(&refs);
            let ids: Vec<usize> = (0..ds.len()).collect();
            let batches = make_batches(&ds, &ids, bs, seed);
            let mut seen: Vec<usize> = batches.concat();
            seen.sort();
            prop_assert_eq!(seen, ids);
            for b in &batches {
                prop_assert!(b.len() <= bs);
                prop_assert!(b.iter().all(|&i| ds.cases[i].len() == ds.cases[b[0]].len()));
            }
        }
    }
}
