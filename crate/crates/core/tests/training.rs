use concare::data::synthetic::planted_score;
use concare::data::{fit_normalization, generate_synthetic, Dataset, PatientCase, SyntheticSpec};
use concare::model::ConCare;
use concare::train_eval::{auroc, bootstrap_eval, cross_validate, train, TrainConfig};
use concare::Error;

fn small_config() -> TrainConfig {
    TrainConfig {
        hidden: 8,
        heads: 2,
        ffn: 8,
        batch_size: 8,
        ..TrainConfig::default()
    }
}

/// Eight cases whose label is the sign of the single feature's last value.
fn separable_toy() -> Dataset {
    let cases = (0..8)
        .map(|i| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            PatientCase {
                id: format!("toy{i}"),
                baseline: vec![0.1 * i as f64],
                timestamps: vec![0.0, 4.0, 9.0],
                records: vec![vec![0.2 * sign, 0.5 * sign, (1.0 + 0.1 * i as f64) * sign]],
                label: u8::from(sign > 0.0),
            }
        })
        .collect();
    Dataset {
        feature_names: vec!["x".into()],
        baseline_names: vec!["b".into()],
        binary_baseline: vec![false],
        cases,
        normalization: None,
    }
}

#[test]
fn toy_set_loss_drops_without_decorrelation() {
    let raw = separable_toy();
    let all: Vec<usize> = (0..raw.len()).collect();
    let prepared = fit_normalization(&raw, &all).unwrap().apply(&raw);
    let config = TrainConfig {
        lambda_decorr: 0.0,
        max_epochs: 50,
        seed: 1,
        ..small_config()
    };
    let cases: Vec<&PatientCase> = prepared.cases.iter().collect();
    let (fresh, init) = ConCare::new(config.model_config(1, 1), concare::train_eval::derive_seed(1, 1)).unwrap();
    let before = fresh.batch_loss(&init, &cases, 0.0).total;
    let (net, params, log) = train(&prepared, &all, &[], &config).unwrap();
    let after = net.batch_loss(&params, &cases, 0.0).total;
    assert_eq!(log.records.len(), 50);
    assert!(after < before, "{after} !< {before}");
}

#[test]
fn identical_seeds_give_bitwise_identical_parameters() {
    let (raw, _) = generate_synthetic(&SyntheticSpec::new(3, 2, 60, 2)).unwrap();
    let all: Vec<usize> = (0..raw.len()).collect();
    let prepared = fit_normalization(&raw, &all).unwrap().apply(&raw);
    let config = TrainConfig {
        max_epochs: 4,
        seed: 9,
        ..small_config()
    };
    let (train_idx, val_idx) = all.split_at(45);
    let run = || train(&prepared, train_idx, val_idx, &config).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.1.to_saved(), b.1.to_saved());
    assert_eq!(a.2, b.2);
}

#[test]
fn overlapping_train_and_validation_is_rejected() {
    let raw = separable_toy();
    let prepared = fit_normalization(&raw, &[0, 1, 2, 3]).unwrap().apply(&raw);
    let err = train(&prepared, &[0, 1, 2], &[2, 3], &small_config()).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)), "{err}");
}

/// Hanley-McNeil standard error of an AUROC estimate.
fn hanley_mcneil_se(a: f64, n_pos: f64, n_neg: f64) -> f64 {
    let q1 = a / (2.0 - a);
    let q2 = 2.0 * a * a / (1.0 + a);
    ((a * (1.0 - a) + (n_pos - 1.0) * (q1 - a * a) + (n_neg - 1.0) * (q2 - a * a)) / (n_pos * n_neg)).sqrt()
}

#[test]
fn bootstrap_spread_matches_analytic_scale() {
    let mut spec = SyntheticSpec::new(4, 2, 200, 17);
    spec.label_noise = 0.15;
    let (raw, _) = generate_synthetic(&spec).unwrap();
    let scores: Vec<f64> = raw.cases.iter().map(|c| planted_score(&spec, c)).collect();
    let labels: Vec<u8> = raw.cases.iter().map(|c| c.label).collect();
    let a = auroc(&scores, &labels).unwrap();
    let n_pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let analytic = hanley_mcneil_se(a, n_pos, labels.len() as f64 - n_pos);

    let report = bootstrap_eval(&scores, &labels, 100, 3).unwrap();
    let observed = report.get("auroc").unwrap().std;
    let ratio = observed / analytic;
    assert!((1.0 / 3.0..=3.0).contains(&ratio), "bootstrap {observed} vs analytic {analytic}");
}

#[test]
fn cv_partitions_cases_and_tags_fold_errors() {
    let (raw, _) = generate_synthetic(&SyntheticSpec::new(2, 2, 45, 4)).unwrap();
    let config = TrainConfig {
        max_epochs: 2,
        ..small_config()
    };
    let result = cross_validate(&raw, 3, &config, true).unwrap();
    let mut seen: Vec<usize> = result.folds.iter().flat_map(|f| f.test_indices.clone()).collect();
    seen.sort_unstable();
    assert_eq!(seen, (0..raw.len()).collect::<Vec<_>>());
    assert_eq!(result.report.get("auroc").unwrap().replicates.len(), 3);

    let bad = TrainConfig {
        lr: 0.0,
        ..config
    };
    match cross_validate(&raw, 3, &bad, false) {
        Err(Error::Fold { fold: 0, source }) => assert!(matches!(*source, Error::Config(_))),
        other => panic!("expected fold error, got {other:?}"),
    }
}

#[test]
fn parallel_and_sequential_cv_agree() {
    let (raw, _) = generate_synthetic(&SyntheticSpec::new(2, 2, 40, 8)).unwrap();
    let config = TrainConfig {
        max_epochs: 2,
        ..small_config()
    };
    let a = cross_validate(&raw, 2, &config, true).unwrap();
    let b = cross_validate(&raw, 2, &config, false).unwrap();
    assert_eq!(a.report, b.report);
}

#[test]
fn exploding_learning_rate_aborts() {
    let (raw, _) = generate_synthetic(&SyntheticSpec::new(2, 2, 40, 5)).unwrap();
    let all: Vec<usize> = (0..raw.len()).collect();
    let prepared = fit_normalization(&raw, &all).unwrap().apply(&raw);
    let config = TrainConfig {
        lr: f64::MAX,
        max_epochs: 3,
        ..small_config()
    };
    let err = train(&prepared, &all, &[], &config).unwrap_err();
    assert!(
        matches!(err, Error::NonFiniteLoss { .. } | Error::NonFiniteGradient(_)),
        "{err}"
    );
}
