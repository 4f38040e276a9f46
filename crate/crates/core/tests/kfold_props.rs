use proptest::prelude::*;
use symkfcv_core::datagen::{generate_dataset, GrammarConfig};
use symkfcv_core::kfold::{
    average_losses, make_folds, reference, relative_improvement, run_baseline, run_kfcv,
    write_kfcv, ExperimentConfig, Protocol, ProtocolError, UnitKind,
};
use symkfcv_core::model::ModelConfig;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn folds_partition_and_balance(k in 2usize..=10, extra in 0usize..2000, seed in any::<u64>()) {
        let n = k + extra;
        let f = make_folds(n, k, seed).unwrap();
        let mut seen = vec![0usize; n];
        for fold in 0..k {
            let val = f.validation_indices(fold);
            let train = f.training_indices(fold);
            prop_assert!(!val.is_empty());
            prop_assert_eq!(val.len() + train.len(), n);
            for &i in &val {
                seen[i] += 1;
                prop_assert!(train.binary_search(&i).is_err());
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        let sizes = f.fold_sizes();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn improvement_inverts_a_known_reduction(a in 1e-6f64..1e3, p in -99.9f64..99.9) {
        let got = relative_improvement(a, a * (1.0 - p / 100.0)).unwrap();
        prop_assert!((got - p).abs() < 1e-9, "{} vs {}", got, p);
    }
}

#[test]
fn table_averages() {
    let (t, v) = average_losses(&reference::baseline_summary().records).unwrap();
    assert!((t - reference::BASELINE_OVERALL.0).abs() < 1e-9);
    assert!((v - reference::BASELINE_OVERALL.1).abs() < 1e-9);
    let (t, v) = average_losses(&reference::kfcv_summary().records).unwrap();
    assert!((t - reference::KFCV_OVERALL.0).abs() < 1e-5);
    assert!((v - reference::KFCV_OVERALL.1).abs() < 1e-5);
    assert!((v - 0.278576).abs() < 1e-12);
    let pct = relative_improvement(reference::BASELINE_OVERALL.1, v).unwrap();
    assert!((pct - reference::REPORTED_IMPROVEMENT_PERCENT).abs() < 0.01);
}

fn tiny_model(epochs: usize) -> ModelConfig {
    ModelConfig {
        embed_dim: 16,
        layers: 1,
        heads: 2,
        epochs,
        batch_size: 2,
        ..ModelConfig::desk()
    }
}

#[test]
fn two_folds_on_four_indices() {
    let (data, _) = generate_dataset(&GrammarConfig::default(), 4, 3).unwrap();
    let mut cfg = ExperimentConfig::new(Protocol::Kfcv, tiny_model(2), 11);
    cfg.k = 2;
    let out = run_kfcv(&data, &cfg).unwrap();
    assert_eq!(out.summary.unit, UnitKind::Fold);
    assert_eq!(out.summary.records.len(), 2);
    let mut validated: Vec<usize> = out.folds.iter().flat_map(|f| f.validation_indices.clone()).collect();
    validated.sort_unstable();
    assert_eq!(validated, vec![0, 1, 2, 3]);
    for f in &out.folds {
        assert_eq!(f.epochs.records.len(), 2);
        let last = f.epochs.records.last().unwrap();
        assert_eq!(out.summary.records[f.fold].train_loss, last.train_loss);
        assert_eq!(out.summary.records[f.fold].val_loss, last.val_loss);
    }
    out.summary.verify().unwrap();
    // folds start from different seeds
    assert_ne!(out.folds[0].params, out.folds[1].params);
    assert_eq!(run_kfcv(&data, &cfg).unwrap(), out);
}

#[test]
fn one_epoch_baseline_summary_is_its_record() {
    let (data, _) = generate_dataset(&GrammarConfig::default(), 10, 4).unwrap();
    let cfg = ExperimentConfig::new(Protocol::Baseline, tiny_model(1), 5);
    let out = run_baseline(&data, &cfg).unwrap();
    assert_eq!((out.train_indices.len(), out.validation_indices.len()), (8, 2));
    let r = out.summary.records[0];
    assert_eq!(out.summary.records.len(), 1);
    assert_eq!((out.summary.avg_train, out.summary.avg_val), (r.train_loss, r.val_loss));
    assert_eq!(run_baseline(&data, &cfg).unwrap().validation_indices, out.validation_indices);
}

#[test]
fn protocol_mismatch_is_rejected() {
    let (data, _) = generate_dataset(&GrammarConfig::default(), 4, 4).unwrap();
    let cfg = ExperimentConfig::new(Protocol::Baseline, tiny_model(1), 5);
    assert!(matches!(run_kfcv(&data, &cfg), Err(ProtocolError::WrongProtocol { .. })));
}

#[test]
fn kfcv_output_layout() {
    let (data, _) = generate_dataset(&GrammarConfig::default(), 6, 8).unwrap();
    let mut cfg = ExperimentConfig::new(Protocol::Kfcv, tiny_model(1), 2);
    cfg.k = 3;
    let out = run_kfcv(&data, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let summary = write_kfcv(dir.path(), &out, &cfg).unwrap();
    for i in 0..3 {
        assert!(dir.path().join(format!("fold_{i}/epochs.csv")).is_file());
        assert!(dir.path().join(format!("fold_{i}/checkpoint.json")).is_file());
    }
    let back = symkfcv_core::kfold::read_summary(&dir.path().join("summary.json")).unwrap();
    assert_eq!(back, summary);
    assert_eq!(back.fold_trajectories.len(), 3);
    assert_eq!(back.representative_fold, Some(out.best_fold));
    let best = out.summary.records[out.best_fold].val_loss;
    assert!(out.summary.records.iter().all(|r| r.val_loss >= best));
}
