use std::ops::ControlFlow;

use grbas::features::{Cepstrogram, FeatureStats, COLS, ROWS};
use grbas::net::{load_checkpoint, predict, save_checkpoint, CheckpointMeta, GrbasNet};
use grbas::nn::Tensor;
use grbas::train::{cross_validate, evaluate, prepare, train, Example, Precision, Sample, TrainConfig, TrainError};
use grbas::Grade;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sample(id: &str, grade: u8, seed: u64) -> Sample<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..ROWS * COLS).map(|_| rng.random_range(-1.0f32..1.0) + grade as f32).collect();
    Sample {
        name: format!("{id}__orig_C_0"),
        source_id: id.to_string(),
        grade: Grade::new(grade).unwrap(),
        features: Cepstrogram::from_values(values).unwrap(),
    }
}

/// `n` tables of one sample per grade, each from its own source file.
fn tables(n: usize) -> Vec<Vec<Sample<f32>>> {
    (0..n).map(|t| (0..4).map(|g| sample(&format!("t{t}g{g}"), g, (10 * t + g as usize) as u64)).collect()).collect()
}

fn quick_config() -> TrainConfig {
    TrainConfig { epochs: 1, batch_size: 4, ..TrainConfig::default() }
}

#[test]
fn four_folds_give_four_models_and_their_mean() {
    let report = cross_validate(&tables(5), Some(4), &quick_config(), |_, _| {}).unwrap();
    assert_eq!(report.folds.len(), 4);
    assert_eq!(report.folds.iter().map(|f| f.table).collect::<Vec<_>>(), [0, 1, 2, 3]);
    let mean = report.folds.iter().map(|f| f.validation.accuracy).sum::<f64>() / 4.0;
    assert!((report.mean_val_accuracy - mean).abs() < 1e-9);
    let mean_mae = report.folds.iter().map(|f| f.validation.mae).sum::<f64>() / 4.0;
    assert!((report.mean_val_mae - mean_mae).abs() < 1e-9);
    for f in &report.folds {
        assert_eq!(f.outcome.history.epochs.len(), 1);
        assert_eq!(f.validation.matrix.total(), 4);
        assert_eq!(f.test.as_ref().unwrap().matrix.total(), 4);
    }
    assert!(report.mean_test_accuracy.is_some());
}

#[test]
fn leaked_source_aborts_with_its_id() {
    let mut t = tables(3);
    let leaked = t[0][2].clone();
    t[1].push(Sample { name: "another_clip".into(), ..leaked });
    match cross_validate(&t, None, &quick_config(), |_, _| {}) {
        Err(TrainError::Leakage { file_id, .. }) => assert_eq!(file_id, "t0g2"),
        other => panic!("expected leakage, got {:?}", other.map(|r| r.folds.len())),
    }
}

#[test]
fn constant_predictor_on_a_balanced_set() {
    let mut net = GrbasNet::<f32>::init(0);
    net.output.weights.data_mut().iter_mut().for_each(|w| *w = 0.0);
    net.output.biases.data_mut().copy_from_slice(&[3.0, 0.0, 0.0, 0.0]);
    let set: Vec<Example<f32>> = (0..8)
        .map(|i| Example {
            name: format!("e{i}"),
            source_id: format!("e{i}"),
            grade: Grade::new((i % 4) as u8).unwrap(),
            input: Tensor::zeros(&[ROWS, COLS, 1]),
        })
        .collect();
    let ev = evaluate(&net, &set).unwrap();
    assert_eq!(ev.accuracy, 0.25);
    assert_eq!(ev.mae, 1.5);
    assert_eq!(ev.matrix.col_totals(), [8, 0, 0, 0]);
    assert_eq!(ev.matrix.row_totals(), [2, 2, 2, 2]);
}

#[test]
fn checkpoints_reproduce_predictions() {
    let t = tables(1);
    let stats = FeatureStats::new(1.5, 1.2).unwrap();
    let set = prepare(&t[0], &stats);
    let out = train(GrbasNet::<f32>::init(4), &set, &[], &quick_config(), |_, _| ControlFlow::Continue(())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fold.ckpt");
    save_checkpoint(&path, &out.net, &CheckpointMeta { seed: 4, epoch: 1, stats }).unwrap();
    let (back, meta) = load_checkpoint::<f32>(&path).unwrap();
    assert_eq!(meta.stats, stats);
    assert_eq!(evaluate(&back, &set).unwrap().predictions, evaluate(&out.net, &set).unwrap().predictions);
}

#[test]
fn observer_can_stop_training() {
    let t = tables(1);
    let set = prepare(&t[0], &FeatureStats::new(1.5, 1.2).unwrap());
    let cfg = TrainConfig { epochs: 10, precision: Precision::F32, ..quick_config() };
    let out = train(GrbasNet::<f32>::init(1), &set, &[], &cfg, |s, _| {
        if s.epoch == 2 {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })
    .unwrap();
    assert_eq!(out.history.epochs.len(), 2);
    assert_eq!(out.history.snapshots.len(), 3);
}

proptest! {
    #[test]
    fn prediction_survives_increasing_transforms(a in prop::array::uniform4(0.0f64..1.0), scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
        let g = predict(&a);
        let affine: Vec<f64> = a.iter().map(|v| scale * v + shift).collect();
        let cubed: Vec<f64> = a.iter().map(|v| v.powi(3)).collect();
        let logit: Vec<f64> = a.iter().map(|v| (v / (1.0 - v)).ln()).collect();
        prop_assert_eq!(predict(&affine), g);
        prop_assert_eq!(predict(&cubed), g);
        prop_assert_eq!(predict(&logit), g);
    }
}
