mod common;

use common::Fixtures;
use dentalscan::preprocess::Label;
use dentalscan::train::{
    adam_step, extract_features, train_head, AdamConfig, AdamState, Checkpoint, FeatureSet, LinearHead, TrainConfig,
};
use dentalscan::zoo::{synthetic_weights, Architecture, ModelGraph, FEATURE_DIM};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn adam_minimizes_a_parabola() {
    let cfg = AdamConfig {
        learning_rate: 0.01,
        ..AdamConfig::default()
    };
    let mut theta = vec![1.0];
    let mut state = AdamState::new(1);
    for _ in 0..1000 {
        let grad = [2.0 * theta[0]];
        (theta, state) = adam_step(&theta, &grad, &state, &cfg).unwrap();
    }
    assert!(theta[0].abs() < 0.05, "theta = {}", theta[0]);
    assert_eq!(state.t, 1000);
    assert!(state.v.iter().all(|&v| v >= 0.0));
}

/// Two noisy clusters along the first coordinate.
fn clusters(seed: u64, n: usize) -> FeatureSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let label = if i % 3 == 0 { Label::Calculus } else { Label::NoCalculus };
        for d in 0..FEATURE_DIM {
            let shift = if d == 0 { if label == Label::Calculus { 2.0 } else { -2.0 } } else { 0.0 };
            features.push(shift + rng.random_range(-1.0f32..1.0));
        }
        labels.push(label);
    }
    FeatureSet::new(features, FEATURE_DIM, labels).unwrap()
}

#[test]
fn training_is_bitwise_deterministic() {
    let (train, val) = (clusters(1, 60), clusters(2, 30));
    let config = TrainConfig {
        epochs: 5,
        batch_size: 16,
        seed: 4,
        ..TrainConfig::for_arch(Architecture::ResNet34)
    };
    let a = train_head(&train, &val, &config).unwrap();
    let b = train_head(&train, &val, &config).unwrap();
    assert_eq!(a, b);
    let other = train_head(&train, &val, &TrainConfig { seed: 5, ..config }).unwrap();
    assert_ne!(a.last, other.last);
}

#[test]
fn checkpoint_is_the_best_validation_epoch() {
    let (train, val) = (clusters(3, 90), clusters(4, 45));
    let config = TrainConfig {
        epochs: 12,
        seed: 9,
        ..TrainConfig::for_arch(Architecture::MobileNetV3Small)
    };
    let out = train_head(&train, &val, &config).unwrap();
    assert_eq!(out.curves.epochs.len(), 12);
    let best = out.curves.epochs.iter().map(|r| r.val_acc).fold(f64::MIN, f64::max);
    let first_best = out.curves.epochs.iter().find(|r| r.val_acc == best).unwrap().epoch;
    assert_eq!(out.checkpoint.epoch, first_best);
    assert_eq!(out.checkpoint.val_accuracy, best);
    let csv = out.curves.to_csv();
    assert_eq!(csv.lines().count(), 13);
}

#[test]
fn checkpoint_file_round_trip_and_binding() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let head = LinearHead::init(FEATURE_DIM, &mut rng);
    let (weight, bias) = head.to_tensors().unwrap();
    let ckpt = Checkpoint {
        weight,
        bias,
        epoch: 7,
        val_accuracy: 0.75,
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("head.tkws");
    ckpt.save(&path).unwrap();
    assert_eq!(Checkpoint::load(&path).unwrap(), ckpt);

    // The bound head reproduces the f64 head on the backbone features.
    let fx = Fixtures::load();
    let store = synthetic_weights(Architecture::MobileNetV3Small, fx.seed).unwrap();
    let mut model = ModelGraph::build_backbone(Architecture::MobileNetV3Small, &store).unwrap();
    ckpt.bind(&mut model).unwrap();
    let features = model.features(&fx.inputs[0]).unwrap();
    let logits = model.forward(&fx.inputs[0]).unwrap();
    let reference = head.logits(features.data());
    for (a, b) in logits.data().iter().zip(reference) {
        assert!((*a as f64 - b).abs() < 1e-4, "{a} vs {b}");
    }
}

#[test]
fn extracted_features_are_stable_and_cacheable() {
    let fx = Fixtures::load();
    let store = synthetic_weights(Architecture::MobileNetV3Small, fx.seed).unwrap();
    let model = ModelGraph::build_backbone(Architecture::MobileNetV3Small, &store).unwrap();
    let inputs = vec![fx.inputs[2].clone(), fx.inputs[2].clone()];
    let set = extract_features(&model, &inputs, &[Label::Calculus, Label::NoCalculus]).unwrap();
    assert_eq!(set.dim(), 1000);
    assert_eq!(set.row(0), set.row(1));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("features.tkws");
    set.save(&path).unwrap();
    let back = FeatureSet::load(&path).unwrap();
    let bits = |s: &FeatureSet| s.matrix().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back), bits(&set));
    assert_eq!(back.labels(), set.labels());
}
