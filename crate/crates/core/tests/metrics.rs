mod common;

use common::Fixtures;
use dentalscan::metrics::{confusion_matrix, evaluate, metrics_from_cm, reports_to_csv, ConfusionMatrix, REPORT_HEADER};
use dentalscan::preprocess::Label;
use dentalscan::zoo::{synthetic_weights, Architecture, ModelGraph};
use dentalscan::Tensor;
use proptest::prelude::*;

proptest! {
    #[test]
    fn f1_lies_between_precision_and_recall(tp in 0u64..50, fp in 0u64..50, fn_ in 0u64..50, tn in 0u64..50) {
        prop_assume!(tp + fp + fn_ + tn > 0);
        let m = metrics_from_cm(&ConfusionMatrix::new(tp, fp, fn_, tn)).unwrap();
        if !m.recall_undefined && !m.precision_undefined && !m.f1_undefined {
            prop_assert!(m.f1 >= m.recall.min(m.precision) - 1e-12);
            prop_assert!(m.f1 <= m.recall.max(m.precision) + 1e-12);
        }
        for v in [m.accuracy, m.recall, m.precision, m.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        // Relabeling swaps tp<->tn and fp<->fn without changing accuracy.
        let swapped = metrics_from_cm(&ConfusionMatrix::new(tn, fn_, fp, tp)).unwrap();
        prop_assert_eq!(swapped.accuracy, m.accuracy);
    }

    #[test]
    fn counting_ignores_order(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..60), rot in 0usize..60) {
        let lab = |b: bool| if b { Label::Calculus } else { Label::NoCalculus };
        let (p, y): (Vec<_>, Vec<_>) = pairs.iter().map(|&(a, b)| (lab(a), lab(b))).unzip();
        let cm = confusion_matrix(&p, &y).unwrap();
        let (mut p2, mut y2) = (p.clone(), y.clone());
        let r = rot % p.len();
        p2.rotate_left(r);
        y2.rotate_left(r);
        prop_assert_eq!(confusion_matrix(&p2, &y2).unwrap(), cm);
        prop_assert_eq!(cm.total(), pairs.len() as u64);
    }
}

#[test]
fn constant_positive_model_on_the_test_distribution() {
    let fx = Fixtures::load();
    let store = synthetic_weights(Architecture::MobileNetV3Small, fx.seed).unwrap();
    let mut model = ModelGraph::build_backbone(Architecture::MobileNetV3Small, &store).unwrap();
    model
        .bind_head(Tensor::zeros(&[2, 1000]).unwrap(), Tensor::from_vec(vec![0.0, 1.0]))
        .unwrap();
    let inputs: Vec<Tensor> = (0..22).map(|i| fx.inputs[i % fx.inputs.len()].clone()).collect();
    let labels: Vec<Label> = (0..22).map(|i| if i < 12 { Label::Calculus } else { Label::NoCalculus }).collect();
    let report = evaluate(&model, &inputs, &labels).unwrap();
    assert_eq!(report.confusion, ConfusionMatrix::new(12, 10, 0, 0));
    assert_eq!(report.metrics.recall, 1.0);
    assert_eq!(report.metrics.accuracy, 12.0 / 22.0);
    assert_eq!(report.macs, model.count_macs([3, 224, 224]).unwrap().total());
    let csv = reports_to_csv(&[report]);
    assert_eq!(csv.lines().next(), Some(REPORT_HEADER));
    assert_eq!(csv.lines().nth(1).unwrap().split(',').count(), 10);
    assert!(evaluate(&model, &[], &[]).is_err());
}
