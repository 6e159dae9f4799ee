mod common;

use common::{sha256_of_store, Fixtures};
use dentalscan::weights::WeightStore;
use dentalscan::zoo::{
    build_model, count_macs, required_tensors, synthetic_weights, Architecture, LayerKind, ModelGraph,
    INPUT_SHAPE,
};
use dentalscan::{Error, Tensor};

fn max_abs_diff(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}

#[test]
fn synthetic_store_matches_reference_generator_bitwise() {
    let fx = Fixtures::load();
    for arch in Architecture::ALL {
        assert_eq!(sha256_of_store(&fx.weights(arch)), fx.weights_sha256(arch), "{arch}");
    }
}

#[test]
fn forward_parity_with_reference_framework() {
    let fx = Fixtures::load();
    for arch in Architecture::ALL {
        let model = build_model(arch, &fx.weights(arch)).unwrap();
        let (features, logits) = fx.expected(arch);
        for (i, x) in fx.inputs.iter().enumerate() {
            let f = model.features(x).unwrap();
            let y = model.forward(x).unwrap();
            let fd = max_abs_diff(f.data(), &features.data()[i * 1000..(i + 1) * 1000]);
            let ld = max_abs_diff(y.data(), &logits.data()[i * 2..(i + 1) * 2]);
            assert!(ld <= 1e-3, "{arch} fixture {i}: logits differ by {ld}");
            assert!(fd <= 1e-3, "{arch} fixture {i}: features differ by {fd}");
        }
    }
}

#[test]
fn parameter_counts() {
    let resnet = build_model(Architecture::ResNet34, &synthetic_weights(Architecture::ResNet34, 1).unwrap()).unwrap();
    assert_eq!(resnet.backbone_parameter_count(), 21_797_672);
    assert_eq!(resnet.head_parameter_count(), 2_002);
    let mobile = build_model(
        Architecture::MobileNetV3Small,
        &synthetic_weights(Architecture::MobileNetV3Small, 1).unwrap(),
    )
    .unwrap();
    assert_eq!(mobile.backbone_parameter_count(), 2_542_856);
    assert_eq!(mobile.head_parameter_count(), 2_002);
}

fn without(store: &WeightStore, skip: &str) -> WeightStore {
    let mut out = WeightStore::new();
    for (name, t) in store.iter().filter(|(n, _)| *n != skip) {
        out.insert(name, t.clone()).unwrap();
    }
    out
}

#[test]
fn missing_head_is_reported() {
    let store = synthetic_weights(Architecture::MobileNetV3Small, 3).unwrap();
    match build_model(Architecture::MobileNetV3Small, &without(&store, "head.weight")) {
        Err(Error::MissingWeight(name)) => assert_eq!(name, "head.weight"),
        other => panic!("unexpected {other:?}"),
    }
    // Deferred binding: backbone builds, forward refuses until a head is bound.
    let mut model = ModelGraph::build_backbone(Architecture::MobileNetV3Small, &without(&store, "head.weight")).unwrap();
    let x = Tensor::zeros(&INPUT_SHAPE).unwrap();
    assert!(matches!(model.forward(&x), Err(Error::MissingWeight(_))));
    model
        .bind_head(store.require("head.weight").unwrap().clone(), store.require("head.bias").unwrap().clone())
        .unwrap();
    assert_eq!(model.forward(&x).unwrap().len(), 2);
}

#[test]
fn missing_backbone_tensor_is_reported() {
    let store = synthetic_weights(Architecture::ResNet34, 3).unwrap();
    match build_model(Architecture::ResNet34, &without(&store, "layer3.2.bn1.running_var")) {
        Err(Error::MissingWeight(name)) => assert_eq!(name, "layer3.2.bn1.running_var"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn wrong_tensor_shape_is_shape_error() {
    let store = synthetic_weights(Architecture::MobileNetV3Small, 3).unwrap();
    let mut bad = WeightStore::new();
    for (name, t) in store.iter() {
        let t = if name == "features.3.block.1.0.weight" {
            Tensor::zeros(&[88, 1, 5, 5]).unwrap()
        } else {
            t.clone()
        };
        bad.insert(name, t).unwrap();
    }
    assert!(matches!(build_model(Architecture::MobileNetV3Small, &bad), Err(Error::Shape(_))));
}

#[test]
fn forward_rejects_wrong_shape_and_is_deterministic() {
    let model = build_model(Architecture::MobileNetV3Small, &synthetic_weights(Architecture::MobileNetV3Small, 9).unwrap()).unwrap();
    assert!(matches!(model.forward(&Tensor::zeros(&[3, 112, 112]).unwrap()), Err(Error::Shape(_))));
    let fx = Fixtures::load();
    let a = model.forward(&fx.inputs[0]).unwrap();
    let b = model.forward(&fx.inputs[0]).unwrap();
    assert_eq!(a.len(), 2);
    assert!(a.is_finite());
    let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn traced_forward_matches_static_report() {
    let fx = Fixtures::load();
    for arch in Architecture::ALL {
        let model = build_model(arch, &fx.weights(arch)).unwrap();
        let (_, traced) = model.forward_traced(&fx.inputs[1]).unwrap();
        let stat = count_macs(&model, INPUT_SHAPE).unwrap();
        assert_eq!(traced.rows, stat.rows, "{arch}");
        assert_eq!(traced.total(), stat.total());
    }
}

#[test]
fn mac_totals_against_table_one() {
    let resnet = build_model(Architecture::ResNet34, &synthetic_weights(Architecture::ResNet34, 1).unwrap()).unwrap();
    let mobile = build_model(
        Architecture::MobileNetV3Small,
        &synthetic_weights(Architecture::MobileNetV3Small, 1).unwrap(),
    )
    .unwrap();
    let r = count_macs(&resnet, INPUT_SHAPE).unwrap();
    let m = count_macs(&mobile, INPUT_SHAPE).unwrap();
    // Multiply-accumulates alone: torchvision conv + fc, plus the 1000 -> 2 head.
    assert_eq!(r.multiply_accumulates().get(), 3_663_761_408 + 2_000);
    assert_eq!(m.multiply_accumulates().get(), 56_510_400 + 2_000);
    assert_eq!(m.total().get(), 60_127_442);
    assert_eq!(r.total().get(), 3_675_631_034);
    let rows_sum: u64 = r.rows.iter().map(|row| row.total()).sum();
    assert_eq!(rows_sum, r.total().get());
}

#[test]
fn conv_prefix_quadruples_at_double_resolution() {
    for arch in Architecture::ALL {
        let model = build_model(arch, &synthetic_weights(arch, 1).unwrap()).unwrap();
        let small = count_macs(&model, [3, 224, 224]).unwrap();
        let large = count_macs(&model, [3, 448, 448]).unwrap();
        assert_eq!(large.total_of(LayerKind::Conv), 4 * small.total_of(LayerKind::Conv), "{arch}");
        let small_macs: u64 = small.rows.iter().filter(|r| r.kind == LayerKind::Conv).map(|r| r.macs.get()).sum();
        let large_macs: u64 = large.rows.iter().filter(|r| r.kind == LayerKind::Conv).map(|r| r.macs.get()).sum();
        assert_eq!(large_macs, 4 * small_macs);
    }
}

#[test]
fn mobilenet_cheaper_at_every_size() {
    let resnet = build_model(Architecture::ResNet34, &synthetic_weights(Architecture::ResNet34, 1).unwrap()).unwrap();
    let mobile = build_model(
        Architecture::MobileNetV3Small,
        &synthetic_weights(Architecture::MobileNetV3Small, 1).unwrap(),
    )
    .unwrap();
    for side in [32, 64, 96, 160, 224, 320, 448, 512] {
        let r = count_macs(&resnet, [3, side, side]).unwrap().total();
        let m = count_macs(&mobile, [3, side, side]).unwrap().total();
        assert!(m < r, "side {side}: {m} >= {r}");
    }
}

#[test]
fn required_tensor_names_are_unique() {
    for arch in Architecture::ALL {
        let names = required_tensors(arch);
        let mut seen = std::collections::HashSet::new();
        assert!(names.iter().all(|(n, _)| seen.insert(n.clone())));
    }
}
