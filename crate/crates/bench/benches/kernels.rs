use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use dentalscan::nn::conv2d;
use dentalscan::preprocess::{prepare, BoundingBox, RgbImage};
use dentalscan::zoo::synthetic::synthetic_tensor;
use dentalscan::{ConvSpec, Tensor};

fn filled(shape: &[usize], name: &str) -> Tensor {
    synthetic_tensor(11, name, shape, (1.0, 0.0)).unwrap()
}

fn convolutions(c: &mut Criterion) {
    let cases = [
        ("stem_7x7_s2", ConvSpec::new(3, 64, 7, 2, 3), [3, 224, 224]),
        ("dense_3x3", ConvSpec::new(64, 64, 3, 1, 1), [64, 56, 56]),
        ("pointwise", ConvSpec::new(96, 576, 1, 1, 0), [96, 7, 7]),
        ("depthwise_5x5", ConvSpec::new(240, 240, 5, 1, 2).with_groups(240), [240, 14, 14]),
    ];
    let mut group = c.benchmark_group("conv2d");
    for (name, spec, shape) in cases {
        let input = filled(&shape, "input");
        let weights = filled(&spec.weight_shape(), "weight");
        group.bench_function(name, |b| {
            b.iter(|| conv2d(black_box(&input), &weights, None, &spec).unwrap())
        });
    }
    group.finish();
}

fn preprocessing(c: &mut Criterion) {
    let image = RgbImage::from_fn(1280, 960, |x, y| [(x % 256) as u8, (y % 256) as u8, 128]).unwrap();
    let bbox = BoundingBox::new(200, 150, 800, 600);
    c.bench_function("prepare_1280x960", |b| {
        b.iter(|| prepare(black_box(&image), bbox).unwrap())
    });
}

criterion_group!(benches, convolutions, preprocessing);
criterion_main!(benches);
