use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dentalscan::preprocess::RgbImage;
use dentalscan::spectral::SpectralCube;
use dentalscan::train::{Checkpoint, LinearHead};
use dentalscan::zoo::FEATURE_DIM;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

fn dentalscan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dentalscan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = dentalscan(args);
    assert!(out.status.success(), "{args:?} failed: {}", stderr(&out));
    stdout(&out)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    dir: TempDir,
    weights: PathBuf,
    checkpoint: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let weights = dir.path().join("mobilenet.tkws");
        ok(&["synth-weights", "--arch", "mobilenet_v3_small", "--seed", "1", "--out", s(&weights)]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (weight, bias) = LinearHead::init(FEATURE_DIM, &mut rng).to_tensors().unwrap();
        let checkpoint = dir.path().join("head.tkws");
        Checkpoint {
            weight,
            bias,
            epoch: 1,
            val_accuracy: 0.5,
        }
        .save(&checkpoint)
        .unwrap();
        Workspace {
            dir,
            weights,
            checkpoint,
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn image(&self, name: &str, w: u32, h: u32, tint: u8) -> PathBuf {
        let path = self.path(name);
        RgbImage::from_fn(w, h, |x, y| [(x % 256) as u8, (y % 256) as u8, tint])
            .unwrap()
            .save_png(&path)
            .unwrap();
        path
    }

    fn classify(&self, extra: &[&str]) -> Output {
        let mut args = vec![
            "classify",
            "--arch",
            "mobilenet_v3_small",
            "--weights",
            s(&self.weights),
            "--checkpoint",
            s(&self.checkpoint),
        ];
        args.extend_from_slice(extra);
        dentalscan(&args)
    }
}

fn probabilities(output: &str) -> (String, f64, f64) {
    let mut lines = output.lines();
    assert_eq!(lines.next(), Some("label,no_calculus,calculus"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    (row[0].to_string(), row[1].parse().unwrap(), row[2].parse().unwrap())
}

#[test]
fn image_and_preprocessed_tensor_classify_identically() {
    let ws = Workspace::new();
    let image = ws.image("mouth.png", 320, 240, 90);
    let tensor = ws.path("mouth.tkrt");
    let frame = ws.path("frame.png");
    ok(&[
        "preprocess", "--image", s(&image), "--bbox", "20,10,250,200", "--out", s(&tensor), "--frame", s(&frame),
    ]);
    let frame_img = RgbImage::load(&frame).unwrap();
    assert_eq!((frame_img.width(), frame_img.height()), (640, 640));

    let from_image = ws.classify(&["--image", s(&image), "--bbox", "20,10,250,200"]);
    let from_tensor = ws.classify(&["--tensor", s(&tensor)]);
    assert!(from_image.status.success(), "{}", stderr(&from_image));
    assert_eq!(stdout(&from_image), stdout(&from_tensor));
    // Same inputs, same numbers.
    assert_eq!(stdout(&ws.classify(&["--tensor", s(&tensor)])), stdout(&from_tensor));

    let (label, p0, p1) = probabilities(&stdout(&from_tensor));
    assert!((p0 + p1 - 1.0).abs() <= 1e-6, "{p0} + {p1}");
    assert_eq!(label, if p1 >= p0 { "calculus" } else { "no_calculus" });
    let header = stderr(&from_tensor);
    assert!(header.contains("# command: classify"));
    assert!(header.contains(&format!("# sha256 {}:", s(&ws.checkpoint))));
}

#[test]
fn missing_checkpoint_is_an_io_error_naming_the_path() {
    let ws = Workspace::new();
    let missing = ws.path("nowhere/head.tkws");
    let out = dentalscan(&[
        "classify", "--arch", "mobilenet", "--weights", s(&ws.weights), "--checkpoint", s(&missing), "--tensor", "x.tkrt",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains(s(&missing)), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_with_2() {
    let ws = Workspace::new();
    let image = ws.image("a.png", 8, 8, 0);
    let cases: Vec<Vec<&str>> = vec![
        vec!["bench", "--arch", "mobilenet", "--weights", s(&ws.weights), "--image", s(&image), "--runs", "0"],
        vec!["macs", "--arch", "vgg16"],
        vec!["classify", "--arch", "mobilenet", "--weights", "w", "--checkpoint", "c"],
        vec!["classify", "--arch", "mobilenet", "--weights", "w", "--checkpoint", "c", "--image", "a", "--tensor", "b"],
        vec!["macs", "--arch", "resnet34", "--input", "224x224"],
        vec!["preprocess", "--image", s(&image), "--bbox", "1,2,3", "--out", "x.tkrt"],
    ];
    for args in cases {
        let out = dentalscan(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn data_and_format_errors_exit_with_4() {
    let ws = Workspace::new();
    let garbage = ws.path("garbage.tkws");
    std::fs::write(&garbage, b"not a weight store").unwrap();
    let image = ws.image("small.png", 50, 40, 10);
    assert!(ws.classify(&["--image", s(&image)]).status.success());
    let out = dentalscan(&[
        "classify", "--arch", "mobilenet", "--weights", s(&garbage), "--checkpoint", s(&ws.checkpoint), "--image", s(&image),
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    let out_of_bounds = ws.classify(&["--image", s(&image), "--bbox", "40,0,20,10"]);
    assert_eq!(out_of_bounds.status.code(), Some(4), "{}", stderr(&out_of_bounds));
    // MobileNet weights do not satisfy the ResNet34 graph.
    let out = dentalscan(&["bench", "--arch", "resnet34", "--weights", s(&ws.weights), "--image", s(&image), "--runs", "1"]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
}

#[test]
fn mac_totals_and_layer_report() {
    let totals = ok(&["macs", "--arch", "mobilenet_v3_small"]);
    assert_eq!(totals.lines().nth(1), Some("mobilenet_v3_small,3x224x224,60127442,56512400"));
    let totals = ok(&["macs", "--arch", "resnet34"]);
    assert_eq!(totals.lines().nth(1), Some("resnet34,3x224x224,3675631034,3663763408"));
    let layers = ok(&["macs", "--arch", "mobilenet", "--per-layer"]);
    assert!(layers.starts_with("layer,kind,macs,aux_ops,total\n"));
    assert!(layers.trim_end().ends_with(",60127442"));
}

#[test]
fn bench_reports_match_mac_counter() {
    let ws = Workspace::new();
    let image = ws.image("b.png", 64, 64, 200);
    let json = ok(&[
        "bench", "--arch", "mobilenet", "--weights", s(&ws.weights), "--checkpoint", s(&ws.checkpoint), "--image",
        s(&image), "--runs", "4", "--warmup", "1", "--json",
    ]);
    let report: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(report["macs"], 60_127_442);
    assert_eq!(report["latencies_ms"].as_array().unwrap().len(), 4);
    assert!(report["p95_ms"].as_f64().unwrap() >= report["median_ms"].as_f64().unwrap());
    let csv = ok(&["bench", "--arch", "mobilenet", "--weights", s(&ws.weights), "--image", s(&image), "--runs", "2"]);
    assert!(csv.starts_with("model,load_ms,median_ms,p95_ms,peak_rss_bytes,macs,runs\nmobilenet_v3_small,"));
}

#[test]
fn spectral_cube_to_png() {
    let ws = Workspace::new();
    let cube_path = ws.path("cube.tksc");
    let wl = vec![400.0, 500.0, 600.0, 700.0];
    SpectralCube::uniform(5, 3, wl, &[1.0, 1.0, 1.0, 1.0]).unwrap().save(&cube_path).unwrap();
    let png = ws.path("cube.png");
    ok(&["spectral-convert", "--cube", s(&cube_path), "--out", s(&png)]);
    let img = RgbImage::load(&png).unwrap();
    assert_eq!((img.width(), img.height()), (5, 3));
    assert!(img.pixels().iter().all(|&v| v >= 254));
    let out = dentalscan(&["spectral-convert", "--cube", s(&cube_path), "--out", s(&png), "--illuminant", "F11"]);
    assert_eq!(out.status.code(), Some(2));
}

/// Twelve labeled images: bright frames are calculus, dark ones are not.
fn write_dataset(ws: &Workspace) -> PathBuf {
    std::fs::create_dir_all(ws.path("img")).unwrap();
    let mut csv = String::from("path,label,x,y,w,h\n");
    for i in 0..12u32 {
        let calculus = i % 2 == 0;
        let tint = if calculus { 230 } else { 20 };
        let w = 90 + 7 * i;
        ws.image(&format!("img/{i}.png"), w, 80, tint);
        csv.push_str(&format!("img/{i}.png,{},5,5,{},60\n", calculus as u8, w - 10));
    }
    let path = ws.path("manifest.csv");
    std::fs::write(&path, csv).unwrap();
    path
}

#[test]
fn end_to_end_pipeline() {
    let ws = Workspace::new();
    let manifest = write_dataset(&ws);
    let tagged = ws.path("tagged.csv");
    ok(&["split", "--manifest", s(&manifest), "--seed", "7", "--out", s(&tagged)]);
    let text = std::fs::read_to_string(&tagged).unwrap();
    let count = |tag: &str| text.lines().filter(|l| l.ends_with(tag)).count();
    assert_eq!((count(",train"), count(",val"), count(",test")), (8, 2, 2));
    // The tagged manifest sits next to the images, so relative paths resolve.
    let same = ok(&["split", "--manifest", s(&manifest), "--seed", "7"]);
    assert_eq!(same, text);

    let out_dir = ws.path("prepared");
    ok(&["preprocess", "--manifest", s(&tagged), "--out-dir", s(&out_dir), "--split", "test"]);
    let index = std::fs::read_to_string(out_dir.join("index.csv")).unwrap();
    assert_eq!(index.lines().count(), 3);

    for split in ["train", "val", "test"] {
        ok(&[
            "extract-features", "--arch", "mobilenet", "--weights", s(&ws.weights), "--manifest", s(&tagged), "--split",
            split, "--out", s(&ws.path(&format!("{split}.features.tkws"))),
        ]);
    }
    let ckpt = ws.path("trained.tkws");
    let curves = ok(&[
        "train", "--arch", "mobilenet", "--train-features", s(&ws.path("train.features.tkws")), "--val-features",
        s(&ws.path("val.features.tkws")), "--epochs", "4", "--seed", "2", "--out", s(&ckpt),
    ]);
    assert_eq!(curves.lines().count(), 5);
    assert!(curves.starts_with("epoch,train_loss,train_acc,val_loss,val_acc\n"));

    let common = ["evaluate", "--arch", "mobilenet", "--weights", s(&ws.weights), "--checkpoint", s(&ckpt)];
    let via_features = ok(&[&common[..], &["--features", s(&ws.path("test.features.tkws"))]].concat());
    let via_images = ok(&[&common[..], &["--manifest", s(&tagged), "--split", "test"]].concat());
    assert_eq!(via_features, via_images);
    let mut lines = via_images.lines();
    assert_eq!(lines.next(), Some("model,accuracy,recall,f1,precision,macs,tp,fp,fn,tn"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "mobilenet_v3_small");
    assert_eq!(row[5], "60127442");
    let total: u64 = row[6..].iter().map(|v| v.parse::<u64>().unwrap()).sum();
    assert_eq!(total, 2);
}
