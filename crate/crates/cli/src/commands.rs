use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use dentalscan::bench::{bench_loaded, BenchReport, CSV_HEADER};
use dentalscan::metrics::{confusion_matrix, predict_logits, MetricsReport};
use dentalscan::nn::{activation, linear, Activation};
use dentalscan::preprocess::{
    canonical_frame, prepare, split_dataset, to_model_input, BoundingBox, DatasetManifest, Label, RgbImage, Split,
};
use dentalscan::spectral::{cube_to_rgb, ColorimetricTables, SpectralCube};
use dentalscan::train::{extract_features, train_head, Checkpoint, FeatureSet, TrainConfig};
use dentalscan::weights::{load_raw_tensor, load_weights, save_raw_tensor, save_weights};
use dentalscan::zoo::{synthetic_weights, Architecture, ModelGraph, INPUT_SHAPE};
use dentalscan::{Error, Result, Tensor};

use crate::header::Header;
use crate::{
    BenchArgs, ClassifyArgs, Command, EvaluateArgs, ExtractArgs, InputArgs, MacsArgs, PreprocessArgs, SpectralArgs,
    SplitArgs, SynthArgs, TrainArgs,
};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Preprocess(a) => preprocess(a),
        Command::Split(a) => split(a),
        Command::ExtractFeatures(a) => extract(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Classify(a) => classify(a),
        Command::Bench(a) => bench(a),
        Command::Macs(a) => macs(a),
        Command::SpectralConvert(a) => spectral(a),
        Command::SynthWeights(a) => synth(a),
    }
}

/// Writes `text` to `path`, or to stdout when there is none.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(out.flush()?)
        }
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn load_image_input(path: &Path, bbox: Option<BoundingBox>) -> Result<Tensor> {
    let image = RgbImage::load(path)?;
    let bbox = bbox.unwrap_or_else(|| BoundingBox::full(&image));
    prepare(&image, bbox)
}

fn load_input(input: &InputArgs, bbox: Option<BoundingBox>) -> Result<Tensor> {
    match (&input.image, &input.tensor) {
        (Some(image), None) => load_image_input(image, bbox),
        (None, Some(tensor)) => {
            let t = load_raw_tensor(tensor)?;
            if t.shape() != INPUT_SHAPE {
                return Err(Error::Shape(format!(
                    "{} holds a {:?} tensor, expected {INPUT_SHAPE:?}",
                    tensor.display(),
                    t.shape()
                )));
            }
            Ok(t)
        }
        _ => Err(Error::Usage("give exactly one of --image or --tensor".into())),
    }
}

fn input_path(input: &InputArgs) -> &Path {
    input.image.as_deref().or(input.tensor.as_deref()).expect("clap requires one input")
}

/// Backbone from `weights` with the head taken from `checkpoint`.
fn model_with_checkpoint(arch: Architecture, weights: &Path, checkpoint: &Path) -> Result<ModelGraph> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let mut model = ModelGraph::build_backbone(arch, &load_weights(weights)?)?;
    ckpt.bind(&mut model)?;
    Ok(model)
}

fn selected(manifest: &DatasetManifest, split: Option<Split>) -> Vec<usize> {
    (0..manifest.len())
        .filter(|&i| split.is_none() || manifest.records[i].split == split)
        .collect()
}

fn preprocess(a: PreprocessArgs) -> Result<()> {
    if let Some(image_path) = &a.image {
        Header::new("preprocess").file(image_path)?.emit();
        let out = a.out.as_deref().ok_or_else(|| Error::Usage("--image needs --out".into()))?;
        let image = RgbImage::load(image_path)?;
        let frame = canonical_frame(&image, a.bbox.unwrap_or_else(|| BoundingBox::full(&image)))?;
        if let Some(png) = &a.frame {
            frame.save_png(png)?;
        }
        save_raw_tensor(out, "input", &to_model_input(&frame)?)?;
        return Ok(());
    }
    let (Some(manifest_path), Some(out_dir)) = (&a.manifest, &a.out_dir) else {
        return Err(Error::Usage("give --image and --out, or --manifest and --out-dir".into()));
    };
    Header::new("preprocess").file(manifest_path)?.emit();
    let manifest = DatasetManifest::load(manifest_path)?;
    create_dir(out_dir)?;
    let mut index = String::from("tensor,frame,label,split\n");
    for i in selected(&manifest, a.split) {
        let record = &manifest.records[i];
        let image = RgbImage::load(manifest.resolve(record))?;
        let frame = canonical_frame(&image, record.bbox)?;
        let stem = record.path.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
        let tensor_name = format!("{i:05}_{stem}.tkrt");
        let frame_name = format!("{i:05}_{stem}.png");
        frame.save_png(out_dir.join(&frame_name))?;
        save_raw_tensor(out_dir.join(&tensor_name), "input", &to_model_input(&frame)?)?;
        let split = record.split.map(|s| s.to_string()).unwrap_or_default();
        index.push_str(&format!("{tensor_name},{frame_name},{},{split}\n", record.label.index()));
    }
    emit(Some(&out_dir.join("index.csv")), &index)
}

fn split(a: SplitArgs) -> Result<()> {
    Header::new("split").seed(a.seed).file(&a.manifest)?.emit();
    let manifest = DatasetManifest::load(&a.manifest)?;
    let assignment = split_dataset(&manifest, a.seed)?;
    eprintln!(
        "# split sizes: train {} / val {} / test {}",
        assignment.train.len(),
        assignment.validation.len(),
        assignment.test.len()
    );
    emit(a.out.as_deref(), &assignment.tag(&manifest).to_csv()?)
}

fn extract(a: ExtractArgs) -> Result<()> {
    Header::new("extract-features")
        .note("arch", a.arch)
        .file(&a.weights)?
        .file(&a.manifest)?
        .emit();
    let model = ModelGraph::build_backbone(a.arch, &load_weights(&a.weights)?)?;
    let manifest = DatasetManifest::load(&a.manifest)?;
    let rows = selected(&manifest, a.split);
    if rows.is_empty() {
        return Err(Error::Usage("no manifest records in the requested split".into()));
    }
    let mut inputs = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    for i in rows {
        let record = &manifest.records[i];
        inputs.push(prepare(&RgbImage::load(manifest.resolve(record))?, record.bbox)?);
        labels.push(record.label);
    }
    extract_features(&model, &inputs, &labels)?.save(&a.out)?;
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    Header::new("train")
        .note("arch", a.arch)
        .seed(a.seed)
        .file(&a.train_features)?
        .file(&a.val_features)?
        .emit();
    let defaults = TrainConfig::for_arch(a.arch);
    let mut config = TrainConfig {
        batch_size: a.batch_size.unwrap_or(defaults.batch_size),
        epochs: a.epochs.unwrap_or(defaults.epochs),
        seed: a.seed,
        log_base: a.log_base,
        ..defaults
    };
    config.adam.learning_rate = a.lr;
    let outcome = train_head(&FeatureSet::load(&a.train_features)?, &FeatureSet::load(&a.val_features)?, &config)?;
    outcome.checkpoint.save(&a.out)?;
    eprintln!(
        "# best epoch {} with validation accuracy {:.4}",
        outcome.checkpoint.epoch, outcome.checkpoint.val_accuracy
    );
    emit(a.curves.as_deref(), &outcome.curves.to_csv())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let mut header = Header::new("evaluate").note("arch", a.arch).file(&a.weights)?.file(&a.checkpoint)?;
    if let Some(m) = &a.manifest {
        header = header.file(m)?.note("split", a.split);
    }
    if let Some(f) = &a.features {
        header = header.file(f)?;
    }
    header.emit();
    let model = model_with_checkpoint(a.arch, &a.weights, &a.checkpoint)?;
    let macs = model.count_macs(INPUT_SHAPE)?.total();
    let (predictions, labels) = if let Some(features) = &a.features {
        let set = FeatureSet::load(features)?;
        let ckpt = Checkpoint::load(&a.checkpoint)?;
        let predictions = (0..set.len())
            .map(|i| {
                let x = Tensor::from_vec(set.row(i).to_vec());
                predict_logits(linear(&x, &ckpt.weight, &ckpt.bias)?.0.data())
            })
            .collect::<Result<Vec<Label>>>()?;
        (predictions, set.labels().to_vec())
    } else {
        let manifest_path = a.manifest.as_deref().expect("clap requires manifest or features");
        let manifest = DatasetManifest::load(manifest_path)?;
        let mut predictions = Vec::new();
        let mut labels = Vec::new();
        for (_, record) in manifest.in_split(a.split) {
            let x = prepare(&RgbImage::load(manifest.resolve(record))?, record.bbox)?;
            predictions.push(predict_logits(model.forward(&x)?.data())?);
            labels.push(record.label);
        }
        (predictions, labels)
    };
    if predictions.is_empty() {
        return Err(Error::Usage("nothing to evaluate".into()));
    }
    let report = MetricsReport::new(a.arch.id(), confusion_matrix(&predictions, &labels)?, macs)?;
    emit(a.out.as_deref(), &dentalscan::metrics::reports_to_csv(&[report]))
}

fn classify(a: ClassifyArgs) -> Result<()> {
    Header::new("classify")
        .note("arch", a.arch)
        .file(&a.weights)?
        .file(&a.checkpoint)?
        .file(input_path(&a.input))?
        .emit();
    // Resolve the checkpoint first so a missing head is reported before the
    // (slower) backbone load.
    let model = model_with_checkpoint(a.arch, &a.weights, &a.checkpoint)?;
    let x = load_input(&a.input, a.bbox)?;
    let logits = model.forward(&x)?;
    let probs = activation(Activation::Softmax, &logits)?;
    let label = predict_logits(logits.data())?;
    let p = probs.data();
    emit(None, &format!("label,no_calculus,calculus\n{label},{},{}\n", p[0], p[1]))
}

fn bench(a: BenchArgs) -> Result<()> {
    let mut header = Header::new("bench").note("arch", a.arch).file(&a.weights)?;
    if let Some(c) = &a.checkpoint {
        header = header.file(c)?;
    }
    header
        .file(input_path(&a.input))?
        .note("runs", a.runs)
        .note("warmup", a.warmup)
        .emit();
    if a.runs == 0 {
        return Err(Error::Usage("--runs must be at least 1".into()));
    }
    let x = load_input(&a.input, a.bbox)?;
    let start = Instant::now();
    let model = match &a.checkpoint {
        Some(c) => model_with_checkpoint(a.arch, &a.weights, c)?,
        None => ModelGraph::build(a.arch, &load_weights(&a.weights)?)?,
    };
    let load_ms = start.elapsed().as_secs_f64() * 1e3;
    let report = bench_loaded(&model, &x, a.runs, a.warmup, load_ms)?;
    emit(a.out.as_deref(), &format_bench(&report, a.json))
}

fn format_bench(report: &BenchReport, json: bool) -> String {
    if json {
        let mut s = serde_json::to_string_pretty(report).expect("report serializes");
        s.push('\n');
        s
    } else {
        format!("{CSV_HEADER}\n{}\n", report.csv_row())
    }
}

fn parse_extents(s: &str) -> Result<[usize; 3]> {
    let parts: Vec<usize> = s
        .split(['x', 'X'])
        .map(|p| p.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Usage(format!("input extents `{s}`: {e}")))?;
    match parts[..] {
        [c, h, w] => Ok([c, h, w]),
        _ => Err(Error::Usage(format!("input extents `{s}` must look like 3x224x224"))),
    }
}

fn macs(a: MacsArgs) -> Result<()> {
    let mut header = Header::new("macs").note("arch", a.arch).note("input", &a.input);
    if let Some(w) = &a.weights {
        header = header.file(w)?;
    }
    header.emit();
    let shape = parse_extents(&a.input)?;
    let store = match &a.weights {
        Some(w) => load_weights(w)?,
        None => synthetic_weights(a.arch, 0)?,
    };
    let report = ModelGraph::build(a.arch, &store)?.count_macs(shape)?;
    let text = if a.per_layer {
        report.to_csv()
    } else {
        format!(
            "model,input,macs,multiply_accumulates\n{},{},{},{}\n",
            a.arch.id(),
            a.input,
            report.total().get(),
            report.multiply_accumulates().get()
        )
    };
    emit(a.out.as_deref(), &text)
}

fn spectral(a: SpectralArgs) -> Result<()> {
    Header::new("spectral-convert")
        .note("illuminant", a.illuminant)
        .file(&a.cube)?
        .emit();
    let cube = SpectralCube::load(&a.cube)?;
    cube_to_rgb(&cube, &ColorimetricTables::new(a.illuminant))?.save_png(&a.out)
}

fn synth(a: SynthArgs) -> Result<()> {
    Header::new("synth-weights").note("arch", a.arch).seed(a.seed).emit();
    save_weights(&a.out, &synthetic_weights(a.arch, a.seed)?)?;
    Ok(())
}

