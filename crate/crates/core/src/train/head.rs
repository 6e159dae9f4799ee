use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::preprocess::Label;
use crate::tensor::Tensor;
use crate::train::adam::{adam_step, AdamConfig, AdamState};
use crate::train::features::FeatureSet;
use crate::train::loss::{LogBase, EPS_CLAMP};
use crate::weights::{load_weights, save_weights, WeightStore};
use crate::zoo::{Architecture, ModelGraph, FEATURE_DIM, HEAD_BIAS, HEAD_WEIGHT, NUM_CLASSES};

/// Dense `2 x dim` layer held in f64 while training. Parameters are laid out
/// flat: the row-major weight followed by the two biases.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    pub dim: usize,
    pub params: Vec<f64>,
}

impl LinearHead {
    pub fn zeros(dim: usize) -> Self {
        LinearHead {
            dim,
            params: vec![0.0; NUM_CLASSES * dim + NUM_CLASSES],
        }
    }

    /// Uniform in `+-1/sqrt(dim)`, the usual fully connected initialization.
    pub fn init(dim: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (dim as f64).sqrt();
        let params = (0..NUM_CLASSES * dim + NUM_CLASSES)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        LinearHead { dim, params }
    }

    pub fn logits(&self, x: &[f32]) -> [f64; 2] {
        let (w, b) = self.params.split_at(NUM_CLASSES * self.dim);
        let mut z = [b[0], b[1]];
        for (k, zk) in z.iter_mut().enumerate() {
            let row = &w[k * self.dim..(k + 1) * self.dim];
            *zk += row.iter().zip(x).map(|(&w, &x)| w * x as f64).sum::<f64>();
        }
        z
    }

    pub fn to_tensors(&self) -> Result<(Tensor, Tensor)> {
        let (w, b) = self.params.split_at(NUM_CLASSES * self.dim);
        Ok((
            Tensor::new(vec![NUM_CLASSES, self.dim], w.iter().map(|&v| v as f32).collect())?,
            Tensor::new(vec![NUM_CLASSES], b.iter().map(|&v| v as f32).collect())?,
        ))
    }
}

/// Probability of the calculus class from two logits.
pub fn positive_probability(z: [f64; 2]) -> f64 {
    1.0 / (1.0 + (z[0] - z[1]).exp())
}

/// Argmax with ties going to the positive class.
pub fn predict(z: [f64; 2]) -> Label {
    if z[1] >= z[0] {
        Label::Calculus
    } else {
        Label::NoCalculus
    }
}

/// Mean softmax cross-entropy over `rows` and its analytic gradient with
/// respect to the flat head parameters.
pub fn loss_and_gradient(
    head: &LinearHead,
    set: &FeatureSet,
    rows: &[usize],
    base: LogBase,
) -> Result<(f64, Vec<f64>)> {
    if rows.is_empty() {
        return Err(Error::usage("gradient of an empty batch"));
    }
    if set.dim() != head.dim {
        return Err(Error::shape(format!(
            "head expects {} features, set has {}",
            head.dim,
            set.dim()
        )));
    }
    let dim = head.dim;
    let scale = 1.0 / (rows.len() as f64 * base.ln_base());
    let mut grad = vec![0.0; head.params.len()];
    let mut loss = 0.0;
    for &i in rows {
        let x = set.row(i);
        let z = head.logits(x);
        let p1 = positive_probability(z);
        let y = set.labels()[i].index();
        let py = if y == 1 { p1 } else { 1.0 - p1 };
        loss -= base.log(py.clamp(EPS_CLAMP, 1.0 - EPS_CLAMP));
        // d(-ln p_y)/dz_k = p_k - [k == y]
        let dz = [(1.0 - p1) - (y == 0) as u8 as f64, p1 - (y == 1) as u8 as f64];
        for k in 0..NUM_CLASSES {
            let g = dz[k] * scale;
            for (gw, &xv) in grad[k * dim..(k + 1) * dim].iter_mut().zip(x) {
                *gw += g * xv as f64;
            }
            grad[NUM_CLASSES * dim + k] += g;
        }
    }
    Ok((loss / rows.len() as f64, grad))
}

/// Mean loss and accuracy of `head` over the whole set.
pub fn evaluate_head(head: &LinearHead, set: &FeatureSet, base: LogBase) -> Result<(f64, f64)> {
    let all: Vec<usize> = (0..set.len()).collect();
    let (loss, _) = loss_and_gradient(head, set, &all, base)?;
    let correct = (0..set.len())
        .filter(|&i| predict(head.logits(set.row(i))) == set.labels()[i])
        .count();
    Ok((loss, correct as f64 / set.len() as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub arch: Architecture,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub log_base: LogBase,
}

impl TrainConfig {
    /// ResNet34: batches of 128 for 30 epochs. MobileNetV3-Small: batches of
    /// 32 for 50 epochs.
    pub fn for_arch(arch: Architecture) -> Self {
        let (batch_size, epochs) = match arch {
            Architecture::ResNet34 => (128, 30),
            Architecture::MobileNetV3Small => (32, 50),
        };
        TrainConfig {
            arch,
            batch_size,
            epochs,
            adam: AdamConfig::default(),
            seed: 0,
            log_base: LogBase::Two,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::usage("batch size must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::usage("epoch count must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingCurves {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingCurves {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
        for r in &self.epochs {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{:.6}",
                r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc
            );
        }
        out
    }
}

const META_EPOCH: &str = "meta.epoch";
const META_VAL_ACC: &str = "meta.val_accuracy";

/// Trained head parameters with the epoch (1-based) they were taken from.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub weight: Tensor,
    pub bias: Tensor,
    pub epoch: usize,
    pub val_accuracy: f64,
}

impl Checkpoint {
    pub fn bind(&self, model: &mut ModelGraph) -> Result<()> {
        model.bind_head(self.weight.clone(), self.bias.clone())
    }

    pub fn to_store(&self) -> Result<WeightStore> {
        let mut store = WeightStore::new();
        store.insert(HEAD_WEIGHT, self.weight.clone())?;
        store.insert(HEAD_BIAS, self.bias.clone())?;
        store.insert(META_EPOCH, Tensor::scalar(self.epoch as f32))?;
        store.insert(META_VAL_ACC, Tensor::scalar(self.val_accuracy as f32))?;
        Ok(store)
    }

    /// Reads a head store; the `meta.*` entries are optional.
    pub fn from_store(store: &WeightStore) -> Result<Self> {
        let weight = store.require(HEAD_WEIGHT)?.clone();
        let bias = store.require(HEAD_BIAS)?.clone();
        if weight.shape() != [NUM_CLASSES, FEATURE_DIM] || bias.shape() != [NUM_CLASSES] {
            return Err(Error::shape(format!(
                "checkpoint head has shapes {:?} / {:?}",
                weight.shape(),
                bias.shape()
            )));
        }
        if !weight.is_finite() || !bias.is_finite() {
            return Err(Error::Domain("checkpoint contains non-finite parameters".into()));
        }
        let meta = |name| store.get(name).and_then(|t| t.data().first().copied());
        Ok(Checkpoint {
            weight,
            bias,
            epoch: meta(META_EPOCH).map_or(0, |e| e as usize),
            val_accuracy: meta(META_VAL_ACC).map_or(f64::NAN, f64::from),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<u64> {
        save_weights(path, &self.to_store()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Checkpoint::from_store(&load_weights(path)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub curves: TrainingCurves,
    /// Head after the final epoch, kept for inspection.
    pub last: LinearHead,
}

/// Mini-batch Adam on the head only. Returns the best-validation-accuracy
/// epoch (earliest on ties) and the per-epoch curves.
pub fn train_head(train: &FeatureSet, val: &FeatureSet, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if train.dim() != FEATURE_DIM || val.dim() != FEATURE_DIM {
        return Err(Error::shape(format!(
            "feature dimension must be {FEATURE_DIM}, got {} / {}",
            train.dim(),
            val.dim()
        )));
    }
    if val.is_empty() {
        return Err(Error::usage("validation split is empty"));
    }
    let positives = train.labels().iter().filter(|&&l| l == Label::Calculus).count();
    if positives == 0 || positives == train.len() {
        return Err(Error::Data("training split contains a single class".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut head = LinearHead::init(train.dim(), &mut rng);
    let mut state = AdamState::new(head.params.len());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curves = TrainingCurves::default();
    let mut best: Option<(f64, usize, LinearHead)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let (_, grad) = loss_and_gradient(&head, train, batch, config.log_base)?;
            let (params, next) = adam_step(&head.params, &grad, &state, &config.adam)?;
            head.params = params;
            state = next;
        }
        let (train_loss, train_acc) = evaluate_head(&head, train, config.log_base)?;
        let (val_loss, val_acc) = evaluate_head(&head, val, config.log_base)?;
        if head.params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("head parameters diverged at epoch {epoch}")));
        }
        curves.epochs.push(EpochRecord {
            epoch,
            train_loss,
            train_acc,
            val_loss,
            val_acc,
        });
        if best.as_ref().is_none_or(|(acc, _, _)| val_acc > *acc) {
            best = Some((val_acc, epoch, head.clone()));
        }
    }

    let (val_accuracy, epoch, best_head) = best.expect("at least one epoch ran");
    let (weight, bias) = best_head.to_tensors()?;
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            weight,
            bias,
            epoch,
            val_accuracy,
        },
        curves,
        last: head,
    })
}
