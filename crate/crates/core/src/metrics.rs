//! Confusion matrices and the four screening metrics. The positive class is
//! calculus present.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::nn::MacCount;
use crate::preprocess::Label;
use crate::tensor::Tensor;
use crate::zoo::{ModelGraph, INPUT_SHAPE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionMatrix { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn record(&mut self, predicted: Label, actual: Label) {
        match (predicted, actual) {
            (Label::Calculus, Label::Calculus) => self.tp += 1,
            (Label::Calculus, Label::NoCalculus) => self.fp += 1,
            (Label::NoCalculus, Label::Calculus) => self.fn_ += 1,
            (Label::NoCalculus, Label::NoCalculus) => self.tn += 1,
        }
    }
}

/// Cross-tabulates predictions against ground truth.
pub fn confusion_matrix(predictions: &[Label], labels: &[Label]) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::usage(format!(
            "{} predictions but {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::usage("confusion matrix of zero samples"));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &y) in predictions.iter().zip(labels) {
        cm.record(p, y);
    }
    Ok(cm)
}

/// Ratios in `[0, 1]`. A ratio with a zero denominator is reported as 0 and
/// its flag set.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    pub accuracy: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub recall_undefined: bool,
    pub precision_undefined: bool,
    pub f1_undefined: bool,
}

fn ratio(num: f64, den: f64) -> (f64, bool) {
    if den == 0.0 {
        (0.0, true)
    } else {
        (num / den, false)
    }
}

pub fn metrics_from_cm(cm: &ConfusionMatrix) -> Result<Metrics> {
    if cm.total() == 0 {
        return Err(Error::usage("metrics of an empty confusion matrix"));
    }
    let [tp, fp, fn_, tn] = [cm.tp, cm.fp, cm.fn_, cm.tn].map(|v| v as f64);
    let accuracy = (tp + tn) / cm.total() as f64;
    let (recall, recall_undefined) = ratio(tp, tp + fn_);
    let (precision, precision_undefined) = ratio(tp, tp + fp);
    let (f1, f1_undefined) = if recall_undefined || precision_undefined {
        (0.0, true)
    } else {
        ratio(2.0 * precision * recall, precision + recall)
    };
    Ok(Metrics {
        accuracy,
        recall,
        precision,
        f1,
        recall_undefined,
        precision_undefined,
        f1_undefined,
    })
}

/// Percentage with two decimals, e.g. `72.73`.
pub fn percent(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub model: String,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    pub macs: MacCount,
}

pub const REPORT_HEADER: &str = "model,accuracy,recall,f1,precision,macs,tp,fp,fn,tn";

impl MetricsReport {
    pub fn new(model: impl Into<String>, confusion: ConfusionMatrix, macs: MacCount) -> Result<Self> {
        Ok(MetricsReport {
            model: model.into(),
            metrics: metrics_from_cm(&confusion)?,
            confusion,
            macs,
        })
    }

    pub fn csv_row(&self) -> String {
        let m = &self.metrics;
        let c = &self.confusion;
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.model,
            percent(m.accuracy),
            percent(m.recall),
            percent(m.f1),
            percent(m.precision),
            self.macs.get(),
            c.tp,
            c.fp,
            c.fn_,
            c.tn
        )
    }
}

/// Header plus one row per report.
pub fn reports_to_csv(reports: &[MetricsReport]) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for r in reports {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}

/// Argmax over `[no_calculus, calculus]` logits, ties to the positive class.
pub fn predict_logits(logits: &[f32]) -> Result<Label> {
    match logits {
        [z0, z1] => Ok(if z1 >= z0 { Label::Calculus } else { Label::NoCalculus }),
        _ => Err(Error::shape(format!("expected 2 logits, got {}", logits.len()))),
    }
}

/// Classifies every input with `model` and scores the result. The MAC field
/// is the model's static count at the standard input size.
pub fn evaluate(model: &ModelGraph, inputs: &[Tensor], labels: &[Label]) -> Result<MetricsReport> {
    if inputs.is_empty() {
        return Err(Error::usage("evaluation set is empty"));
    }
    if inputs.len() != labels.len() {
        return Err(Error::usage(format!("{} inputs but {} labels", inputs.len(), labels.len())));
    }
    let predictions = inputs
        .iter()
        .map(|x| predict_logits(model.forward(x)?.data()))
        .collect::<Result<Vec<_>>>()?;
    let cm = confusion_matrix(&predictions, labels)?;
    let macs = model.count_macs(INPUT_SHAPE)?.total();
    MetricsReport::new(model.arch().id(), cm, macs)
}
