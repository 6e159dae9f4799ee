use std::path::Path;

use crate::error::{Error, Result};
use crate::preprocess::Label;
use crate::tensor::Tensor;
use crate::weights::{load_weights, save_weights, WeightStore};
use crate::zoo::{ModelGraph, FEATURE_DIM};

/// Frozen-backbone outputs with their labels, one row per image.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    features: Vec<f32>,
    dim: usize,
    labels: Vec<Label>,
}

impl FeatureSet {
    /// `features` is row-major `labels.len() x dim`.
    pub fn new(features: Vec<f32>, dim: usize, labels: Vec<Label>) -> Result<Self> {
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(Error::shape(format!(
                "{} feature values do not form {} rows of {dim}",
                features.len(),
                labels.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("feature matrix contains non-finite values".into()));
        }
        Ok(FeatureSet {
            features,
            dim,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn matrix(&self) -> &[f32] {
        &self.features
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<FeatureSet> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::usage(format!("row {i} of a {}-row feature set", self.len())));
            }
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Ok(FeatureSet {
            features,
            dim: self.dim,
            labels,
        })
    }

    pub fn to_store(&self) -> Result<WeightStore> {
        let mut store = WeightStore::new();
        store.insert(
            "features",
            Tensor::new(vec![self.len(), self.dim], self.features.clone())?,
        )?;
        let labels = self.labels.iter().map(|l| l.index() as f32).collect();
        store.insert("labels", Tensor::new(vec![self.len()], labels)?)?;
        Ok(store)
    }

    pub fn from_store(store: &WeightStore) -> Result<Self> {
        let features = store.require("features")?;
        let labels = store.require("labels")?;
        let &[rows, dim] = features.shape() else {
            return Err(Error::shape(format!("features tensor has shape {:?}", features.shape())));
        };
        if labels.shape() != [rows] {
            return Err(Error::shape(format!(
                "labels tensor has shape {:?}, expected [{rows}]",
                labels.shape()
            )));
        }
        let labels = labels
            .data()
            .iter()
            .map(|&v| match v {
                0.0 => Ok(Label::NoCalculus),
                1.0 => Ok(Label::Calculus),
                other => Err(Error::Data(format!("label value {other} is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>>>()?;
        FeatureSet::new(features.data().to_vec(), dim, labels)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<u64> {
        save_weights(path, &self.to_store()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        FeatureSet::from_store(&load_weights(path)?)
    }
}

/// Runs the frozen backbone over `inputs`; any bound head is ignored.
pub fn extract_features(model: &ModelGraph, inputs: &[Tensor], labels: &[Label]) -> Result<FeatureSet> {
    if inputs.len() != labels.len() {
        return Err(Error::usage(format!(
            "{} inputs but {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    let mut features = Vec::with_capacity(inputs.len() * FEATURE_DIM);
    for input in inputs {
        features.extend_from_slice(model.features(input)?.data());
    }
    FeatureSet::new(features, FEATURE_DIM, labels.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn store_round_trip() {
        let set = FeatureSet::new(
            vec![0.5, -1.0, 2.0, 3.25, 0.0, 1e-30],
            3,
            vec![Label::Calculus, Label::NoCalculus],
        )
        .unwrap();
        let mut bytes = Vec::new();
        crate::weights::write_weights(&set.to_store().unwrap(), &mut bytes).unwrap();
        let back = crate::weights::read_weights(&mut bytes.as_slice()).unwrap();
        assert_eq!(FeatureSet::from_store(&back).unwrap(), set);
    }

    #[test]
    fn ragged_matrix_rejected() {
        assert!(FeatureSet::new(vec![0.0; 5], 3, vec![Label::Calculus; 2]).is_err());
    }

    #[test]
    fn select_rows() {
        let set = FeatureSet::new(vec![0.0, 1.0, 2.0], 1, vec![Label::NoCalculus, Label::Calculus, Label::Calculus])
            .unwrap();
        let sub = set.select(&[2, 0]).unwrap();
        assert_eq!(sub.matrix(), &[2.0, 0.0]);
        assert_eq!(sub.labels(), &[Label::Calculus, Label::NoCalculus]);
    }
}
