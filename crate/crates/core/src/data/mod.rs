//! Datasets and everything that produces or reshapes them.

mod pca;
mod split;
mod synth;
mod transform;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

pub use pca::{fit_pca, fit_pca_rows, PcaBasis};
pub use split::{split_in_out, Split, SplitPlan};
pub use synth::{synth_blobs, synth_purchases, SynthSpec};
pub use transform::{apply_skew, inject_noise, SkewConfig};

use crate::{Error, Result};

/// Feature matrix with integer class labels.
///
/// Features are stored row-major. A dataset always holds at least one row,
/// one feature and two classes; labels lie in `0..n_classes`. Values are
/// finite but only guaranteed to lie in `[0, 1]` after [`Dataset::normalized`]
/// (see [`Dataset::is_normalized`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n_features: usize,
    labels: Vec<usize>,
    n_classes: usize,
    feature_names: Option<Vec<String>>,
    class_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn from_rows(rows: Vec<Vec<f64>>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != m) {
            return Err(Error::InvalidDataset(format!(
                "row {i} has {} features, expected {m}",
                r.len()
            )));
        }
        Self::from_flat(rows.concat(), m, labels, n_classes)
    }

    pub fn from_flat(
        features: Vec<f64>,
        n_features: usize,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::DegenerateLabelSet(n_classes));
        }
        if labels.is_empty() {
            return Err(Error::InvalidDataset("dataset has no rows".into()));
        }
        if n_features == 0 {
            return Err(Error::InvalidDataset("dataset has no features".into()));
        }
        if features.len() != labels.len() * n_features {
            return Err(Error::InvalidDataset(format!(
                "{} feature values for {} rows of width {n_features}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite value at row {}, column {}",
                pos / n_features,
                pos % n_features
            )));
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= n_classes) {
            return Err(Error::InvalidDataset(format!(
                "label {y} at row {i} is outside 0..{n_classes}"
            )));
        }
        Ok(Self {
            features,
            n_features,
            labels,
            n_classes,
            feature_names: None,
            class_names: None,
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_features {
            return Err(Error::LengthMismatch {
                left: names.len(),
                right: self.n_features,
            });
        }
        self.feature_names = Some(names);
        Ok(self)
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_classes {
            return Err(Error::LengthMismatch {
                left: names.len(),
                right: self.n_classes,
            });
        }
        self.class_names = Some(names);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    /// Always false; kept for the `len`/`is_empty` convention.
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.n_features)
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = alloc::vec![0; self.n_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order (repeats allowed). Names carry over.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(invalid_index(bad, self.len()));
        }
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        let mut out = Self::from_flat(features, self.n_features, labels, self.n_classes)?;
        out.feature_names.clone_from(&self.feature_names);
        out.class_names.clone_from(&self.class_names);
        Ok(out)
    }

    /// Same labels and names, new feature matrix of identical shape.
    pub(crate) fn with_features(&self, features: Vec<f64>) -> Result<Self> {
        let mut out = Self::from_flat(features, self.n_features, self.labels.clone(), self.n_classes)?;
        out.feature_names.clone_from(&self.feature_names);
        out.class_names.clone_from(&self.class_names);
        Ok(out)
    }

    /// Concatenates rows of `other` after `self`.
    pub fn concat(&self, other: &Dataset) -> Result<Self> {
        if other.n_features != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                found: other.n_features,
            });
        }
        if other.n_classes != self.n_classes {
            return Err(Error::InvalidDataset(format!(
                "class counts differ: {} vs {}",
                self.n_classes, other.n_classes
            )));
        }
        let mut features = self.features.clone();
        features.extend_from_slice(&other.features);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        self.with_features_and_labels(features, labels)
    }

    fn with_features_and_labels(&self, features: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        let mut out = Self::from_flat(features, self.n_features, labels, self.n_classes)?;
        out.feature_names.clone_from(&self.feature_names);
        out.class_names.clone_from(&self.class_names);
        Ok(out)
    }

    pub fn is_normalized(&self) -> bool {
        self.features.iter().all(|v| (0.0..=1.0).contains(v))
    }

    /// Min-max scales every column to `[0, 1]`; constant columns become 0.
    pub fn normalized(&self) -> Self {
        let m = self.n_features;
        let mut lo = alloc::vec![f64::INFINITY; m];
        let mut hi = alloc::vec![f64::NEG_INFINITY; m];
        for row in self.rows() {
            for (j, &v) in row.iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        let mut features = self.features.clone();
        for row in features.chunks_exact_mut(m) {
            for (j, v) in row.iter_mut().enumerate() {
                let range = hi[j] - lo[j];
                *v = if range > 0.0 {
                    ((*v - lo[j]) / range).clamp(0.0, 1.0)
                } else {
                    0.0
                };
            }
        }
        Self {
            features,
            ..self.clone()
        }
    }
}

pub(crate) fn invalid_index(i: usize, len: usize) -> Error {
    Error::InvalidArgument(format!("index {i} out of range for {len} rows"))
}
