//! Dataset representation, stratified S/U/T splitting, and the on-disk
//! formats shared by the rest of the engine.

mod io;
mod split;

use std::collections::HashSet;
use std::path::PathBuf;

use crate::matrix::FeatureMatrix;

pub use io::{
    load_dataset, load_features, read_dfa, read_labels_sidecar, read_split, save_dataset,
    sidecar_path, write_dfa, write_labels_sidecar, write_split, DatasetFormat, LabelRow,
};
pub(crate) use io::class_names_of;
pub use split::{make_partitions, stratified_split, Split, SplitAssignment, SplitSpec};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("parse error at byte offset {offset}: {message}")]
    Binary { offset: usize, message: String },
    #[error("dimension error at row {row}: expected {expected} features, found {found}")]
    Dimension {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("non-finite feature at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },
    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),
    #[error("unknown sample id {0:?}")]
    UnknownId(String),
    #[error("stratification error: class {0:?} has no samples")]
    EmptyClass(String),
    #[error("invalid split spec: {0}")]
    Spec(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub id: String,
    pub raw_features: Vec<f64>,
    /// Index into [`Dataset::class_names`].
    pub true_label: usize,
}

/// Ordered collection of labeled feature vectors.
///
/// Ground-truth labels of unsupervised and test members are carried here for
/// evaluation only; the training paths never read them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<SampleRecord>,
    class_names: Vec<String>,
    d_raw: usize,
}

impl Dataset {
    /// Validates the invariants: non-empty, unique ids, uniform dimension,
    /// finite features, labels within range.
    pub fn new(samples: Vec<SampleRecord>, class_names: Vec<String>) -> Result<Self, DataError> {
        let first = samples
            .first()
            .ok_or_else(|| DataError::Invalid("dataset has no samples".into()))?;
        let d_raw = first.raw_features.len();
        let mut seen = HashSet::with_capacity(samples.len());
        for (row, s) in samples.iter().enumerate() {
            if s.raw_features.len() != d_raw {
                return Err(DataError::Dimension {
                    row: row + 1,
                    expected: d_raw,
                    found: s.raw_features.len(),
                });
            }
            if let Some(column) = s.raw_features.iter().position(|v| !v.is_finite()) {
                return Err(DataError::NonFinite {
                    row: row + 1,
                    column,
                });
            }
            if s.true_label >= class_names.len() {
                return Err(DataError::Invalid(format!(
                    "sample {:?} has label index {} but only {} classes exist",
                    s.id,
                    s.true_label,
                    class_names.len()
                )));
            }
            if !seen.insert(s.id.as_str()) {
                return Err(DataError::DuplicateId(s.id.clone()));
            }
        }
        Ok(Self {
            samples,
            class_names,
            d_raw,
        })
    }

    /// Convenience constructor from a feature matrix and label indices; ids
    /// are the row numbers.
    pub fn from_matrix(
        features: &FeatureMatrix,
        labels: &[usize],
        class_names: Vec<String>,
    ) -> Result<Self, DataError> {
        if features.rows() != labels.len() {
            return Err(DataError::Invalid(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        let samples = features
            .iter_rows()
            .zip(labels)
            .enumerate()
            .map(|(i, (row, &label))| SampleRecord {
                id: i.to_string(),
                raw_features: row.to_vec(),
                true_label: label,
            })
            .collect();
        Self::new(samples, class_names)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[SampleRecord] {
        &self.samples
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn d_raw(&self) -> usize {
        self.d_raw
    }

    pub fn ids(&self) -> Vec<&str> {
        self.samples.iter().map(|s| s.id.as_str()).collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.true_label).collect()
    }

    pub fn features(&self) -> FeatureMatrix {
        let mut m = FeatureMatrix::zeros(self.len(), self.d_raw);
        for (i, s) in self.samples.iter().enumerate() {
            m.row_mut(i).copy_from_slice(&s.raw_features);
        }
        m
    }

    /// Feature rows for the given sample indices, in that order.
    pub fn features_of(&self, indices: &[usize]) -> FeatureMatrix {
        let mut m = FeatureMatrix::zeros(indices.len(), self.d_raw);
        for (r, &i) in indices.iter().enumerate() {
            m.row_mut(r).copy_from_slice(&self.samples[i].raw_features);
        }
        m
    }

    /// Number of samples per class, indexed like `class_names`.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for s in &self.samples {
            counts[s.true_label] += 1;
        }
        counts
    }
}
