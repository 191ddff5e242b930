//! Classifiers that turn embeddings into [`Predictions`].

mod linear;
mod similarity;

pub use linear::{
    initial_model, loss_and_gradient, predict, train_probe, CheckpointInfo, EpochLog, ProbeConfig,
    ProbeModel,
};
pub use similarity::{classify_similarity, SimilarityMeasure, SimilarityMode};

use serde::{Deserialize, Serialize};

use crate::embedding_io::EmbeddingSet;
use crate::{Error, Result};

/// Feature rows with labels, gathered from an [`EmbeddingSet`] by id.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub features: Vec<Vec<f32>>,
    pub labels: Vec<u32>,
    pub dim: usize,
    pub num_classes: u32,
}

impl Dataset {
    pub fn new(
        ids: Vec<String>,
        features: Vec<Vec<f32>>,
        labels: Vec<u32>,
        dim: usize,
        num_classes: u32,
    ) -> Result<Self> {
        if ids.len() != features.len() || ids.len() != labels.len() {
            return Err(Error::InvalidProbeInput(
                "ids, features and labels differ in length".into(),
            ));
        }
        if let Some(row) = features.iter().find(|r| r.len() != dim) {
            return Err(Error::QueryDimMismatch {
                expected: dim,
                found: row.len(),
            });
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidProbeInput(format!(
                "label {l} is not below num_classes {num_classes}"
            )));
        }
        Ok(Dataset {
            ids,
            features,
            labels,
            dim,
            num_classes,
        })
    }

    pub fn empty(dim: usize, num_classes: u32) -> Self {
        Dataset {
            ids: Vec::new(),
            features: Vec::new(),
            labels: Vec::new(),
            dim,
            num_classes,
        }
    }

    /// Rows of `set` for `ids`, in the order given.
    pub fn from_set(set: &EmbeddingSet, ids: &[String]) -> Result<Self> {
        let index = set.index_by_id();
        let mut features = Vec::with_capacity(ids.len());
        let mut labels = Vec::with_capacity(ids.len());
        for id in ids {
            let &i = index.get(id.as_str()).ok_or_else(|| {
                Error::InvalidProbeInput(format!(
                    "id `{id}` missing from {}/{}/{}",
                    set.model_id, set.task_id, set.regime
                ))
            })?;
            features.push(set.records[i].vector.clone());
            labels.push(set.records[i].label);
        }
        Ok(Dataset {
            ids: ids.to_vec(),
            features,
            labels,
            dim: set.dim,
            num_classes: set.num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn subset(&self, idx: impl IntoIterator<Item = usize>) -> Dataset {
        let mut out = Dataset::empty(self.dim, self.num_classes);
        for i in idx {
            out.ids.push(self.ids[i].clone());
            out.features.push(self.features[i].clone());
            out.labels.push(self.labels[i]);
        }
        out
    }

    pub fn distinct_labels(&self) -> usize {
        let mut seen = vec![false; self.num_classes as usize];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        seen.into_iter().filter(|&s| s).count()
    }
}

/// Per-example class scores (rows sum to one), hard predictions and truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictions {
    pub ids: Vec<String>,
    pub scores: Vec<Vec<f64>>,
    pub predicted: Vec<u32>,
    pub true_label: Vec<u32>,
}

impl Predictions {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.scores.first().map_or(0, Vec::len)
    }

    /// Builds predictions from score rows; `predicted` is the row argmax
    /// with the lowest index winning ties.
    pub fn from_scores(ids: Vec<String>, scores: Vec<Vec<f64>>, true_label: Vec<u32>) -> Self {
        let predicted = scores.iter().map(|row| argmax(row) as u32).collect();
        Predictions {
            ids,
            scores,
            predicted,
            true_label,
        }
    }

    /// Rows selected by `idx` (repeats allowed).
    pub fn gather(&self, idx: &[usize]) -> Predictions {
        Predictions {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            scores: idx.iter().map(|&i| self.scores[i].clone()).collect(),
            predicted: idx.iter().map(|&i| self.predicted[i]).collect(),
            true_label: idx.iter().map(|&i| self.true_label[i]).collect(),
        }
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax. Rows that are entirely `-inf` become uniform.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![1.0 / logits.len() as f64; logits.len()];
    }
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
