//! Support-set similarity classification: each query takes the label whose
//! support examples (or class centroid) are most similar to it.

use serde::{Deserialize, Serialize};

use super::{softmax, Dataset, Predictions};
use crate::{Error, Finding, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMode {
    #[default]
    NearestNeighbor,
    NearestCentroid,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMeasure {
    #[default]
    Cosine,
    NegEuclidean,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Similarity of `a` and `b`; `None` when cosine is undefined (zero vector).
fn similarity(measure: SimilarityMeasure, a: &[f64], b: &[f64], na: f64, nb: f64) -> Option<f64> {
    match measure {
        SimilarityMeasure::Cosine => {
            if na == 0.0 || nb == 0.0 {
                return None;
            }
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            Some(dot / (na * nb))
        }
        SimilarityMeasure::NegEuclidean => {
            let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            Some(-sq.sqrt())
        }
    }
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| f64::from(x)).collect()
}

/// Classifies `queries` against `support`.
///
/// Per-class scores are the maximum similarity to that class's support
/// examples (`NearestNeighbor`) or the similarity to the class mean
/// (`NearestCentroid`); classes without support examples, and pairs
/// involving a zero vector under cosine, score `-inf`. Scores are turned
/// into probabilities with a softmax; the prediction is the highest-scoring
/// class, lowest index on ties.
pub fn classify_similarity(
    support: &Dataset,
    queries: &Dataset,
    mode: SimilarityMode,
    measure: SimilarityMeasure,
) -> Result<(Predictions, Vec<Finding>)> {
    if support.is_empty() {
        return Err(Error::InvalidProbeInput("support set is empty".into()));
    }
    if queries.dim != support.dim {
        return Err(Error::QueryDimMismatch {
            expected: support.dim,
            found: queries.dim,
        });
    }
    let num_classes = support.num_classes.max(queries.num_classes) as usize;

    // reference points: (class, vector)
    let refs: Vec<(usize, Vec<f64>)> = match mode {
        SimilarityMode::NearestNeighbor => support
            .features
            .iter()
            .zip(&support.labels)
            .map(|(x, &y)| (y as usize, widen(x)))
            .collect(),
        SimilarityMode::NearestCentroid => {
            let mut sums = vec![vec![0.0; support.dim]; num_classes];
            let mut counts = vec![0usize; num_classes];
            for (x, &y) in support.features.iter().zip(&support.labels) {
                counts[y as usize] += 1;
                for (s, &v) in sums[y as usize].iter_mut().zip(x) {
                    *s += f64::from(v);
                }
            }
            sums.into_iter()
                .zip(counts)
                .enumerate()
                .filter(|(_, (_, n))| *n > 0)
                .map(|(c, (s, n))| (c, s.into_iter().map(|v| v / n as f64).collect()))
                .collect()
        }
    };
    let ref_norms: Vec<f64> = refs.iter().map(|(_, v)| norm(v)).collect();

    let mut undefined_pairs = 0usize;
    let mut scores = Vec::with_capacity(queries.len());
    let mut predicted = Vec::with_capacity(queries.len());
    for q in &queries.features {
        let q = widen(q);
        let nq = norm(&q);
        let mut class_sim = vec![f64::NEG_INFINITY; num_classes];
        for ((c, r), &nr) in refs.iter().zip(&ref_norms) {
            match similarity(measure, &q, r, nq, nr) {
                Some(s) => {
                    if s > class_sim[*c] {
                        class_sim[*c] = s;
                    }
                }
                None => undefined_pairs += 1,
            }
        }
        let mut best = 0;
        for c in 1..num_classes {
            if class_sim[c] > class_sim[best] {
                best = c;
            }
        }
        predicted.push(best as u32);
        scores.push(softmax(&class_sim));
    }

    let mut findings = Vec::new();
    if undefined_pairs > 0 {
        findings.push(Finding::warning(format!(
            "{undefined_pairs} query/support pair(s) involve a zero vector; cosine similarity set to -inf"
        )));
    }
    Ok((
        Predictions {
            ids: queries.ids.clone(),
            scores,
            predicted,
            true_label: queries.labels.clone(),
        },
        findings,
    ))
}
