//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use feet::metrics::{BootstrapConfig, MetricEstimate, MetricKind};
use feet::reporting::CellResult;
use feet::Regime;

pub const SHOTS: [u32; 10] = [2, 4, 8, 16, 32, 64, 128, 256, 512, 1024];

/// One row of a reference FEET table (Frozen, 2..1024 shots, Fine-Tuned)
/// and the matching row of its delta table.
pub struct RefRow {
    pub model: &'static str,
    pub values: [f64; 12],
    pub half_widths: [f64; 12],
    pub deltas: [f64; 11],
}

pub const SST2_ACCURACY: [RefRow; 3] = [
    RefRow {
        model: "BERT",
        values: [47.50, 52.75, 51.25, 53.50, 49.50, 52.50, 59.00, 78.50, 85.75, 80.50, 82.00, 86.00],
        half_widths: [0.01, 0.14, 0.21, 0.18, 0.11, 0.27, 0.23, 0.19, 0.09, 0.14, 0.12, 0.13],
        deltas: [5.25, 3.75, 6.00, 2.00, 5.00, 11.50, 31.00, 38.25, 33.00, 34.50, 38.50],
    },
    RefRow {
        model: "DistilBERT",
        values: [47.75, 53.75, 52.25, 52.50, 52.50, 52.50, 52.50, 65.50, 83.00, 80.75, 85.25, 85.50],
        half_widths: [0.02, 0.17, 0.30, 0.28, 0.28, 0.29, 0.28, 0.20, 0.07, 0.02, 0.12, 0.10],
        deltas: [6.00, 4.50, 4.75, 4.75, 4.75, 4.75, 17.75, 35.25, 33.00, 37.50, 37.75],
    },
    RefRow {
        model: "GPT2",
        values: [47.75, 53.00, 49.50, 49.50, 48.25, 49.25, 48.75, 50.50, 53.00, 55.50, 75.75, 80.00],
        half_widths: [0.04, 0.28, 0.23, 0.15, 0.29, 0.11, 0.17, 0.16, 0.11, 0.05, 0.11, 0.04],
        deltas: [5.25, 1.75, 1.75, 0.50, 1.50, 1.00, 2.75, 5.25, 7.75, 28.00, 32.25],
    },
];

pub const SST2_RECALL: [RefRow; 3] = [
    RefRow {
        model: "BERT",
        values: [47.50, 52.75, 51.25, 53.50, 49.50, 52.50, 59.00, 78.50, 85.75, 80.50, 82.00, 86.00],
        half_widths: [0.01, 0.14, 0.21, 0.19, 0.10, 0.28, 0.24, 0.18, 0.09, 0.14, 0.12, 0.13],
        deltas: [5.25, 3.75, 6.00, 2.00, 5.00, 11.50, 31.00, 38.25, 33.00, 34.50, 38.50],
    },
    RefRow {
        model: "DistilBERT",
        values: [47.75, 53.75, 52.25, 52.50, 52.50, 52.50, 52.50, 65.50, 83.00, 80.75, 85.25, 85.50],
        half_widths: [0.02, 0.17, 0.30, 0.28, 0.28, 0.28, 0.28, 0.20, 0.07, 0.03, 0.12, 0.10],
        deltas: [6.00, 4.50, 4.75, 4.75, 4.75, 4.75, 17.75, 35.25, 33.00, 37.50, 37.75],
    },
    RefRow {
        model: "GPT2",
        values: [47.75, 53.00, 49.50, 49.50, 48.25, 49.25, 48.75, 50.50, 53.00, 55.50, 75.75, 80.00],
        half_widths: [0.03, 0.27, 0.24, 0.14, 0.29, 0.11, 0.17, 0.17, 0.12, 0.05, 0.11, 0.04],
        deltas: [5.25, 1.75, 1.75, 0.50, 1.50, 1.00, 2.75, 5.25, 7.75, 28.00, 32.25],
    },
];

pub const CLINDAMYCIN_AUROC: [RefRow; 3] = [
    RefRow {
        model: "BioClinicalBERT",
        values: [74.99, 53.88, 54.69, 56.73, 53.87, 56.67, 56.84, 56.88, 57.12, 58.72, 59.55, 67.59],
        half_widths: [3.86, 2.89, 2.99, 2.97, 2.88, 2.79, 2.96, 3.01, 3.13, 2.88, 3.00, 2.65],
        deltas: [-21.11, -20.30, -18.26, -21.12, -18.32, -18.15, -18.11, -17.87, -16.27, -15.44, -7.40],
    },
    RefRow {
        model: "MedBERT",
        values: [74.22, 54.28, 55.49, 55.39, 54.35, 56.24, 57.27, 57.56, 58.32, 59.28, 60.86, 69.35],
        half_widths: [3.74, 3.67, 2.85, 2.47, 3.63, 2.59, 3.49, 2.97, 2.78, 3.23, 2.97, 2.99],
        deltas: [-19.94, -18.73, -18.83, -19.87, -17.98, -16.95, -16.66, -15.90, -14.94, -13.36, -4.87],
    },
    RefRow {
        model: "SciBERT",
        values: [73.98, 54.18, 51.60, 52.77, 50.11, 52.18, 54.10, 56.41, 56.92, 56.60, 58.88, 68.31],
        half_widths: [3.21, 3.05, 2.86, 2.94, 2.67, 3.26, 3.20, 2.88, 3.17, 3.11, 3.21, 2.88],
        deltas: [-19.80, -22.38, -21.21, -23.87, -21.80, -19.88, -17.57, -17.06, -17.38, -15.10, -5.67],
    },
];

/// Column `j` of a reference row as (regime, shot).
pub fn column(j: usize) -> (Regime, Option<u32>) {
    match j {
        0 => (Regime::Frozen, None),
        11 => (Regime::Finetuned, None),
        j => (Regime::Fewshot, Some(SHOTS[j - 1])),
    }
}

/// Cell results carrying the reference values (rescaled to `[0, 1]`).
pub fn reference_cells(rows: &[RefRow], metric: MetricKind, task: &str) -> Vec<CellResult> {
    let mut cells = Vec::new();
    for row in rows {
        for j in 0..12 {
            let (regime, shot) = column(j);
            let mut est = MetricEstimate::point_only(
                metric,
                Some(row.values[j] / 100.0),
                0,
                &BootstrapConfig::default(),
            );
            est.half_width = Some(row.half_widths[j] / 100.0);
            cells.push(CellResult {
                model_id: row.model.to_string(),
                task_id: task.to_string(),
                regime,
                shot,
                replicate: 0,
                metrics: vec![est],
                deltas: Vec::new(),
                findings: Vec::new(),
            });
        }
    }
    cells
}

/// AUROC by counting every positive/negative pair, ties counting one half.
pub fn brute_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Average precision by a literal scan: repeatedly take the highest
/// remaining score (earliest index on ties) and record precision at every
/// positive.
pub fn literal_average_precision(scores: &[f64], labels: &[bool]) -> f64 {
    let n = scores.len();
    let mut used = vec![false; n];
    let (mut tp, mut seen, mut sum) = (0.0, 0.0, 0.0);
    for _ in 0..n {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if !used[i] && best.is_none_or(|b| scores[i] > scores[b]) {
                best = Some(i);
            }
        }
        let i = best.unwrap();
        used[i] = true;
        seen += 1.0;
        if labels[i] {
            tp += 1.0;
            sum += tp / seen;
        }
    }
    sum / tp
}

/// Mean softmax cross-entropy of a linear model, written out directly.
pub fn naive_loss(weights: &[f64], bias: &[f64], dim: usize, xs: &[Vec<f32>], ys: &[u32]) -> f64 {
    let c = bias.len();
    let mut total = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let logits: Vec<f64> = (0..c)
            .map(|k| {
                let mut z = bias[k];
                for d in 0..dim {
                    z += weights[k * dim + d] * f64::from(x[d]);
                }
                z
            })
            .collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
        total += lse - logits[y as usize];
    }
    total / xs.len() as f64
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Nearest-centroid (Euclidean) labels, computed directly.
pub fn nearest_centroid_labels(
    train: &[Vec<f32>],
    train_labels: &[u32],
    num_classes: usize,
    queries: &[Vec<f32>],
) -> Vec<u32> {
    let dim = train[0].len();
    let mut sums = vec![vec![0.0f64; dim]; num_classes];
    let mut counts = vec![0usize; num_classes];
    for (x, &y) in train.iter().zip(train_labels) {
        counts[y as usize] += 1;
        for d in 0..dim {
            sums[y as usize][d] += f64::from(x[d]);
        }
    }
    queries
        .iter()
        .map(|q| {
            let mut best = (f64::INFINITY, 0u32);
            for c in 0..num_classes {
                if counts[c] == 0 {
                    continue;
                }
                let dist: f64 = (0..dim)
                    .map(|d| (f64::from(q[d]) - sums[c][d] / counts[c] as f64).powi(2))
                    .sum();
                if dist < best.0 {
                    best = (dist, c as u32);
                }
            }
            best.1
        })
        .collect()
}
