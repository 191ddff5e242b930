//! Classification metrics and percentile-bootstrap confidence intervals.
//!
//! All point values live on the `[0, 1]` scale; tables multiply by 100.
//! A metric that cannot be computed on a sample (AUROC with one class,
//! AUPRC without positives) is *undefined* and carried as `None`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::probes::Predictions;
use crate::{Error, Finding, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Accuracy,
    Precision,
    Recall,
    F1,
    Auroc,
    Auprc,
}

impl MetricKind {
    pub const ALL: [MetricKind; 6] = [
        MetricKind::Accuracy,
        MetricKind::Precision,
        MetricKind::Recall,
        MetricKind::F1,
        MetricKind::Auroc,
        MetricKind::Auprc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Accuracy => "accuracy",
            MetricKind::Precision => "precision",
            MetricKind::Recall => "recall",
            MetricKind::F1 => "f1",
            MetricKind::Auroc => "auroc",
            MetricKind::Auprc => "auprc",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            MetricKind::Accuracy => "Accuracy",
            MetricKind::Precision => "Precision",
            MetricKind::Recall => "Recall",
            MetricKind::F1 => "F1 Score",
            MetricKind::Auroc => "AUROC",
            MetricKind::Auprc => "AUPRC",
        }
    }

    /// Orientation used for bolding the best cell of a column.
    pub fn higher_is_better(self) -> bool {
        true
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricKind::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::UnknownMetric(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    Macro,
    Micro,
    /// Precision/recall/F1 of the given positive class.
    Binary(u32),
}

/// A metric together with the settings needed to evaluate it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub kind: MetricKind,
    pub averaging: Averaging,
    pub pos_class: u32,
}

impl MetricSpec {
    pub fn new(kind: MetricKind, averaging: Averaging, pos_class: u32) -> Self {
        MetricSpec {
            kind,
            averaging,
            pos_class,
        }
    }

    /// Value on the whole prediction set; `Ok(None)` when undefined.
    pub fn evaluate(&self, preds: &Predictions) -> Result<Option<f64>> {
        if preds.is_empty() {
            return Err(Error::EmptyPredictions);
        }
        let idx: Vec<usize> = (0..preds.len()).collect();
        Ok(self.evaluate_on(preds, &idx))
    }

    /// Value on the rows `idx` of `preds` (repeats allowed). `idx` must be
    /// non-empty.
    pub fn evaluate_on(&self, preds: &Predictions, idx: &[usize]) -> Option<f64> {
        match self.kind {
            MetricKind::Auroc | MetricKind::Auprc => {
                let pos = self.pos_class as usize;
                let scores: Vec<f64> = idx.iter().map(|&i| preds.scores[i][pos]).collect();
                let labels: Vec<bool> = idx
                    .iter()
                    .map(|&i| preds.true_label[i] == self.pos_class)
                    .collect();
                if self.kind == MetricKind::Auroc {
                    auroc(&scores, &labels).ok()
                } else {
                    auprc(&scores, &labels).ok()
                }
            }
            kind => {
                let c = Confusion::tally(preds, idx);
                let m = c.metrics(self.averaging);
                Some(match kind {
                    MetricKind::Accuracy => m.accuracy,
                    MetricKind::Precision => m.precision,
                    MetricKind::Recall => m.recall,
                    _ => m.f1,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

struct Confusion {
    n: usize,
    correct: usize,
    tp: Vec<usize>,
    fp: Vec<usize>,
    fn_: Vec<usize>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl Confusion {
    fn tally(preds: &Predictions, idx: &[usize]) -> Self {
        let max_label = idx
            .iter()
            .map(|&i| preds.true_label[i].max(preds.predicted[i]) as usize + 1)
            .max()
            .unwrap_or(0);
        let classes = preds.num_classes().max(max_label);
        let mut c = Confusion {
            n: idx.len(),
            correct: 0,
            tp: vec![0; classes],
            fp: vec![0; classes],
            fn_: vec![0; classes],
        };
        for &i in idx {
            let (p, t) = (preds.predicted[i] as usize, preds.true_label[i] as usize);
            if p == t {
                c.correct += 1;
                c.tp[p] += 1;
            } else {
                c.fp[p] += 1;
                c.fn_[t] += 1;
            }
        }
        c
    }

    fn class_prf(&self, k: usize) -> (f64, f64, f64) {
        let (tp, fp, fn_) = (
            self.tp.get(k).copied().unwrap_or(0),
            self.fp.get(k).copied().unwrap_or(0),
            self.fn_.get(k).copied().unwrap_or(0),
        );
        let p = ratio(tp, tp + fp);
        let r = ratio(tp, tp + fn_);
        (p, r, harmonic(p, r))
    }

    fn metrics(&self, averaging: Averaging) -> ConfusionMetrics {
        let accuracy = ratio(self.correct, self.n);
        let (precision, recall, f1) = match averaging {
            Averaging::Micro => (accuracy, accuracy, accuracy),
            Averaging::Binary(pos) => self.class_prf(pos as usize),
            Averaging::Macro => {
                let k = self.tp.len().max(1) as f64;
                let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
                for c in 0..self.tp.len() {
                    let (cp, cr, cf) = self.class_prf(c);
                    p += cp;
                    r += cr;
                    f += cf;
                }
                (p / k, r / k, f / k)
            }
        };
        ConfusionMetrics {
            accuracy,
            precision,
            recall,
            f1,
        }
    }
}

/// Accuracy and averaged precision/recall/F1. A class with no predicted
/// positives gets precision 0 and a finding; F1 is 0 when P = R = 0.
pub fn confusion_metrics(
    preds: &Predictions,
    averaging: Averaging,
) -> Result<(ConfusionMetrics, Vec<Finding>)> {
    if preds.is_empty() {
        return Err(Error::EmptyPredictions);
    }
    let idx: Vec<usize> = (0..preds.len()).collect();
    let c = Confusion::tally(preds, &idx);
    let classes: Vec<usize> = match averaging {
        Averaging::Binary(pos) => vec![pos as usize],
        Averaging::Macro => (0..c.tp.len()).collect(),
        Averaging::Micro => vec![],
    };
    let findings = classes
        .into_iter()
        .filter(|&k| c.tp.get(k).copied().unwrap_or(0) + c.fp.get(k).copied().unwrap_or(0) == 0)
        .map(|k| Finding::warning(format!("class {k} is never predicted; its precision is set to 0")))
        .collect();
    Ok((c.metrics(averaging), findings))
}

/// Area under the ROC curve via the Mann-Whitney statistic with average
/// ranks for tied scores (a tied positive/negative pair counts one half).
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // 1-based ranks start+1..=end share their average
        let avg_rank = (start + 1 + end) as f64 / 2.0;
        let pos_in_group = order[start..end].iter().filter(|&&i| labels[i]).count();
        rank_sum_pos += avg_rank * pos_in_group as f64;
        start = end;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Average precision: the mean, over positives, of the precision at each
/// positive's rank in descending-score order. Tied scores keep input order.
pub fn auprc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return Err(Error::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / n_pos as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankMetrics {
    pub auroc: Option<f64>,
    pub auprc: Option<f64>,
}

/// One-vs-rest AUROC/AUPRC on the `pos_class` score column.
pub fn multiclass_rank_metrics(preds: &Predictions, pos_class: u32) -> Result<RankMetrics> {
    if preds.is_empty() {
        return Err(Error::EmptyPredictions);
    }
    if pos_class as usize >= preds.num_classes() {
        return Err(Error::InvalidProbeInput(format!(
            "positive class {pos_class} has no score column"
        )));
    }
    let scores: Vec<f64> = preds.scores.iter().map(|r| r[pos_class as usize]).collect();
    let labels: Vec<bool> = preds.true_label.iter().map(|&l| l == pos_class).collect();
    Ok(RankMetrics {
        auroc: auroc(&scores, &labels).ok(),
        auprc: auprc(&scores, &labels).ok(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: u32,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 1000,
            seed: 0,
        }
    }
}

/// Row indices of bootstrap replicate `b`: `n` draws with replacement from
/// a ChaCha8 stream keyed by `(seed, b)`, independent of evaluation order.
pub fn resample_indices(seed: u64, replicate: u32, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(replicate));
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Point value with a percentile-bootstrap 95% interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEstimate {
    pub name: MetricKind,
    pub point: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub half_width: Option<f64>,
    pub n: usize,
    pub replicates: u32,
    pub seed: u64,
    /// Resamples on which the metric was undefined.
    pub dropped: u32,
}

impl MetricEstimate {
    /// An estimate without an interval (e.g. when no resample is defined).
    pub fn point_only(name: MetricKind, point: Option<f64>, n: usize, cfg: &BootstrapConfig) -> Self {
        MetricEstimate {
            name,
            point,
            ci_low: None,
            ci_high: None,
            half_width: None,
            n,
            replicates: cfg.replicates,
            seed: cfg.seed,
            dropped: cfg.replicates,
        }
    }
}

pub fn bootstrap_ci(
    preds: &Predictions,
    spec: &MetricSpec,
    cfg: &BootstrapConfig,
) -> Result<MetricEstimate> {
    if cfg.replicates == 0 {
        return Err(Error::InvalidSampling("bootstrap needs at least one replicate".into()));
    }
    let point = spec.evaluate(preds)?;
    let n = preds.len();
    let mut values: Vec<f64> = (0..cfg.replicates)
        .filter_map(|b| spec.evaluate_on(preds, &resample_indices(cfg.seed, b, n)))
        .collect();
    if values.is_empty() {
        return Err(Error::AllResamplesUndefined);
    }
    let dropped = cfg.replicates - values.len() as u32;
    values.sort_by(f64::total_cmp);
    let lo = quantile_sorted(&values, 0.025);
    let hi = quantile_sorted(&values, 0.975);
    Ok(MetricEstimate {
        name: spec.kind,
        point,
        ci_low: Some(lo),
        ci_high: Some(hi),
        half_width: Some((hi - lo) / 2.0),
        n,
        replicates: cfg.replicates,
        seed: cfg.seed,
        dropped,
    })
}
