//! Differences against the frozen baseline, in percentage points, with a
//! paired bootstrap test.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::metrics::{quantile_sorted, resample_indices, BootstrapConfig, MetricEstimate, MetricKind, MetricSpec};
use crate::probes::Predictions;
use crate::{Error, Regime, Result};

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

/// `cell - frozen` on the 0-100 scale; `None` when either side is undefined.
pub fn compute_delta(cell: &MetricEstimate, frozen: &MetricEstimate) -> Result<Option<f64>> {
    if cell.name != frozen.name {
        return Err(Error::MetricMismatch {
            cell: cell.name.to_string(),
            frozen: frozen.name.to_string(),
        });
    }
    Ok(match (cell.point, frozen.point) {
        (Some(c), Some(f)) => Some(100.0 * (c - f)),
        _ => None,
    })
}

/// Outcome of [`paired_delta_test`]. Deltas and bounds are in percentage
/// points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDelta {
    pub delta: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub p_value: Option<f64>,
    pub significant: bool,
    pub dropped: u32,
}

/// Delta of one cell's metric against the frozen cell of the same model and
/// task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaResult {
    pub metric: MetricKind,
    pub regime: Regime,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shot: Option<u32>,
    pub delta: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub p_value: Option<f64>,
    pub significant: bool,
}

impl DeltaResult {
    pub fn new(metric: MetricKind, regime: Regime, shot: Option<u32>, test: PairedDelta) -> Self {
        DeltaResult {
            metric,
            regime,
            shot,
            delta: test.delta,
            ci_low: test.ci_low,
            ci_high: test.ci_high,
            p_value: test.p_value,
            significant: test.significant,
        }
    }
}

/// Reorders `frozen` to follow the id order of `cell`; fails unless both
/// cover exactly the same ids.
fn align(cell: &Predictions, frozen: &Predictions) -> Result<Predictions> {
    if cell.len() != frozen.len() {
        return Err(Error::IdMismatch);
    }
    let index: HashMap<&str, usize> = frozen
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    if index.len() != frozen.len() {
        return Err(Error::IdMismatch);
    }
    let order = cell
        .ids
        .iter()
        .map(|id| index.get(id.as_str()).copied().ok_or(Error::IdMismatch))
        .collect::<Result<Vec<_>>>()?;
    Ok(frozen.gather(&order))
}

/// Paired bootstrap: every replicate resamples the shared test examples once
/// and evaluates both prediction sets on that resample. The two-sided
/// p-value is `2 * min(P(d <= 0), P(d >= 0))` over replicate deltas `d`,
/// clamped to `[1/B', 1]` where `B'` counts replicates with a defined delta.
pub fn paired_delta_test(
    cell_preds: &Predictions,
    frozen_preds: &Predictions,
    spec: &MetricSpec,
    cfg: &BootstrapConfig,
) -> Result<PairedDelta> {
    if cell_preds.is_empty() {
        return Err(Error::EmptyPredictions);
    }
    let frozen = align(cell_preds, frozen_preds)?;
    let delta = match (spec.evaluate(cell_preds)?, spec.evaluate(&frozen)?) {
        (Some(c), Some(f)) => Some(100.0 * (c - f)),
        _ => None,
    };
    let undefined = PairedDelta {
        delta,
        ci_low: None,
        ci_high: None,
        p_value: None,
        significant: false,
        dropped: cfg.replicates,
    };
    if delta.is_none() {
        return Ok(undefined);
    }
    let n = cell_preds.len();
    let mut draws: Vec<f64> = (0..cfg.replicates)
        .filter_map(|b| {
            let idx = resample_indices(cfg.seed, b, n);
            let c = spec.evaluate_on(cell_preds, &idx)?;
            let f = spec.evaluate_on(&frozen, &idx)?;
            Some(100.0 * (c - f))
        })
        .collect();
    if draws.is_empty() {
        return Ok(undefined);
    }
    let m = draws.len() as f64;
    let le = draws.iter().filter(|&&d| d <= 0.0).count() as f64 / m;
    let ge = draws.iter().filter(|&&d| d >= 0.0).count() as f64 / m;
    let p_value = (2.0 * le.min(ge)).clamp(1.0 / m, 1.0);
    draws.sort_by(f64::total_cmp);
    Ok(PairedDelta {
        delta,
        ci_low: Some(quantile_sorted(&draws, 0.025)),
        ci_high: Some(quantile_sorted(&draws, 0.975)),
        p_value: Some(p_value),
        significant: p_value < SIGNIFICANCE_LEVEL,
        dropped: cfg.replicates - draws.len() as u32,
    })
}
