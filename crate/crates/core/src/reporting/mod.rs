//! FEET and delta tables.
//!
//! A table covers one (metric, task) pair: rows are models in order of first
//! appearance, columns are `Frozen`, one column per shot count present, and
//! `Fine-Tuned`. FEET cells show `point (half_width)` on the 0-100 scale;
//! the best value of each column is bolded, with every tie bolded. Delta
//! cells show the signed difference to the frozen cell of the same row.

mod render;

pub use render::{parse_delta_csv, parse_feet_csv, render_delta, render_feet, Format};

use serde::{Deserialize, Serialize};

use crate::deltas::{compute_delta, DeltaResult};
use crate::metrics::{MetricEstimate, MetricKind};
use crate::{Finding, Regime, Result};

pub const RESULTS_SCHEMA: &str = "results-v1";

/// All estimates of one executed cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub model_id: String,
    pub task_id: String,
    pub regime: Regime,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shot: Option<u32>,
    #[serde(default)]
    pub replicate: u32,
    pub metrics: Vec<MetricEstimate>,
    #[serde(default)]
    pub deltas: Vec<DeltaResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub findings: Vec<Finding>,
}

/// The `results.json` document of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsDocument {
    pub schema: String,
    pub run_id: String,
    pub manifest_hash: String,
    pub master_seed: u64,
    pub tool_version: String,
    pub cells: Vec<CellResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<CellFailure>,
}

/// A cell that could not be evaluated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFailure {
    pub key: String,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "shot")]
pub enum Column {
    Frozen,
    Shot(u32),
    Finetuned,
}

impl Column {
    pub fn of(regime: Regime, shot: Option<u32>) -> Option<Column> {
        match (regime, shot) {
            (Regime::Frozen, _) => Some(Column::Frozen),
            (Regime::Fewshot, Some(k)) => Some(Column::Shot(k)),
            (Regime::Fewshot, None) => None,
            (Regime::Finetuned, _) => Some(Column::Finetuned),
        }
    }

    pub fn label(self) -> String {
        match self {
            Column::Frozen => "Frozen".into(),
            Column::Shot(k) => format!("{k}-shot"),
            Column::Finetuned => "Fine-Tuned".into(),
        }
    }

    pub fn regime(self) -> Regime {
        match self {
            Column::Frozen => Regime::Frozen,
            Column::Shot(_) => Regime::Fewshot,
            Column::Finetuned => Regime::Finetuned,
        }
    }

    pub fn shot(self) -> Option<u32> {
        match self {
            Column::Shot(k) => Some(k),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeetCell {
    /// 0-100 scale.
    pub point: f64,
    pub half_width: Option<f64>,
    pub bold: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeetRow {
    pub model_id: String,
    pub cells: Vec<Option<FeetCell>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeetTable {
    pub metric: MetricKind,
    pub task_id: String,
    pub columns: Vec<Column>,
    pub rows: Vec<FeetRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaCell {
    /// Percentage points.
    pub delta: f64,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub p_value: Option<f64>,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub model_id: String,
    /// The frozen column is always `None`.
    pub cells: Vec<Option<DeltaCell>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaTable {
    pub metric: MetricKind,
    pub task_id: String,
    pub columns: Vec<Column>,
    pub rows: Vec<DeltaRow>,
}

/// Tables built from a set of cell results, plus findings such as missing
/// frozen baselines.
#[derive(Debug, Clone, Default)]
pub struct Tables {
    pub feet: Vec<FeetTable>,
    pub delta: Vec<DeltaTable>,
    pub findings: Vec<Finding>,
}

fn push_unique<T: PartialEq + Clone>(v: &mut Vec<T>, x: &T) {
    if !v.contains(x) {
        v.push(x.clone());
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Fixed two-decimal formatting without a negative zero.
pub fn fmt2(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

/// The printed value in hundredths, so bolding agrees with what is shown.
fn printed_hundredths(x: f64) -> i64 {
    fmt2(x).replace('.', "").parse().unwrap_or(i64::MIN)
}

/// Assembles FEET and delta tables for every (metric, task) present.
///
/// Replicates of a cell are averaged: points, half-widths, deltas, bounds
/// and p-values by their mean; a replicated delta is significant only if
/// every replicate is.
pub fn build_tables(results: &[CellResult]) -> Tables {
    let mut tasks: Vec<String> = Vec::new();
    for r in results {
        push_unique(&mut tasks, &r.task_id);
    }
    let mut tables = Tables::default();
    for task in &tasks {
        let in_task: Vec<&CellResult> = results.iter().filter(|r| &r.task_id == task).collect();
        let mut models: Vec<String> = Vec::new();
        let mut metrics: Vec<MetricKind> = Vec::new();
        let mut columns = vec![Column::Frozen, Column::Finetuned];
        for r in &in_task {
            push_unique(&mut models, &r.model_id);
            for m in &r.metrics {
                push_unique(&mut metrics, &m.name);
            }
            for d in &r.deltas {
                push_unique(&mut metrics, &d.metric);
            }
            if let Some(c) = Column::of(r.regime, r.shot) {
                push_unique(&mut columns, &c);
            }
        }
        columns.sort();

        let cells_of = |model: &str, col: Column| -> Vec<&CellResult> {
            in_task
                .iter()
                .copied()
                .filter(|r| r.model_id == model && Column::of(r.regime, r.shot) == Some(col))
                .collect()
        };

        for &metric in &metrics {
            let mut rows: Vec<FeetRow> = models
                .iter()
                .map(|model| FeetRow {
                    model_id: model.clone(),
                    cells: columns
                        .iter()
                        .map(|&col| {
                            let ests: Vec<&MetricEstimate> = cells_of(model, col)
                                .into_iter()
                                .flat_map(|r| r.metrics.iter().filter(|m| m.name == metric))
                                .collect();
                            let point = mean(ests.iter().filter_map(|e| e.point))?;
                            Some(FeetCell {
                                point: 100.0 * point,
                                half_width: mean(ests.iter().filter_map(|e| e.half_width))
                                    .map(|h| 100.0 * h),
                                bold: false,
                            })
                        })
                        .collect(),
                })
                .collect();
            for j in 0..columns.len() {
                let keys = rows
                    .iter()
                    .filter_map(|r| r.cells[j].as_ref())
                    .map(|c| printed_hundredths(c.point));
                let best = if metric.higher_is_better() {
                    keys.max()
                } else {
                    keys.min()
                };
                if let Some(best) = best {
                    for row in rows.iter_mut() {
                        if let Some(cell) = row.cells[j].as_mut() {
                            cell.bold = printed_hundredths(cell.point) == best;
                        }
                    }
                }
            }
            tables.feet.push(FeetTable {
                metric,
                task_id: task.clone(),
                columns: columns.clone(),
                rows,
            });

            let mut delta_rows = Vec::new();
            for model in &models {
                if cells_of(model, Column::Frozen).is_empty() {
                    tables.findings.push(Finding::warning(format!(
                        "no frozen baseline for model `{model}` on task `{task}`; {metric} delta row skipped"
                    )));
                    continue;
                }
                let cells = columns
                    .iter()
                    .map(|&col| {
                        if col == Column::Frozen {
                            return None;
                        }
                        let ds: Vec<&DeltaResult> = cells_of(model, col)
                            .into_iter()
                            .flat_map(|r| r.deltas.iter().filter(|d| d.metric == metric))
                            .collect();
                        let delta = mean(ds.iter().filter_map(|d| d.delta))?;
                        Some(DeltaCell {
                            delta,
                            ci_low: mean(ds.iter().filter_map(|d| d.ci_low)),
                            ci_high: mean(ds.iter().filter_map(|d| d.ci_high)),
                            p_value: mean(ds.iter().filter_map(|d| d.p_value)),
                            significant: ds.iter().all(|d| d.significant),
                        })
                    })
                    .collect();
                delta_rows.push(DeltaRow {
                    model_id: model.clone(),
                    cells,
                });
            }
            tables.delta.push(DeltaTable {
                metric,
                task_id: task.clone(),
                columns: columns.clone(),
                rows: delta_rows,
            });
        }
    }
    tables
}

/// Fills every non-frozen cell's deltas from point values alone, against
/// the frozen cell of the same model, task and replicate 0. Used for
/// tabulated results that come without predictions, so no interval or
/// p-value is attached.
pub fn with_point_deltas(results: &[CellResult]) -> Result<Vec<CellResult>> {
    let mut out = results.to_vec();
    for cell in out.iter_mut().filter(|c| c.regime != Regime::Frozen) {
        let Some(frozen) = results.iter().find(|f| {
            f.regime == Regime::Frozen
                && f.model_id == cell.model_id
                && f.task_id == cell.task_id
                && f.replicate == 0
        }) else {
            continue;
        };
        cell.deltas.clear();
        for est in &cell.metrics {
            let Some(base) = frozen.metrics.iter().find(|m| m.name == est.name) else {
                continue;
            };
            cell.deltas.push(DeltaResult {
                metric: est.name,
                regime: cell.regime,
                shot: cell.shot,
                delta: compute_delta(est, base)?,
                ci_low: None,
                ci_high: None,
                p_value: None,
                significant: false,
            });
        }
    }
    Ok(out)
}
