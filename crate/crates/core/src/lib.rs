//! `feet` evaluates labeled embedding sets under three regimes: frozen,
//! few-shot at power-of-two shot counts, and fine-tuned.
//!
//! The pipeline is
//!
//! 1. [`embedding_io`]: load and validate `.feet.jsonl` / `.feet.bin` files
//!    and the run manifest that maps cells to files.
//! 2. [`sampling`]: stratified train/val/test splits, the shot schedule and
//!    nested support sets, and per-cell seed derivation.
//! 3. [`probes`]: a softmax linear probe trained with AdamW, and a
//!    similarity classifier (nearest neighbor / nearest centroid).
//! 4. [`metrics`]: accuracy, precision, recall, F1, AUROC, AUPRC with
//!    percentile-bootstrap confidence intervals.
//! 5. [`deltas`]: differences against the frozen baseline with a paired
//!    bootstrap significance test.
//! 6. [`reporting`]: FEET and delta tables in Markdown, LaTeX, CSV and JSON.
//! 7. [`runner`]: expands a manifest into cells, executes them (optionally
//!    in parallel, resumable) and writes the run directory.

pub mod deltas;
pub mod embedding_io;
pub mod error;
pub mod metrics;
pub mod probes;
pub mod reporting;
pub mod runner;
pub mod sampling;
pub mod synthetic;

pub use error::{Error, Finding, Result, Severity};

/// Version string recorded in run state and result documents.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Evaluation regime of a cell.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Frozen,
    Fewshot,
    Finetuned,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Frozen => "frozen",
            Regime::Fewshot => "fewshot",
            Regime::Finetuned => "finetuned",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Regime {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "frozen" => Ok(Regime::Frozen),
            "fewshot" => Ok(Regime::Fewshot),
            "finetuned" => Ok(Regime::Finetuned),
            other => Err(format!("unknown regime `{other}`")),
        }
    }
}
