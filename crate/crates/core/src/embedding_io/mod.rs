//! Embedding interchange files and the run manifest.
//!
//! Two encodings carry the same logical [`EmbeddingSet`]:
//!
//! * canonical line-delimited JSON (`.feet.jsonl`): a header object on line 1,
//!   then one `{"id","label","vector"}` object per line;
//! * a binary variant (`.feet.bin`) starting with the magic `FEETEMB1`.
//!
//! Both store vectors as 32-bit floats, so a set converted between them loads
//! to bit-identical coordinates. The loader detects the encoding from the
//! first eight bytes, not from the file extension.

mod format;
mod manifest;

pub use format::{
    load_embedding_set, parse_binary, parse_canonical, save_embedding_set, write_binary,
    write_canonical, BINARY_MAGIC, FORMAT_NAME, FORMAT_VERSION,
};
pub use manifest::{
    validate_manifest, BootstrapSection, CellMapping, FewshotStrategy, FrozenHead, ProbeOverrides,
    RunManifest, ScheduleSection, SimilaritySection, SplitSection, TaskSpec,
};

use std::collections::BTreeMap;

use crate::{Finding, Regime};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub id: String,
    pub label: u32,
    pub vector: Vec<f32>,
}

/// Labeled vectors for one (model, task, regime[, shot]) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub model_id: String,
    pub task_id: String,
    pub regime: Regime,
    /// Present only for few-shot sets produced by per-shot adaptation.
    pub shot: Option<u32>,
    pub dim: usize,
    pub num_classes: u32,
    /// Free-form header keys (for example `pooling`), kept verbatim.
    pub metadata: BTreeMap<String, serde_json::Value>,
    pub records: Vec<EmbeddingRecord>,
}

impl EmbeddingSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.id.clone()).collect()
    }

    pub fn labels(&self) -> Vec<u32> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// Id to record-index lookup.
    pub fn index_by_id(&self) -> BTreeMap<&str, usize> {
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.as_str(), i))
            .collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes as usize];
        for r in &self.records {
            counts[r.label as usize] += 1;
        }
        counts
    }

    /// One warning per declared class that has no example in the set.
    pub fn missing_class_findings(&self) -> Vec<Finding> {
        self.class_counts()
            .iter()
            .enumerate()
            .filter(|(_, &n)| n == 0)
            .map(|(class, _)| {
                Finding::warning(format!(
                    "{}/{}/{}: class {class} has no examples",
                    self.model_id, self.task_id, self.regime
                ))
            })
            .collect()
    }
}
