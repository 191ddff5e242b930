use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{load_embedding_set, EmbeddingSet};
use crate::metrics::{Averaging, MetricKind};
use crate::probes::{ProbeConfig, SimilarityMeasure, SimilarityMode};
use crate::{Error, Finding, Regime, Result};

/// A run manifest, parsed from TOML. Relative cell paths resolve against the
/// manifest's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub run_id: String,
    pub master_seed: u64,
    pub models: Vec<String>,
    pub tasks: Vec<TaskSpec>,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub bootstrap: BootstrapSection,
    /// Support-set draws per few-shot cell.
    #[serde(default = "default_replicates")]
    pub replicates: u32,
    #[serde(default)]
    pub frozen_head: FrozenHead,
    #[serde(default)]
    pub fewshot_strategy: FewshotStrategy,
    #[serde(default)]
    pub similarity: SimilaritySection,
    #[serde(default)]
    pub probe: ProbeOverrides,
    /// Applied on top of `probe` for the fine-tuned regime only.
    #[serde(default)]
    pub finetuned_probe: ProbeOverrides,
    #[serde(default)]
    pub cells: Vec<CellMapping>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_replicates() -> u32 {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub task_id: String,
    pub metrics: Vec<MetricKind>,
    /// Positive class for AUROC/AUPRC and binary averaging.
    #[serde(default = "default_positive_class")]
    pub positive_class: u32,
    #[serde(default)]
    pub averaging: AveragingName,
}

fn default_positive_class() -> u32 {
    1
}

impl TaskSpec {
    pub fn averaging(&self) -> Averaging {
        match self.averaging {
            AveragingName::Macro => Averaging::Macro,
            AveragingName::Micro => Averaging::Micro,
            AveragingName::Binary => Averaging::Binary(self.positive_class),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AveragingName {
    #[default]
    Macro,
    Micro,
    Binary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub max_exponent: u32,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        ScheduleSection { max_exponent: 10 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub train_fraction: f64,
    pub val_fraction_of_train: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            train_fraction: 0.70,
            val_fraction_of_train: 0.10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSection {
    pub replicates: u32,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        BootstrapSection { replicates: 1000 }
    }
}

/// Classifier used for the frozen regime.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrozenHead {
    /// Linear probe trained on the full training split.
    #[default]
    Probe,
    /// Linear head at its seeded initialization, never trained.
    Untrained,
    /// Similarity classifier over the full training split.
    Similarity,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FewshotStrategy {
    #[default]
    Probe,
    Similarity,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimilaritySection {
    #[serde(default)]
    pub mode: SimilarityMode,
    #[serde(default)]
    pub measure: SimilarityMeasure,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeOverrides {
    pub learning_rate: Option<f64>,
    pub max_epochs: Option<usize>,
    pub patience_epochs: Option<usize>,
    pub checkpoint_every_minibatches: Option<usize>,
    pub minibatch_size: Option<usize>,
    pub weight_decay: Option<f64>,
    pub early_stopping: Option<bool>,
}

impl ProbeOverrides {
    pub fn apply(&self, mut cfg: ProbeConfig) -> ProbeConfig {
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.max_epochs {
            cfg.max_epochs = v;
        }
        if let Some(v) = self.patience_epochs {
            cfg.patience_epochs = v;
        }
        if let Some(v) = self.checkpoint_every_minibatches {
            cfg.checkpoint_every_minibatches = v;
        }
        if let Some(v) = self.minibatch_size {
            cfg.minibatch_size = v;
        }
        if let Some(v) = self.weight_decay {
            cfg.weight_decay = v;
        }
        if let Some(v) = self.early_stopping {
            cfg.early_stopping = v;
        }
        cfg
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellMapping {
    pub model: String,
    pub task: String,
    pub regime: Regime,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shot: Option<u32>,
    pub path: PathBuf,
}

impl RunManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest = Self::parse(&text)?;
        manifest.base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(manifest)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Manifest(e.to_string()))
    }

    pub fn task(&self, task_id: &str) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }

    pub fn probe_config(&self, regime: Regime) -> ProbeConfig {
        let cfg = self.probe.apply(ProbeConfig::default());
        match regime {
            Regime::Finetuned => self.finetuned_probe.apply(cfg),
            _ => cfg,
        }
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// The explicitly mapped file for a cell, if any.
    pub fn mapped_path(
        &self,
        model: &str,
        task: &str,
        regime: Regime,
        shot: Option<u32>,
    ) -> Option<PathBuf> {
        self.cells
            .iter()
            .find(|c| c.model == model && c.task == task && c.regime == regime && c.shot == shot)
            .map(|c| self.resolve(&c.path))
    }

    /// The file backing a cell. Few-shot cells without a per-shot mapping
    /// fall back to the frozen file.
    pub fn cell_path(
        &self,
        model: &str,
        task: &str,
        regime: Regime,
        shot: Option<u32>,
    ) -> Option<PathBuf> {
        match regime {
            Regime::Fewshot => self
                .mapped_path(model, task, regime, shot)
                .or_else(|| self.mapped_path(model, task, Regime::Frozen, None)),
            _ => self.mapped_path(model, task, regime, None),
        }
    }
}

type LoadedCell = (Regime, Option<u32>, EmbeddingSet);

/// Checks the manifest structure and loads every referenced file.
///
/// Errors block a run; warnings do not.
pub fn validate_manifest(manifest: &RunManifest) -> Vec<Finding> {
    let mut findings = Vec::new();
    let mut err = |msg: String| findings.push(Finding::error(msg));

    if manifest.models.is_empty() {
        err("no models listed".into());
    }
    if manifest.tasks.is_empty() {
        err("no tasks listed".into());
    }
    let split = &manifest.split;
    if !(split.train_fraction > 0.0 && split.train_fraction < 1.0) {
        err(format!(
            "train_fraction {} must lie in (0, 1)",
            split.train_fraction
        ));
    }
    if !(split.val_fraction_of_train >= 0.0 && split.val_fraction_of_train < 1.0) {
        err(format!(
            "val_fraction_of_train {} must lie in [0, 1)",
            split.val_fraction_of_train
        ));
    }
    if manifest.bootstrap.replicates < 1 {
        err("bootstrap replicates must be at least 1".into());
    }
    if manifest.replicates < 1 {
        err("replicates must be at least 1".into());
    }
    if manifest.schedule.max_exponent < 1 || manifest.schedule.max_exponent > 30 {
        err(format!(
            "schedule max_exponent {} must lie in 1..=30",
            manifest.schedule.max_exponent
        ));
    }
    for regime in [Regime::Frozen, Regime::Fewshot, Regime::Finetuned] {
        if let Err(e) = manifest.probe_config(regime).validate() {
            err(format!("{regime} probe config: {e}"));
        }
    }
    let models: BTreeSet<&str> = manifest.models.iter().map(String::as_str).collect();
    if models.len() != manifest.models.len() {
        err("duplicate model ids".into());
    }
    let tasks: BTreeSet<&str> = manifest.tasks.iter().map(|t| t.task_id.as_str()).collect();
    if tasks.len() != manifest.tasks.len() {
        err("duplicate task ids".into());
    }
    for t in &manifest.tasks {
        if t.metrics.is_empty() {
            err(format!("task `{}` lists no metrics", t.task_id));
        }
    }

    let mut seen = BTreeSet::new();
    for c in &manifest.cells {
        if !models.contains(c.model.as_str()) {
            err(format!("cell references unknown model `{}`", c.model));
        }
        if !tasks.contains(c.task.as_str()) {
            err(format!("cell references unknown task `{}`", c.task));
        }
        if (c.regime == Regime::Fewshot) != c.shot.is_some() {
            err(format!(
                "{}/{}/{}: shot must be given exactly for fewshot cells",
                c.model, c.task, c.regime
            ));
        }
        if !seen.insert((&c.model, &c.task, c.regime, c.shot)) {
            err(format!(
                "{}/{}/{}: mapped more than once",
                c.model, c.task, c.regime
            ));
        }
    }

    // Load every referenced file once.
    let mut loaded: BTreeMap<(String, String), Vec<LoadedCell>> = BTreeMap::new();
    for c in &manifest.cells {
        let path = manifest.resolve(&c.path);
        match load_embedding_set(&path) {
            Ok(set) => {
                if set.regime != c.regime {
                    findings.push(Finding::error(format!(
                        "{}: header regime `{}` but mapped as `{}`",
                        path.display(),
                        set.regime,
                        c.regime
                    )));
                }
                if set.model_id != c.model || set.task_id != c.task {
                    findings.push(Finding::warning(format!(
                        "{}: header names {}/{} but mapped to {}/{}",
                        path.display(),
                        set.model_id,
                        set.task_id,
                        c.model,
                        c.task
                    )));
                }
                findings.extend(set.missing_class_findings());
                loaded
                    .entry((c.model.clone(), c.task.clone()))
                    .or_default()
                    .push((c.regime, c.shot, set));
            }
            Err(e) => findings.push(Finding::error(format!("cannot load cell file: {e}"))),
        }
    }

    for model in &manifest.models {
        for task in &manifest.tasks {
            let key = (model.clone(), task.task_id.clone());
            let has = |r: Regime| {
                manifest
                    .cells
                    .iter()
                    .any(|c| c.model == *model && c.task == task.task_id && c.regime == r)
            };
            if !has(Regime::Frozen) {
                findings.push(Finding::error(format!(
                    "{model}/{}: no frozen cell",
                    task.task_id
                )));
            }
            if !has(Regime::Finetuned) {
                findings.push(Finding::warning(format!(
                    "{model}/{}: no finetuned cell; finetuned column will be empty",
                    task.task_id
                )));
            }
            let Some(sets) = loaded.get(&key) else {
                continue;
            };
            if let Some((_, _, frozen)) = sets.iter().find(|(r, _, _)| *r == Regime::Frozen) {
                for (regime, shot, set) in sets {
                    if set.dim != frozen.dim {
                        findings.push(Finding::warning(format!(
                            "{model}/{}: dim differs across regimes ({} frozen vs {} {regime}{})",
                            task.task_id,
                            frozen.dim,
                            set.dim,
                            shot.map(|s| format!(" {s}-shot")).unwrap_or_default()
                        )));
                    }
                }
            }
        }
    }

    for task in &manifest.tasks {
        let classes: BTreeSet<u32> = loaded
            .iter()
            .filter(|((_, t), _)| *t == task.task_id)
            .flat_map(|(_, sets)| sets.iter().map(|(_, _, s)| s.num_classes))
            .collect();
        if classes.len() > 1 {
            findings.push(Finding::error(format!(
                "task `{}`: num_classes disagree across cells ({classes:?})",
                task.task_id
            )));
        }
        if let Some(&nc) = classes.iter().next() {
            if task.positive_class >= nc {
                findings.push(Finding::error(format!(
                    "task `{}`: positive_class {} is not below num_classes {nc}",
                    task.task_id, task.positive_class
                )));
            }
        }
    }
    findings
}
