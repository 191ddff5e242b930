//! Expands a manifest into cells, executes them and writes the run
//! directory.
//!
//! ```text
//! <out>/manifest.toml          effective manifest (seed overrides applied)
//! <out>/run_state.json         per-cell status, manifest hash, timestamps
//! <out>/cells/<stem>.json      one CellResult per finished cell
//! <out>/predictions/<stem>.jsonl
//! <out>/logs/<stem>.jsonl      probe training log, one epoch per line
//! <out>/results.json           every CellResult in canonical order
//! <out>/report/<metric>.<task>.{feet,delta}.{md,tex,csv}
//! ```
//!
//! Every cell derives its randomness from `derive_cell_seed(master_seed,
//! key)` and runs single-threaded, so the output is a pure function of the
//! manifest, the embedding files and the master seed.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::deltas::{paired_delta_test, DeltaResult};
use crate::embedding_io::{
    load_embedding_set, validate_manifest, EmbeddingSet, FewshotStrategy, FrozenHead, RunManifest,
    TaskSpec,
};
use crate::metrics::{bootstrap_ci, BootstrapConfig, MetricEstimate, MetricSpec};
use crate::probes::{
    classify_similarity, initial_model, predict, train_probe, Dataset, EpochLog, Predictions,
};
use crate::reporting::{
    build_tables, render_delta, render_feet, CellFailure, CellResult, Format, ResultsDocument,
    RESULTS_SCHEMA,
};
use crate::sampling::{cell_key, derive_cell_seed, make_schedule, make_split, Split, SupportSampler};
use crate::{Error, Finding, Regime, Result, TOOL_VERSION};

/// One evaluation unit.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellSpec {
    pub model: String,
    pub task: String,
    pub regime: Regime,
    pub shot: Option<u32>,
    pub replicate: u32,
}

impl CellSpec {
    pub fn key(&self) -> String {
        cell_key(&self.model, &self.task, self.regime, self.shot, self.replicate)
    }

    /// File-system safe name, unique within a run.
    pub fn stem(&self, index: usize) -> String {
        let safe: String = self
            .key()
            .chars()
            .map(|c| match c {
                'a'..='z' | 'A'..='Z' | '0'..='9' | '-' | '_' => c,
                '|' => '.',
                _ => '_',
            })
            .collect();
        format!("{index:04}-{safe}")
    }
}

/// Cells in canonical order: model, task, regime, shot, replicate. The
/// few-shot schedule is `2^1..=2^max_exponent` for every (model, task).
pub fn expand_cells(manifest: &RunManifest) -> Vec<CellSpec> {
    let full: Vec<u32> = (1..=manifest.schedule.max_exponent).map(|e| 1u32 << e).collect();
    expand_cells_with(manifest, |_, _| full.clone())
}

/// Like [`expand_cells`] with a per-(model, task) schedule, e.g. one clipped
/// to the training split size.
pub fn expand_cells_with(
    manifest: &RunManifest,
    schedule: impl Fn(&str, &str) -> Vec<u32>,
) -> Vec<CellSpec> {
    let mut cells = Vec::new();
    for model in &manifest.models {
        for task in &manifest.tasks {
            let task = &task.task_id;
            let cell = |regime, shot, replicate| CellSpec {
                model: model.clone(),
                task: task.clone(),
                regime,
                shot,
                replicate,
            };
            cells.push(cell(Regime::Frozen, None, 0));
            for k in schedule(model, task) {
                for r in 0..manifest.replicates {
                    cells.push(cell(Regime::Fewshot, Some(k), r));
                }
            }
            if manifest
                .mapped_path(model, task, Regime::Finetuned, None)
                .is_some()
            {
                cells.push(cell(Regime::Finetuned, None, 0));
            }
        }
    }
    cells
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Pending,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellState {
    pub key: String,
    pub stem: String,
    pub status: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub run_id: String,
    pub manifest_hash: String,
    pub master_seed: u64,
    pub tool_version: String,
    /// Seconds since the Unix epoch.
    pub started_at: u64,
    pub finished_at: Option<u64>,
    pub cells: Vec<CellState>,
}

impl RunState {
    pub fn count(&self, status: CellStatus) -> usize {
        self.cells.iter().filter(|c| c.status == status).count()
    }

    pub fn load(run_dir: &Path) -> Result<Self> {
        read_json(&run_dir.join(STATE_FILE))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub parallelism: usize,
    pub resume: bool,
    /// Stop after executing this many cells, leaving the run resumable.
    pub max_cells: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            parallelism: 1,
            resume: false,
            max_cells: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: RunState,
    pub findings: Vec<Finding>,
    /// Cells executed by this invocation.
    pub executed: usize,
}

impl RunOutcome {
    pub fn finished(&self) -> bool {
        self.state.finished_at.is_some()
    }

    /// 0 on success, 1 if any cell failed.
    pub fn exit_code(&self) -> i32 {
        if self.state.count(CellStatus::Failed) > 0 {
            1
        } else {
            0
        }
    }
}

const STATE_FILE: &str = "run_state.json";
pub const RESULTS_FILE: &str = "results.json";

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Writes via a temporary file and rename so a crash never leaves a torn
/// file behind.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// SHA-256 over the effective manifest and the bytes of every mapped file.
pub fn manifest_hash(manifest: &RunManifest) -> Result<String> {
    let text = toml::to_string(manifest).map_err(|e| Error::Manifest(e.to_string()))?;
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    for c in &manifest.cells {
        let path = manifest.base_dir.join(&c.path);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// One line of a predictions file. `predicted` is optional on input and
/// defaults to the arg-max of `scores`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionLine {
    pub id: String,
    pub label: u32,
    pub scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<u32>,
}

pub fn write_predictions(path: &Path, preds: &Predictions) -> Result<()> {
    let mut out = Vec::new();
    for i in 0..preds.len() {
        serde_json::to_writer(
            &mut out,
            &PredictionLine {
                id: preds.ids[i].clone(),
                label: preds.true_label[i],
                scores: preds.scores[i].clone(),
                predicted: Some(preds.predicted[i]),
            },
        )?;
        out.push(b'\n');
    }
    write_atomic(path, &out)
}

pub fn read_predictions(path: &Path) -> Result<Predictions> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut preds = Predictions {
        ids: Vec::new(),
        scores: Vec::new(),
        predicted: Vec::new(),
        true_label: Vec::new(),
    };
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: PredictionLine = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
            path: path.to_path_buf(),
            line: i + 1,
            reason: e.to_string(),
        })?;
        let predicted = p
            .predicted
            .unwrap_or_else(|| crate::probes::argmax(&p.scores) as u32);
        preds.ids.push(p.id);
        preds.true_label.push(p.label);
        preds.scores.push(p.scores);
        preds.predicted.push(predicted);
    }
    Ok(preds)
}

type SetKey = (String, String, Regime, Option<u32>);

/// Everything shared by the cells of a run.
struct RunContext<'a> {
    manifest: &'a RunManifest,
    sets: HashMap<SetKey, Arc<EmbeddingSet>>,
    splits: HashMap<(String, String), std::result::Result<Split, String>>,
    samplers: HashMap<(String, String, u32), std::result::Result<SupportSampler, String>>,
}

impl<'a> RunContext<'a> {
    fn build(manifest: &'a RunManifest) -> Result<Self> {
        let mut by_path: HashMap<PathBuf, Arc<EmbeddingSet>> = HashMap::new();
        let mut sets = HashMap::new();
        for c in &manifest.cells {
            let path = manifest.base_dir.join(&c.path);
            let set = match by_path.get(&path) {
                Some(s) => s.clone(),
                None => {
                    let s = Arc::new(load_embedding_set(&path)?);
                    by_path.insert(path, s.clone());
                    s
                }
            };
            sets.insert((c.model.clone(), c.task.clone(), c.regime, c.shot), set);
        }
        let mut splits = HashMap::new();
        let mut samplers = HashMap::new();
        for model in &manifest.models {
            for task in &manifest.tasks {
                let t = &task.task_id;
                let key = (model.clone(), t.clone());
                let split = match sets.get(&(model.clone(), t.clone(), Regime::Frozen, None)) {
                    Some(set) => make_split(
                        &set.ids(),
                        &set.labels(),
                        set.num_classes,
                        manifest.split.train_fraction,
                        manifest.split.val_fraction_of_train,
                        derive_cell_seed(manifest.master_seed, &format!("{t}|split")),
                    )
                    .map_err(|e| e.to_string()),
                    None => Err(format!("no frozen embeddings for {model}/{t}")),
                };
                for r in 0..manifest.replicates {
                    let sampler = match (&split, sets.get(&(model.clone(), t.clone(), Regime::Frozen, None))) {
                        (Ok(split), Some(set)) => {
                            let labels: BTreeMap<String, u32> = set
                                .records
                                .iter()
                                .map(|rec| (rec.id.clone(), rec.label))
                                .collect();
                            // shared across models and shots so supports nest
                            let seed = derive_cell_seed(
                                manifest.master_seed,
                                &format!("*|{t}|fewshot|*|{r}"),
                            );
                            SupportSampler::new(split, &labels, set.num_classes, seed)
                                .map_err(|e| e.to_string())
                        }
                        (Err(e), _) => Err(e.clone()),
                        (_, None) => Err(format!("no frozen embeddings for {model}/{t}")),
                    };
                    samplers.insert((model.clone(), t.clone(), r), sampler);
                }
                splits.insert(key, split);
            }
        }
        Ok(RunContext {
            manifest,
            sets,
            splits,
            samplers,
        })
    }

    fn cells(&self) -> Vec<CellSpec> {
        let max_exp = self.manifest.schedule.max_exponent;
        expand_cells_with(self.manifest, |model, task| {
            let train = match self.splits.get(&(model.to_string(), task.to_string())) {
                Some(Ok(s)) => s.train_ids.len(),
                _ => usize::MAX,
            };
            make_schedule(max_exp, train)
                .sizes
                .into_iter()
                .map(|k| k as u32)
                .collect()
        })
    }

    fn set_for(&self, cell: &CellSpec) -> Result<Arc<EmbeddingSet>> {
        let get = |regime, shot| {
            self.sets
                .get(&(cell.model.clone(), cell.task.clone(), regime, shot))
                .cloned()
        };
        let set = match cell.regime {
            Regime::Fewshot => get(Regime::Fewshot, cell.shot).or_else(|| get(Regime::Frozen, None)),
            r => get(r, None),
        };
        set.ok_or_else(|| {
            Error::InvalidProbeInput(format!("no embeddings mapped for cell {}", cell.key()))
        })
    }

    fn task(&self, cell: &CellSpec) -> &TaskSpec {
        self.manifest
            .task(&cell.task)
            .expect("cells only reference manifest tasks")
    }

    fn split(&self, cell: &CellSpec) -> Result<&Split> {
        match self.splits.get(&(cell.model.clone(), cell.task.clone())) {
            Some(Ok(s)) => Ok(s),
            Some(Err(e)) => Err(Error::InvalidSampling(e.clone())),
            None => Err(Error::InvalidSampling("no split".into())),
        }
    }
}

struct CellOutput {
    result: CellResult,
    predictions: Predictions,
    log: Vec<EpochLog>,
}

/// Trains or fits the cell's classifier and predicts the test split.
fn classify(ctx: &RunContext, cell: &CellSpec, seed: u64) -> Result<(Predictions, Vec<EpochLog>, Vec<Finding>)> {
    let m = ctx.manifest;
    let set = ctx.set_for(cell)?;
    let split = ctx.split(cell)?;
    let test = Dataset::from_set(&set, &split.test_ids)?;
    let sim = m.similarity;
    let mut findings = Vec::new();

    let (train, val, similarity) = match cell.regime {
        Regime::Frozen => {
            let train = Dataset::from_set(&set, &split.train_ids)?;
            match m.frozen_head {
                FrozenHead::Probe => (train, Dataset::from_set(&set, &split.val_ids)?, false),
                FrozenHead::Similarity => (train, Dataset::empty(set.dim, set.num_classes), true),
                FrozenHead::Untrained => {
                    let model = initial_model(set.dim, set.num_classes as usize, seed);
                    return Ok((predict(&model, &test)?, Vec::new(), findings));
                }
            }
        }
        Regime::Fewshot => {
            let k = cell.shot.expect("few-shot cells carry a shot") as usize;
            let sampler = match ctx
                .samplers
                .get(&(cell.model.clone(), cell.task.clone(), cell.replicate))
            {
                Some(Ok(s)) => s,
                Some(Err(e)) => return Err(Error::InvalidSampling(e.clone())),
                None => return Err(Error::InvalidSampling("no sampler".into())),
            };
            let (support, f) = sampler.draw(k)?;
            findings.extend(f);
            let support = Dataset::from_set(&set, &support.ids)?;
            match m.fewshot_strategy {
                FewshotStrategy::Similarity => (support, Dataset::empty(set.dim, set.num_classes), true),
                // large supports hold out their last quarter for early stopping
                FewshotStrategy::Probe if k >= 64 => {
                    let cut = k - k / 4;
                    (support.subset(0..cut), support.subset(cut..k), false)
                }
                FewshotStrategy::Probe => (support, Dataset::empty(set.dim, set.num_classes), false),
            }
        }
        Regime::Finetuned => (
            Dataset::from_set(&set, &split.train_ids)?,
            Dataset::from_set(&set, &split.val_ids)?,
            false,
        ),
    };

    if similarity {
        let (preds, f) = classify_similarity(&train, &test, sim.mode, sim.measure)?;
        findings.extend(f);
        return Ok((preds, Vec::new(), findings));
    }
    let mut cfg = m.probe_config(cell.regime);
    cfg.seed = seed;
    let model = train_probe(&train, &val, &cfg)?;
    Ok((predict(&model, &test)?, model.training_log, findings))
}

fn run_cell(ctx: &RunContext, cell: &CellSpec, frozen: Option<&Predictions>) -> Result<CellOutput> {
    let m = ctx.manifest;
    let seed = derive_cell_seed(m.master_seed, &cell.key());
    let (predictions, log, mut findings) = classify(ctx, cell, seed)?;
    let task = ctx.task(cell);
    let boot = BootstrapConfig {
        replicates: m.bootstrap.replicates,
        seed: derive_cell_seed(seed, "bootstrap"),
    };
    let delta_boot = BootstrapConfig {
        replicates: m.bootstrap.replicates,
        seed: derive_cell_seed(seed, "delta"),
    };

    let mut metrics = Vec::new();
    let mut deltas = Vec::new();
    for &kind in &task.metrics {
        let spec = MetricSpec::new(kind, task.averaging(), task.positive_class);
        let estimate = match bootstrap_ci(&predictions, &spec, &boot) {
            Ok(e) => e,
            Err(Error::AllResamplesUndefined) => {
                findings.push(Finding::warning(format!(
                    "{kind}: undefined on every resample; no interval"
                )));
                MetricEstimate::point_only(kind, spec.evaluate(&predictions)?, predictions.len(), &boot)
            }
            Err(e) => return Err(e),
        };
        metrics.push(estimate);
        if cell.regime == Regime::Frozen {
            continue;
        }
        match frozen {
            Some(f) => match paired_delta_test(&predictions, f, &spec, &delta_boot) {
                Ok(t) => deltas.push(DeltaResult::new(kind, cell.regime, cell.shot, t)),
                Err(e) => findings.push(Finding::warning(format!("{kind} delta: {e}"))),
            },
            None => findings.push(Finding::warning(format!(
                "{kind} delta: {}",
                Error::NoFrozenBaseline {
                    model: cell.model.clone(),
                    task: cell.task.clone()
                }
            ))),
        }
    }
    findings.dedup();
    Ok(CellOutput {
        result: CellResult {
            model_id: cell.model.clone(),
            task_id: cell.task.clone(),
            regime: cell.regime,
            shot: cell.shot,
            replicate: cell.replicate,
            metrics,
            deltas,
            findings,
        },
        predictions,
        log,
    })
}

/// Mutable run bookkeeping; every write goes through one lock.
struct Ledger {
    dir: PathBuf,
    state: RunState,
    results: HashMap<String, CellResult>,
    frozen: HashMap<(String, String), Arc<Predictions>>,
}

impl Ledger {
    fn record(&mut self, index: usize, cell: &CellSpec, out: Result<CellOutput>) -> Result<()> {
        let stem = self.state.cells[index].stem.clone();
        match out {
            Ok(out) => {
                write_json(&self.dir.join("cells").join(format!("{stem}.json")), &out.result)?;
                write_predictions(
                    &self.dir.join("predictions").join(format!("{stem}.jsonl")),
                    &out.predictions,
                )?;
                let mut log = Vec::new();
                for e in &out.log {
                    serde_json::to_writer(&mut log, e)?;
                    log.push(b'\n');
                }
                write_atomic(&self.dir.join("logs").join(format!("{stem}.jsonl")), &log)?;
                if cell.regime == Regime::Frozen {
                    self.frozen.insert(
                        (cell.model.clone(), cell.task.clone()),
                        Arc::new(out.predictions),
                    );
                }
                self.results.insert(cell.key(), out.result);
                self.state.cells[index].status = CellStatus::Done;
                self.state.cells[index].error = None;
            }
            Err(e) => {
                self.state.cells[index].status = CellStatus::Failed;
                self.state.cells[index].error = Some(e.to_string());
            }
        }
        write_json(&self.dir.join(STATE_FILE), &self.state)
    }
}

fn prepare_dir(out_dir: &Path, resume: bool) -> Result<Option<RunState>> {
    let state_path = out_dir.join(STATE_FILE);
    if resume && state_path.exists() {
        return Ok(Some(read_json(&state_path)?));
    }
    if out_dir.exists() {
        let mut entries = fs::read_dir(out_dir).map_err(|e| Error::io(out_dir, e))?;
        if entries.next().is_some() {
            return Err(Error::RunDirNotEmpty(out_dir.to_path_buf()));
        }
    }
    Ok(None)
}

/// Executes (or resumes) a run. Validation errors refuse the run; cell
/// failures are recorded in the run state without stopping other cells.
pub fn execute_run(manifest: &RunManifest, out_dir: &Path, opts: &RunOptions) -> Result<RunOutcome> {
    let findings = validate_manifest(manifest);
    let errors = findings.iter().filter(|f| f.is_error()).count();
    if errors > 0 {
        return Err(Error::Validation(errors));
    }
    let hash = manifest_hash(manifest)?;
    let previous = prepare_dir(out_dir, opts.resume)?;
    if let Some(prev) = &previous {
        if prev.manifest_hash != hash {
            return Err(Error::ManifestDrift {
                recorded: prev.manifest_hash.clone(),
                current: hash,
            });
        }
        if prev.finished_at.is_some() {
            return Ok(RunOutcome {
                state: prev.clone(),
                findings,
                executed: 0,
            });
        }
    }

    let ctx = RunContext::build(manifest)?;
    let cells = ctx.cells();
    for sub in ["cells", "predictions", "logs", "report"] {
        let d = out_dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let manifest_copy = out_dir.join("manifest.toml");
    write_atomic(
        &manifest_copy,
        toml::to_string(manifest)
            .map_err(|e| Error::Manifest(e.to_string()))?
            .as_bytes(),
    )?;

    let mut state = RunState {
        run_id: manifest.run_id.clone(),
        manifest_hash: hash.clone(),
        master_seed: manifest.master_seed,
        tool_version: TOOL_VERSION.to_string(),
        started_at: now(),
        finished_at: None,
        cells: cells
            .iter()
            .enumerate()
            .map(|(i, c)| CellState {
                key: c.key(),
                stem: c.stem(i),
                status: CellStatus::Pending,
                error: None,
            })
            .collect(),
    };
    let mut results = HashMap::new();
    let mut frozen = HashMap::new();
    if let Some(prev) = previous {
        state.started_at = prev.started_at;
        let done: HashMap<&str, &CellState> = prev
            .cells
            .iter()
            .filter(|c| c.status == CellStatus::Done)
            .map(|c| (c.key.as_str(), c))
            .collect();
        for (i, cell) in cells.iter().enumerate() {
            let Some(old) = done.get(cell.key().as_str()) else {
                continue;
            };
            let result: CellResult =
                read_json(&out_dir.join("cells").join(format!("{}.json", old.stem)))?;
            if cell.regime == Regime::Frozen {
                let preds =
                    read_predictions(&out_dir.join("predictions").join(format!("{}.jsonl", old.stem)))?;
                frozen.insert((cell.model.clone(), cell.task.clone()), Arc::new(preds));
            }
            results.insert(cell.key(), result);
            state.cells[i].status = CellStatus::Done;
        }
    }
    write_json(&out_dir.join(STATE_FILE), &state)?;

    let mut pending: Vec<usize> = (0..cells.len())
        .filter(|&i| state.cells[i].status != CellStatus::Done)
        .collect();
    // frozen cells first: the others pair against their predictions
    pending.sort_by_key(|&i| (cells[i].regime != Regime::Frozen, i));
    if let Some(max) = opts.max_cells {
        pending.truncate(max);
    }
    let executed = pending.len();
    let (phase1, phase2): (Vec<usize>, Vec<usize>) =
        pending.into_iter().partition(|&i| cells[i].regime == Regime::Frozen);

    let ledger = Mutex::new(Ledger {
        dir: out_dir.to_path_buf(),
        state,
        results,
        frozen,
    });
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidProbeInput(format!("thread pool: {e}")))?;
    let run_phase = |indices: &[usize]| -> Result<()> {
        pool.install(|| {
            indices.par_iter().try_for_each(|&i| {
                let cell = &cells[i];
                let baseline = if cell.regime == Regime::Frozen {
                    None
                } else {
                    ledger
                        .lock()
                        .expect("ledger lock")
                        .frozen
                        .get(&(cell.model.clone(), cell.task.clone()))
                        .cloned()
                };
                let out = run_cell(&ctx, cell, baseline.as_deref());
                ledger.lock().expect("ledger lock").record(i, cell, out)
            })
        })
    };
    run_phase(&phase1)?;
    run_phase(&phase2)?;

    let mut ledger = ledger.into_inner().expect("ledger lock");
    let all_settled = ledger
        .state
        .cells
        .iter()
        .all(|c| c.status != CellStatus::Pending);
    if all_settled {
        let doc = ResultsDocument {
            schema: RESULTS_SCHEMA.to_string(),
            run_id: manifest.run_id.clone(),
            manifest_hash: hash,
            master_seed: manifest.master_seed,
            tool_version: TOOL_VERSION.to_string(),
            cells: cells
                .iter()
                .filter_map(|c| ledger.results.get(&c.key()).cloned())
                .collect(),
            failures: ledger
                .state
                .cells
                .iter()
                .filter(|c| c.status == CellStatus::Failed)
                .map(|c| CellFailure {
                    key: c.key.clone(),
                    error: c.error.clone().unwrap_or_default(),
                })
                .collect(),
        };
        write_json(&out_dir.join(RESULTS_FILE), &doc)?;
        let report_dir = out_dir.join("report");
        write_reports(&report_dir, &doc.cells)?;
        write_json(&report_dir.join(RESULTS_FILE), &doc)?;
        ledger.state.finished_at = Some(now());
        write_json(&out_dir.join(STATE_FILE), &ledger.state)?;
    }
    Ok(RunOutcome {
        state: ledger.state,
        findings,
        executed,
    })
}

/// Writes one Markdown, LaTeX and CSV file per table.
pub fn write_reports(dir: &Path, cells: &[CellResult]) -> Result<Vec<Finding>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tables = build_tables(cells);
    for fmt in [Format::Markdown, Format::Latex, Format::Csv] {
        for t in &tables.feet {
            let name = format!("{}.{}.feet.{}", t.metric, t.task_id, fmt.extension());
            let mut f = fs::File::create(dir.join(&name)).map_err(|e| Error::io(dir.join(&name), e))?;
            f.write_all(render_feet(std::slice::from_ref(t), fmt).as_bytes())
                .map_err(|e| Error::io(dir.join(&name), e))?;
        }
        for t in &tables.delta {
            let name = format!("{}.{}.delta.{}", t.metric, t.task_id, fmt.extension());
            let mut f = fs::File::create(dir.join(&name)).map_err(|e| Error::io(dir.join(&name), e))?;
            f.write_all(render_delta(std::slice::from_ref(t), fmt).as_bytes())
                .map_err(|e| Error::io(dir.join(&name), e))?;
        }
    }
    Ok(tables.findings)
}

/// Loads `results.json` from a run directory.
pub fn load_results(run_dir: &Path) -> Result<ResultsDocument> {
    read_json(&run_dir.join(RESULTS_FILE))
}
