//! Deterministic Gaussian-mixture embedding sets, used for the bundled
//! fixtures and in tests.
//!
//! Each class has a mean on the first `signal_dims` coordinates; every
//! coordinate then gets isotropic Gaussian noise. Class means depend only on
//! the task seed, so frozen and fine-tuned sets of one task share their
//! geometry and differ only in separation and noise draw.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::embedding_io::{save_embedding_set, EmbeddingRecord, EmbeddingSet};
use crate::sampling::{derive_cell_seed, rng_from_seed};
use crate::{Error, Regime, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSpec {
    pub n: usize,
    pub dim: usize,
    pub num_classes: u32,
    pub signal_dims: usize,
    /// Norm of each class mean.
    pub separation: f64,
    pub noise: f64,
}

/// Class means: random directions in the signal subspace scaled to
/// `separation`.
pub fn class_means(spec: &GaussianSpec, task_seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_from_seed(task_seed);
    (0..spec.num_classes)
        .map(|_| {
            let mut mean = vec![0.0; spec.dim];
            let dir: Vec<f64> = (0..spec.signal_dims)
                .map(|_| rng.sample(StandardNormal))
                .collect();
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            for (m, d) in mean.iter_mut().zip(dir) {
                *m = spec.separation * d / norm;
            }
            mean
        })
        .collect()
}

/// Example `i` has label `i % num_classes` and id `{task_id}-{i:05}`.
pub fn gaussian_set(
    model_id: &str,
    task_id: &str,
    regime: Regime,
    spec: &GaussianSpec,
    task_seed: u64,
    noise_seed: u64,
) -> EmbeddingSet {
    let means = class_means(spec, task_seed);
    let mut rng = rng_from_seed(noise_seed);
    let records = (0..spec.n)
        .map(|i| {
            let label = (i % spec.num_classes as usize) as u32;
            let vector = means[label as usize]
                .iter()
                .map(|&m| {
                    let z: f64 = rng.sample(StandardNormal);
                    (m + spec.noise * z) as f32
                })
                .collect();
            EmbeddingRecord {
                id: format!("{task_id}-{i:05}"),
                label,
                vector,
            }
        })
        .collect();
    EmbeddingSet {
        model_id: model_id.to_string(),
        task_id: task_id.to_string(),
        regime,
        shot: None,
        dim: spec.dim,
        num_classes: spec.num_classes,
        metadata: BTreeMap::from([("source".to_string(), serde_json::json!("synthetic"))]),
        records,
    }
}

fn write_manifest(dir: &Path, text: &str) -> Result<PathBuf> {
    let path = dir.join("manifest.toml");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn mapping(model: &str, task: &str, regime: Regime, file: &str) -> String {
    format!(
        "\n[[cells]]\nmodel = \"{model}\"\ntask = \"{task}\"\nregime = \"{regime}\"\npath = \"{file}\"\n"
    )
}

/// Two models on one balanced binary task; the standard fixture for runs,
/// determinism checks and the shot curve. Writes the embedding files and a
/// `manifest.toml` into `dir` and returns the manifest path.
pub fn write_bundled(dir: &Path, seed: u64) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let task = "synth";
    let task_seed = derive_cell_seed(seed, "fixture|synth");
    let mut cells = String::new();
    for (model, frozen_sep, tuned_sep) in [("alpha", 1.6, 3.0), ("beta", 2.2, 3.4)] {
        for (regime, sep, binary) in [
            (Regime::Frozen, frozen_sep, false),
            (Regime::Finetuned, tuned_sep, true),
        ] {
            let spec = GaussianSpec {
                n: 600,
                dim: 16,
                num_classes: 2,
                signal_dims: 16,
                separation: sep,
                noise: 1.0,
            };
            let noise_seed = derive_cell_seed(seed, &format!("fixture|{model}|{regime}"));
            let set = gaussian_set(model, task, regime, &spec, task_seed, noise_seed);
            let file = format!("{model}.{regime}.feet.{}", if binary { "bin" } else { "jsonl" });
            save_embedding_set(&set, dir.join(&file))?;
            cells.push_str(&mapping(model, task, regime, &file));
        }
    }
    let text = format!(
        r#"run_id = "synthetic"
master_seed = {seed}
models = ["alpha", "beta"]

[[tasks]]
task_id = "{task}"
metrics = ["accuracy", "f1", "auroc", "auprc"]
positive_class = 1
averaging = "macro"

[schedule]
max_exponent = 10

[bootstrap]
replicates = 200
{cells}"#
    );
    write_manifest(dir, &text)
}

/// High-dimensional, low-sample task: 512 dimensions with the class signal
/// in 4 of them, 32 training examples. The frozen regime uses a
/// nearest-centroid head; the "fine-tuned" regime reads the same vectors
/// through an unregularized probe trained to convergence without early
/// stopping.
pub fn write_degradation(dir: &Path, seed: u64) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let task = "hdls";
    let spec = GaussianSpec {
        n: 400,
        dim: 512,
        num_classes: 2,
        signal_dims: 4,
        separation: 2.5,
        noise: 1.0,
    };
    let task_seed = derive_cell_seed(seed, "fixture|hdls");
    let noise_seed = derive_cell_seed(seed, "fixture|hdls|noise");
    let mut cells = String::new();
    for regime in [Regime::Frozen, Regime::Finetuned] {
        let set = gaussian_set("wide", task, regime, &spec, task_seed, noise_seed);
        let file = format!("wide.{regime}.feet.bin");
        save_embedding_set(&set, dir.join(&file))?;
        cells.push_str(&mapping("wide", task, regime, &file));
    }
    // train+val = round(400 * 0.09) = 36, val = round(3.6) = 4, train = 32
    let text = format!(
        r#"run_id = "degradation"
master_seed = {seed}
models = ["wide"]
frozen_head = "similarity"

[[tasks]]
task_id = "{task}"
metrics = ["accuracy"]

[split]
train_fraction = 0.09
val_fraction_of_train = 0.1

[schedule]
max_exponent = 1

[bootstrap]
replicates = 200

[similarity]
mode = "nearest_centroid"
measure = "neg_euclidean"

[finetuned_probe]
learning_rate = 0.05
max_epochs = 300
weight_decay = 0.0
early_stopping = false
{cells}"#
    );
    write_manifest(dir, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_balanced() {
        let spec = GaussianSpec {
            n: 10,
            dim: 3,
            num_classes: 2,
            signal_dims: 2,
            separation: 2.0,
            noise: 0.5,
        };
        let a = gaussian_set("m", "t", Regime::Frozen, &spec, 1, 2);
        let b = gaussian_set("m", "t", Regime::Frozen, &spec, 1, 2);
        assert_eq!(a, b);
        assert_eq!(a.class_counts(), vec![5, 5]);
        let means = class_means(&spec, 1);
        assert!((means[0].iter().map(|x| x * x).sum::<f64>().sqrt() - 2.0).abs() < 1e-12);
        assert_eq!(means[0][2], 0.0);
    }
}
