//! Deterministic splitting, the power-of-two shot schedule, nested stratified
//! support sets, and per-cell seed derivation.
//!
//! Every random choice here is driven by a `ChaCha8Rng` seeded from a `u64`,
//! and every id list is sorted before it is shuffled, so results depend only
//! on the id/label pairs and the seed, never on input order.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Finding, Regime, Result};

/// Disjoint train / validation / test id sets, each sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Hamilton (largest remainder) apportionment of `total` across `sizes`
/// proportionally; remainder ties are broken by `tie_order` (a permutation
/// of class indices, earlier wins).
fn apportion(sizes: &[usize], fraction: f64, total: usize, tie_order: &[usize]) -> Vec<usize> {
    let quotas: Vec<f64> = sizes.iter().map(|&n| n as f64 * fraction).collect();
    let mut alloc: Vec<usize> = quotas
        .iter()
        .zip(sizes)
        .map(|(q, &n)| (q.floor() as usize).min(n))
        .collect();
    let mut rank = vec![0usize; sizes.len()];
    for (pos, &c) in tie_order.iter().enumerate() {
        rank[c] = pos;
    }
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(rank[a].cmp(&rank[b]))
    });
    let mut remaining = total.saturating_sub(alloc.iter().sum());
    // Loop in case some classes are already full.
    while remaining > 0 {
        let mut progressed = false;
        for &c in &order {
            if remaining == 0 {
                break;
            }
            if alloc[c] < sizes[c] {
                alloc[c] += 1;
                remaining -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    alloc
}

fn group_by_class(ids: &[String], labels: &[u32], num_classes: u32) -> Result<Vec<Vec<String>>> {
    let mut by_class = vec![Vec::new(); num_classes as usize];
    for (id, &label) in ids.iter().zip(labels) {
        let slot = by_class
            .get_mut(label as usize)
            .ok_or_else(|| Error::InvalidSampling(format!("label {label} out of range")))?;
        slot.push(id.clone());
    }
    for class in by_class.iter_mut() {
        class.sort();
    }
    Ok(by_class)
}

/// Stratified split: `round(n * train_frac)` examples go to train+val, of
/// which `round(|train+val| * val_frac_of_train)` are carved out for
/// validation. Both counts are apportioned across classes by largest
/// remainder.
pub fn make_split(
    ids: &[String],
    labels: &[u32],
    num_classes: u32,
    train_frac: f64,
    val_frac_of_train: f64,
    seed: u64,
) -> Result<Split> {
    if ids.len() != labels.len() {
        return Err(Error::InvalidSampling(
            "ids and labels differ in length".into(),
        ));
    }
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidSampling(format!(
            "train fraction {train_frac} outside (0, 1)"
        )));
    }
    if !(0.0..1.0).contains(&val_frac_of_train) {
        return Err(Error::InvalidSampling(format!(
            "validation fraction {val_frac_of_train} outside [0, 1)"
        )));
    }
    let mut by_class = group_by_class(ids, labels, num_classes)?;
    if let Some(c) = by_class.iter().position(Vec::is_empty) {
        return Err(Error::EmptyClass { class: c as u32 });
    }

    let mut rng = rng_from_seed(seed);
    for class in by_class.iter_mut() {
        class.shuffle(&mut rng);
    }
    let mut tie_order: Vec<usize> = (0..by_class.len()).collect();
    tie_order.shuffle(&mut rng);

    let sizes: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let n: usize = sizes.iter().sum();
    let trainval_total = (n as f64 * train_frac).round() as usize;
    let trainval = apportion(&sizes, train_frac, trainval_total, &tie_order);
    let val_total = (trainval_total as f64 * val_frac_of_train).round() as usize;
    let val = apportion(&trainval, val_frac_of_train, val_total, &tie_order);

    let mut split = Split {
        train_ids: Vec::new(),
        val_ids: Vec::new(),
        test_ids: Vec::new(),
    };
    for (c, class) in by_class.into_iter().enumerate() {
        for (i, id) in class.into_iter().enumerate() {
            if i < val[c] {
                split.val_ids.push(id);
            } else if i < trainval[c] {
                split.train_ids.push(id);
            } else {
                split.test_ids.push(id);
            }
        }
    }
    split.train_ids.sort();
    split.val_ids.sort();
    split.test_ids.sort();
    Ok(split)
}

/// Support-set sizes `[2, 4, ..., 2^max_exponent]`, clipped to the training
/// set size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotSchedule {
    pub max_exponent: u32,
    pub sizes: Vec<usize>,
}

pub fn make_schedule(max_exponent: u32, train_size: usize) -> ShotSchedule {
    let sizes = (1..=max_exponent)
        .map(|e| 1usize << e)
        .filter(|&k| k <= train_size)
        .collect();
    ShotSchedule {
        max_exponent,
        sizes,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportSet {
    pub k: usize,
    pub ids: Vec<String>,
    pub seed: u64,
}

/// Produces nested, stratified supports from one seed.
///
/// The training ids of each class are shuffled, the classes are put in a
/// random order, and the classes are then visited round-robin, one id per
/// visit. A support of size `k` is the first `k` ids of that sequence, so
/// smaller supports are prefixes of larger ones and class counts within any
/// prefix differ by at most one until some class runs out.
#[derive(Debug, Clone)]
pub struct SupportSampler {
    seed: u64,
    order: Vec<(String, u32)>,
    class_sizes: Vec<usize>,
    class_order: Vec<u32>,
}

impl SupportSampler {
    pub fn new(
        split: &Split,
        labels: &BTreeMap<String, u32>,
        num_classes: u32,
        seed: u64,
    ) -> Result<Self> {
        let mut by_class: Vec<Vec<String>> = vec![Vec::new(); num_classes as usize];
        let mut train = split.train_ids.clone();
        train.sort();
        for id in train {
            let label = *labels
                .get(&id)
                .ok_or_else(|| Error::InvalidSampling(format!("no label for id `{id}`")))?;
            by_class
                .get_mut(label as usize)
                .ok_or_else(|| Error::InvalidSampling(format!("label {label} out of range")))?
                .push(id);
        }
        let mut rng = rng_from_seed(seed);
        for class in by_class.iter_mut() {
            class.shuffle(&mut rng);
        }
        let mut class_order: Vec<u32> = (0..num_classes).collect();
        class_order.shuffle(&mut rng);

        let class_sizes: Vec<usize> = by_class.iter().map(Vec::len).collect();
        let longest = class_sizes.iter().copied().max().unwrap_or(0);
        let mut order = Vec::with_capacity(class_sizes.iter().sum());
        for round in 0..longest {
            for &c in &class_order {
                if let Some(id) = by_class[c as usize].get(round) {
                    order.push((id.clone(), c));
                }
            }
        }
        Ok(SupportSampler {
            seed,
            order,
            class_sizes,
            class_order,
        })
    }

    pub fn available(&self) -> usize {
        self.order.len()
    }

    /// The first `k` ids of the nested order, plus a finding for every class
    /// that could not fill its stratified quota.
    pub fn draw(&self, k: usize) -> Result<(SupportSet, Vec<Finding>)> {
        if k > self.order.len() {
            return Err(Error::InsufficientExamples {
                requested: k,
                available: self.order.len(),
            });
        }
        let num_classes = self.class_sizes.len();
        let mut findings = Vec::new();
        for (pos, &c) in self.class_order.iter().enumerate() {
            let quota = k / num_classes + usize::from(pos < k % num_classes);
            let have = self.class_sizes[c as usize];
            if have < quota {
                findings.push(Finding::warning(format!(
                    "support k={k}: class {c} short by {} (quota {quota}, available {have}); filled from other classes",
                    quota - have
                )));
            }
        }
        let ids = self.order[..k].iter().map(|(id, _)| id.clone()).collect();
        Ok((
            SupportSet {
                k,
                ids,
                seed: self.seed,
            },
            findings,
        ))
    }
}

/// Draws a single support set; see [`SupportSampler`] for the construction.
pub fn draw_support(
    split: &Split,
    labels: &BTreeMap<String, u32>,
    num_classes: u32,
    k: usize,
    cell_seed: u64,
) -> Result<(SupportSet, Vec<Finding>)> {
    SupportSampler::new(split, labels, num_classes, cell_seed)?.draw(k)
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn splitmix64_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit seed for a cell: SplitMix64 absorbing the key one byte at a
/// time, then its length. See `docs/determinism.md`.
pub fn derive_cell_seed(master_seed: u64, cell_key: &str) -> u64 {
    let mut state = master_seed;
    for &b in cell_key.as_bytes() {
        state = splitmix64_mix(state.wrapping_add(GOLDEN_GAMMA) ^ u64::from(b));
    }
    splitmix64_mix(state.wrapping_add(GOLDEN_GAMMA) ^ cell_key.len() as u64)
}

/// Canonical cell key `model|task|regime|shot|replicate`; the shot field is
/// empty for non-few-shot cells.
pub fn cell_key(model: &str, task: &str, regime: Regime, shot: Option<u32>, replicate: u32) -> String {
    let shot = shot.map(|s| s.to_string()).unwrap_or_default();
    format!("{model}|{task}|{regime}|{shot}|{replicate}")
}
