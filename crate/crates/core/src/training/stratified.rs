//! Stratified mini-batch construction for frame models.
//!
//! Each batch's class counts follow the training-set prior via largest
//! remainder rounding (every count is the floor or ceiling of
//! `batch * prior`), and frames are drawn from per-class shuffled queues so
//! within-class sampling is uniform without replacement until a class is
//! exhausted.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::FrameDataset;
use crate::error::{HarError, Result};

pub const DEFAULT_BATCH: usize = 64;

#[derive(Debug)]
pub struct StratifiedBatcher {
    batch_size: usize,
    /// Per-class frame pools (classes with zero frames are excluded).
    pools: Vec<Vec<usize>>,
    /// Class of each pool (pool order is ascending class index).
    classes: Vec<usize>,
    /// Per-batch count per pool.
    targets: Vec<usize>,
    /// Consumable shuffled queues, refilled per class when exhausted.
    queues: Vec<Vec<usize>>,
}

impl StratifiedBatcher {
    pub fn new(frames: &FrameDataset, batch_size: usize) -> Result<Self> {
        if frames.is_empty() {
            return Err(HarError::RejectedInput("empty frame dataset".into()));
        }
        let n_classes = frames.n_classes();
        let mut pools: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
        for i in 0..frames.len() {
            pools[frames.label(i)].push(i);
        }
        let mut classes = Vec::new();
        let mut kept_pools = Vec::new();
        for (c, pool) in pools.into_iter().enumerate() {
            if pool.is_empty() {
                log::warn!("class {c} has no training frames; excluded from stratification");
            } else {
                classes.push(c);
                kept_pools.push(pool);
            }
        }
        let total: usize = kept_pools.iter().map(|p| p.len()).sum();
        let priors: Vec<f64> = kept_pools
            .iter()
            .map(|p| p.len() as f64 / total as f64)
            .collect();
        let targets = largest_remainder(&priors, batch_size);
        let queues = vec![Vec::new(); kept_pools.len()];
        Ok(StratifiedBatcher {
            batch_size,
            pools: kept_pools,
            classes,
            targets,
            queues,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Per-batch count for every class in the original class indexing.
    pub fn class_targets(&self) -> Vec<(usize, usize)> {
        self.classes
            .iter()
            .copied()
            .zip(self.targets.iter().copied())
            .collect()
    }

    pub fn batches_per_epoch(&self, n_frames: usize) -> usize {
        n_frames.div_ceil(self.batch_size)
    }

    /// Frame indices of the next batch.
    pub fn next_batch<R: Rng>(&mut self, rng: &mut R) -> Vec<usize> {
        let mut batch = Vec::with_capacity(self.batch_size);
        for (p, &want) in self.targets.iter().enumerate() {
            for _ in 0..want {
                if self.queues[p].is_empty() {
                    self.queues[p] = self.pools[p].clone();
                    self.queues[p].shuffle(rng);
                }
                batch.push(self.queues[p].pop().unwrap());
            }
        }
        batch
    }
}

/// Round `batch * prior` to integers summing to `batch`, each within one of
/// the exact value. Remainder slots go to the largest fractional parts
/// (ties toward smaller index, deterministically).
fn largest_remainder(priors: &[f64], batch: usize) -> Vec<usize> {
    let exact: Vec<f64> = priors.iter().map(|p| p * batch as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|&e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..priors.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for k in 0..batch - assigned {
        counts[order[k % order.len()]] += 1;
    }
    counts
}
