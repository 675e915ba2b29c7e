use alloc::collections::VecDeque;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Indices into one domain's training samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub domain: usize,
    pub indices: Vec<usize>,
}

/// Produces single-domain batches from several datasets.
///
/// Each epoch reshuffles every domain, cuts it into batches (the last one
/// may be short) and shuffles the pooled batch list, so a domain's share of
/// batches follows its dataset size and every sample appears exactly once
/// per epoch.
#[derive(Debug, Clone)]
pub struct MixedBatchSampler<R> {
    sizes: Vec<usize>,
    batch_size: usize,
    rng: R,
    pending: VecDeque<Batch>,
}

impl<R: Rng> MixedBatchSampler<R> {
    pub fn new(sizes: Vec<usize>, batch_size: usize, rng: R) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::Empty("training dataset"));
        }
        Ok(Self {
            sizes,
            batch_size,
            rng,
            pending: VecDeque::new(),
        })
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.sizes.iter().map(|n| n.div_ceil(self.batch_size)).sum()
    }

    pub fn next_epoch(&mut self) -> Vec<Batch> {
        // Whatever is left of a partially consumed epoch is discarded.
        self.pending.clear();
        let mut batches = Vec::with_capacity(self.batches_per_epoch());
        for (domain, &n) in self.sizes.iter().enumerate() {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(self.batch_size) {
                batches.push(Batch {
                    domain,
                    indices: chunk.to_vec(),
                });
            }
        }
        batches.shuffle(&mut self.rng);
        batches
    }
}

impl<R: Rng> Iterator for MixedBatchSampler<R> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pending.is_empty() {
            let epoch = self.next_epoch();
            self.pending.extend(epoch);
        }
        self.pending.pop_front()
    }
}
