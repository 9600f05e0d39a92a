use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BatchPolicy {
    Shuffled,
    /// Each batch draws from both groups in proportion to what remains of
    /// them in the epoch, with at least one row of each while both last.
    #[default]
    GroupStratified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSampler {
    pub batch_size: usize,
    pub policy: BatchPolicy,
    pub seed: u64,
}

impl BatchSampler {
    pub fn new(batch_size: usize, policy: BatchPolicy, seed: u64) -> Result<Self> {
        if batch_size < 2 {
            return Err(Error::Config(format!("batch size must be at least 2, got {batch_size}")));
        }
        Ok(Self {
            batch_size,
            policy,
            seed,
        })
    }

    /// Row-index batches for one epoch. Every index appears exactly once.
    pub fn epoch(&self, groups: &[u8], epoch: usize) -> Result<Vec<Vec<usize>>> {
        let n = groups.len();
        if self.batch_size > n {
            return Err(Error::Config(format!(
                "batch size {} exceeds dataset size {n}",
                self.batch_size
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(epoch as u64);
        match self.policy {
            BatchPolicy::Shuffled => {
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut rng);
                Ok(order.chunks(self.batch_size).map(<[usize]>::to_vec).collect())
            }
            BatchPolicy::GroupStratified => {
                let mut pools: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
                for (i, &g) in groups.iter().enumerate() {
                    pools[usize::from(g > 0)].push(i);
                }
                for pool in &mut pools {
                    pool.shuffle(&mut rng);
                }
                let mut cursor = [0usize; 2];
                let mut batches = Vec::with_capacity(n.div_ceil(self.batch_size));
                loop {
                    let left = [pools[0].len() - cursor[0], pools[1].len() - cursor[1]];
                    let total = left[0] + left[1];
                    if total == 0 {
                        break;
                    }
                    let size = self.batch_size.min(total);
                    let mut take0 = (size as f64 * left[0] as f64 / total as f64).round() as usize;
                    if left[0] > 0 && left[1] > 0 && size >= 2 {
                        take0 = take0.clamp(1, size - 1);
                    }
                    take0 = take0.min(left[0]).max(size.saturating_sub(left[1]));
                    let take1 = size - take0;
                    let mut batch = Vec::with_capacity(size);
                    batch.extend_from_slice(&pools[0][cursor[0]..cursor[0] + take0]);
                    batch.extend_from_slice(&pools[1][cursor[1]..cursor[1] + take1]);
                    cursor[0] += take0;
                    cursor[1] += take1;
                    batch.shuffle(&mut rng);
                    batches.push(batch);
                }
                Ok(batches)
            }
        }
    }
}

pub fn sample_batches(groups: &[u8], sampler: &BatchSampler, epoch: usize) -> Result<Vec<Vec<usize>>> {
    sampler.epoch(groups, epoch)
}
