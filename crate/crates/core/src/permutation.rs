//! Random relabellings of the pooled data and the replica set `{T_0, …, T_B}`.
//!
//! Replica `b` draws its permutation from its own ChaCha20 stream: the key is
//! the master seed in little-endian order padded with zeros, and the stream id
//! is `b`. The shuffle is a plain Fisher–Yates pass with unbiased rejection
//! sampling, so any ChaCha20 implementation can reproduce the permutations.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curves::PooledDataset;
use crate::error::{Error, Result};
use crate::statistic::{StatConfig, StatEvaluator, StatVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationPlan {
    /// Number of permutation replicas `B`.
    pub replicas: usize,
    pub master_seed: u64,
}

impl PermutationPlan {
    pub fn new(replicas: usize, master_seed: u64) -> Result<Self> {
        if replicas == 0 {
            return Err(Error::config(
                "number of permutation replicas B must be ≥ 1",
            ));
        }
        Ok(PermutationPlan {
            replicas,
            master_seed,
        })
    }

    fn check_index(&self, replica_index: usize) -> Result<()> {
        if replica_index == 0 || replica_index > self.replicas {
            return Err(Error::validation(format!(
                "replica index {replica_index} outside 1..={}",
                self.replicas
            )));
        }
        Ok(())
    }
}

/// The generator for one replica.
pub fn replica_rng(master_seed: u64, replica_index: usize) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    let mut rng = ChaCha20Rng::from_seed(key);
    rng.set_stream(replica_index as u64);
    rng
}

/// Uniform integer in `0..n` by rejection on 64-bit outputs.
fn uniform_below<R: RngCore>(rng: &mut R, n: u64) -> u64 {
    debug_assert!(n > 0);
    // 2^64 mod n; outputs below it would bias the remainder
    let threshold = n.wrapping_neg() % n;
    loop {
        let x = rng.next_u64();
        if x >= threshold {
            return x % n;
        }
    }
}

/// Permutation of `0..n` for one replica: position `i` receives pooled element `order[i]`.
pub fn permutation_order(n: usize, master_seed: u64, replica_index: usize) -> Vec<usize> {
    let mut rng = replica_rng(master_seed, replica_index);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = uniform_below(&mut rng, (i + 1) as u64) as usize;
        order.swap(i, j);
    }
    order
}

/// Relabelled copy of `dataset` for replica `replica_index` (1-based).
///
/// The first `n_1` permuted curves form sample 1, the next `n_2` sample 2, and
/// so on, so group sizes and labels are preserved.
pub fn permute_dataset(
    dataset: &PooledDataset,
    replica_index: usize,
    plan: &PermutationPlan,
) -> Result<PooledDataset> {
    plan.check_index(replica_index)?;
    let order = permutation_order(dataset.total(), plan.master_seed, replica_index);
    Ok(dataset.regroup(&order))
}

/// `T_0` for the observed data and `T_1, …, T_B` for the relabellings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaSet {
    pub t0: StatVector,
    pub replicas: Vec<StatVector>,
    pub plan: PermutationPlan,
}

impl ReplicaSet {
    pub fn dim(&self) -> usize {
        self.t0.dim()
    }

    /// `T_0` followed by the replicas, as plain coordinate vectors.
    pub fn cloud(&self) -> Vec<Vec<f64>> {
        std::iter::once(&self.t0)
            .chain(&self.replicas)
            .map(|t| t.values.clone())
            .collect()
    }
}

pub fn replicate(
    dataset: &PooledDataset,
    config: &StatConfig,
    plan: &PermutationPlan,
) -> Result<ReplicaSet> {
    let evaluator = StatEvaluator::new(dataset, config)?;
    replicate_with(&evaluator, plan)
}

/// Evaluates all replicas in parallel; the result does not depend on the
/// number of threads or the order in which replicas finish.
pub fn replicate_with(evaluator: &StatEvaluator, plan: &PermutationPlan) -> Result<ReplicaSet> {
    let t0 = evaluator.observed()?;
    let n = evaluator.pooled_len();
    let replicas = (1..=plan.replicas)
        .into_par_iter()
        .map(|b| {
            let order = permutation_order(n, plan.master_seed, b);
            evaluator.evaluate(&order).map_err(|e| Error::Replica {
                replica: b,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicaSet {
        t0,
        replicas,
        plan: *plan,
    })
}
