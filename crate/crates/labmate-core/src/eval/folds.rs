//! Deterministic stratified k-fold splitting.
//!
//! Records are grouped by stratum, each group is shuffled with a generator
//! derived from (seed, stratum), and the groups are dealt into folds in one
//! continuous round-robin pass. That keeps global fold sizes within 1 of
//! each other while spreading every stratum as evenly as possible.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seeding;

use super::EvalError;

/// A complete assignment of record indices to test folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub k: usize,
    pub seed: u64,
    /// `assignments[i]` is the fold whose test set contains record `i`.
    pub assignments: Vec<usize>,
}

impl FoldSplit {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &f)| f == fold)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &f)| f != fold)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Split `n` records into `k` folds, stratified by the given labels.
///
/// Deterministic in (n, k, seed, strata); every index lands in exactly one
/// test fold and fold sizes differ by at most one.
pub fn kfold_split(
    n: usize,
    k: usize,
    seed: u64,
    strata: &[String],
) -> Result<FoldSplit, EvalError> {
    if k < 2 || n < k {
        return Err(EvalError::TooFewRecords { n, k });
    }
    assert_eq!(strata.len(), n, "one stratum label per record");

    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in strata.iter().enumerate() {
        groups.entry(s.as_str()).or_default().push(i);
    }

    let mut assignments = vec![usize::MAX; n];
    let mut cursor = 0usize;
    for (stratum, mut indices) in groups {
        let mut rng = seeding::rng_for(seed, &format!("fold/{stratum}"));
        for i in (1..indices.len()).rev() {
            let j = rng.random_range(0..=i);
            indices.swap(i, j);
        }
        for idx in indices {
            assignments[idx] = cursor % k;
            cursor += 1;
        }
    }
    debug_assert!(assignments.iter().all(|&f| f < k));
    Ok(FoldSplit { k, seed, assignments })
}
