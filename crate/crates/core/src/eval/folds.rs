use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FoldError {
    #[error("cannot split {examples} examples into {k} folds (need 2 <= k <= examples)")]
    InvalidK { k: usize, examples: usize },
    #[error("example id {0:?} appears more than once")]
    DuplicateId(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<Fold>,
}

/// Shuffles `ids` with a seeded ChaCha8 generator and deals them round
/// robin into `k` test sets. Each fold trains on everything outside its
/// test set, in shuffled order.
pub fn make_folds(ids: &[String], k: usize, seed: u64) -> Result<FoldPlan, FoldError> {
    if k < 2 || ids.len() < k {
        return Err(FoldError::InvalidK { k, examples: ids.len() });
    }
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(FoldError::DuplicateId(id.clone()));
        }
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let folds = (0..k)
        .map(|f| {
            let (test, train): (Vec<_>, Vec<_>) = shuffled.iter().enumerate().partition(|(i, _)| i % k == f);
            Fold {
                train: train.into_iter().map(|(_, id)| id.clone()).collect(),
                test: test.into_iter().map(|(_, id)| id.clone()).collect(),
            }
        })
        .collect();
    Ok(FoldPlan { k, seed, folds })
}
