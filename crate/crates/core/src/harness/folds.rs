use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

/// Action positions of one cross-validation split.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n_actions: usize,
    pub folds: Vec<Fold>,
}

/// Splits a seeded permutation of `0..n_actions` into `folds` equal groups.
/// Fold `i` tests on group `i` and validates on the next `val_actions`
/// actions after it in rotation order; the rest train.
pub fn make_folds(n_actions: usize, folds: usize, val_actions: Option<usize>, seed: u64) -> Result<FoldPlan> {
    if folds < 2 || n_actions == 0 || !n_actions.is_multiple_of(folds) {
        return Err(config_err!("{n_actions} actions cannot be split into {folds} equal folds"));
    }
    let test_size = n_actions / folds;
    let val_size = val_actions.unwrap_or(test_size);
    if val_size == 0 || test_size + val_size >= n_actions {
        return Err(config_err!("fold of {test_size} test and {val_size} validation actions leaves no training data"));
    }
    let mut perm: Vec<usize> = (0..n_actions).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let folds = (0..folds)
        .map(|i| {
            let start = i * test_size;
            let rotated: Vec<usize> = (0..n_actions).map(|j| perm[(start + j) % n_actions]).collect();
            let mut test = rotated[..test_size].to_vec();
            let mut val = rotated[test_size..test_size + val_size].to_vec();
            let mut train = rotated[test_size + val_size..].to_vec();
            test.sort_unstable();
            val.sort_unstable();
            train.sort_unstable();
            Fold { index: i, train, val, test }
        })
        .collect();
    Ok(FoldPlan { n_actions, folds })
}
