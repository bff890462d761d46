use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::rng::{stream, SplitMix64};

/// Stratified k-fold partition plus an optional held-out test list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan<S> {
    pub k: usize,
    pub folds: Vec<Vec<S>>,
    pub test: Vec<S>,
}

impl<S: Ord + Clone> FoldPlan<S> {
    pub fn validation(&self, fold: usize) -> Vec<S> {
        let mut v = self.folds[fold].clone();
        v.sort();
        v
    }

    /// Every id outside `fold`, sorted.
    pub fn train(&self, fold: usize) -> Vec<S> {
        let mut v: Vec<S> = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != fold)
            .flat_map(|(_, f)| f.iter().cloned())
            .collect();
        v.sort();
        v
    }
}

/// Each class is shuffled (from its sorted order) and dealt round-robin
/// across the folds; the dealing position carries over between classes so
/// fold sizes differ by at most one.
pub fn make_folds<S: Ord + Clone>(
    items: &[(S, u8)],
    k: usize,
    seed: u64,
) -> Result<FoldPlan<S>, DataError> {
    if k < 2 {
        return Err(DataError::Invalid(format!(
            "need at least 2 folds, got {k}"
        )));
    }
    let mut rng = SplitMix64::derived(seed, stream::FOLDS);
    let mut folds: Vec<Vec<S>> = vec![Vec::new(); k];
    let mut next = 0;
    for class in [0u8, 1] {
        let mut members: Vec<S> = items
            .iter()
            .filter(|(_, l)| *l == class)
            .map(|(s, _)| s.clone())
            .collect();
        if members.len() < k {
            return Err(DataError::ClassTooSmall {
                class,
                count: members.len(),
                k,
            });
        }
        members.sort();
        rng.shuffle(&mut members);
        for m in members {
            folds[next].push(m);
            next = (next + 1) % k;
        }
    }
    if let Some((_, l)) = items.iter().find(|(_, l)| *l > 1) {
        return Err(DataError::Invalid(format!("label {l} is not 0 or 1")));
    }
    Ok(FoldPlan {
        k,
        folds,
        test: Vec::new(),
    })
}
