use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Sample indices of each split. One third of the data scores attention
/// heads; the remaining two thirds split 60/15/25 into train/val/test.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplits {
    pub hi: Vec<usize>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl DatasetSplits {
    pub fn total(&self) -> usize {
        self.hi.len() + self.train.len() + self.val.len() + self.test.len()
    }
}

pub fn make_splits(n_samples: usize, seed: u64) -> Result<DatasetSplits> {
    if n_samples < 10 {
        return Err(Error::InvalidInput(format!(
            "cannot split {n_samples} samples"
        )));
    }
    let mut order: Vec<usize> = (0..n_samples).collect();
    Rng::derive(seed, 0x5_9117).shuffle(&mut order);
    let n_hi = n_samples / 3;
    let rest = n_samples - n_hi;
    let n_train = rest * 60 / 100;
    let n_val = rest * 15 / 100;
    let mut it = order.into_iter();
    let mut take = |k: usize| it.by_ref().take(k).collect::<Vec<_>>();
    let hi = take(n_hi);
    let train = take(n_train);
    let val = take(n_val);
    let test = take(usize::MAX);
    Ok(DatasetSplits {
        hi,
        train,
        val,
        test,
    })
}
