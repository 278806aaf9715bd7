use serde::{Deserialize, Serialize};

use super::score::HiMatrix;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankStrategy {
    /// Highest per-layer mean HI.
    Top,
    /// Lowest per-layer mean HI.
    Bottom,
    /// Uniform draw from the layers in neither the top nor the bottom set.
    Random,
}

/// Layer indices ordered from highest to lowest mean HI; equal means keep
/// the lower index first.
pub fn layers_by_mean(hi: &HiMatrix) -> Vec<usize> {
    let mut order: Vec<usize> = (0..hi.n_layers).collect();
    order.sort_by(|&a, &b| {
        hi.layer_means[b]
            .total_cmp(&hi.layer_means[a])
            .then(a.cmp(&b))
    });
    order
}

fn bottom_order(hi: &HiMatrix) -> Vec<usize> {
    let mut order: Vec<usize> = (0..hi.n_layers).collect();
    order.sort_by(|&a, &b| {
        hi.layer_means[a]
            .total_cmp(&hi.layer_means[b])
            .then(a.cmp(&b))
    });
    order
}

/// Selects `k` layers; the result is sorted by layer index.
pub fn rank_layers(
    hi: &HiMatrix,
    k: usize,
    strategy: RankStrategy,
    seed: u64,
) -> Result<Vec<usize>> {
    if k == 0 || k > hi.n_layers {
        return Err(Error::InvalidInput(format!(
            "cannot select {k} of {} layers",
            hi.n_layers
        )));
    }
    let top: Vec<usize> = layers_by_mean(hi).into_iter().take(k).collect();
    let bottom: Vec<usize> = bottom_order(hi).into_iter().take(k).collect();
    let mut chosen = match strategy {
        RankStrategy::Top => top,
        RankStrategy::Bottom => bottom,
        RankStrategy::Random => {
            let pool: Vec<usize> = (0..hi.n_layers)
                .filter(|l| !top.contains(l) && !bottom.contains(l))
                .collect();
            if pool.len() < k {
                return Err(Error::InvalidInput(format!(
                    "random selection needs {k} layers outside top-{k}/bottom-{k}, only {} remain",
                    pool.len()
                )));
            }
            Rng::derive(seed, 0x7a_4e5).choose_distinct(&pool, k)
        }
    };
    chosen.sort_unstable();
    Ok(chosen)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hi(means: &[f64]) -> HiMatrix {
        HiMatrix::new(means.len(), 1, means.to_vec(), 1).unwrap()
    }

    #[test]
    fn hand_sorted_example() {
        let h = hi(&[0.3, 0.1, 0.4, 0.2]);
        assert_eq!(rank_layers(&h, 1, RankStrategy::Top, 0).unwrap(), vec![2]);
        assert_eq!(
            rank_layers(&h, 1, RankStrategy::Bottom, 0).unwrap(),
            vec![1]
        );
        for seed in 0..20 {
            let r = rank_layers(&h, 1, RankStrategy::Random, seed).unwrap();
            assert!(r == vec![0] || r == vec![3]);
        }
    }

    #[test]
    fn random_covers_the_pool() {
        let h = hi(&[0.3, 0.1, 0.4, 0.2]);
        let picks: std::collections::HashSet<_> = (0..50)
            .map(|s| rank_layers(&h, 1, RankStrategy::Random, s).unwrap()[0])
            .collect();
        assert_eq!(picks, [0, 3].into_iter().collect());
    }

    #[test]
    fn all_layers() {
        let h = hi(&[0.3, 0.1, 0.4, 0.2]);
        assert_eq!(
            rank_layers(&h, 4, RankStrategy::Top, 0).unwrap(),
            vec![0, 1, 2, 3]
        );
    }

    #[test]
    fn ties_prefer_lower_index() {
        let h = hi(&[0.5, 0.5, 0.5, 0.5]);
        assert_eq!(rank_layers(&h, 1, RankStrategy::Top, 0).unwrap(), vec![0]);
        assert_eq!(
            rank_layers(&h, 1, RankStrategy::Bottom, 0).unwrap(),
            vec![0]
        );
        assert_eq!(
            rank_layers(&h, 2, RankStrategy::Top, 0).unwrap(),
            vec![0, 1]
        );
    }

    #[test]
    fn random_pool_too_small() {
        let h = hi(&[0.3, 0.1, 0.4, 0.2]);
        assert!(rank_layers(&h, 2, RankStrategy::Random, 0).is_err());
        assert!(rank_layers(&h, 0, RankStrategy::Top, 0).is_err());
    }

    #[test]
    fn selections_are_disjoint() {
        let h = hi(&[0.9, 0.2, 0.5, 0.1, 0.7, 0.3, 0.6, 0.4]);
        let top = rank_layers(&h, 2, RankStrategy::Top, 1).unwrap();
        let bottom = rank_layers(&h, 2, RankStrategy::Bottom, 1).unwrap();
        let random = rank_layers(&h, 2, RankStrategy::Random, 1).unwrap();
        assert_eq!(top, vec![0, 4]);
        assert_eq!(bottom, vec![1, 3]);
        assert!(random
            .iter()
            .all(|l| !top.contains(l) && !bottom.contains(l)));
    }
}
