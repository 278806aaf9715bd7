//! Kruskal-Wallis H test with a chi-square p-value.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::score::HiMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KwResult {
    /// Tie-corrected H statistic.
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub group_sizes: Vec<usize>,
    /// `1 - Σ(t³ - t) / (N³ - N)` over tie groups.
    pub tie_correction: f64,
    /// All observations identical: H is undefined, reported as 0 with p = 1.
    pub degenerate: bool,
}

/// Average ranks (1-based) with ties sharing the mean of their positions.
/// Also returns `Σ (t³ - t)` over tie groups.
pub fn average_ranks(values: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        let t = (j - i) as f64;
        ties += t * t * t - t;
        i = j;
    }
    (ranks, ties)
}

pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<KwResult> {
    if groups.len() < 2 || groups.iter().any(|g| g.is_empty()) {
        return Err(Error::InvalidInput(
            "Kruskal-Wallis needs at least two non-empty groups".into(),
        ));
    }
    let all: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = all.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "Kruskal-Wallis needs at least 3 observations, got {n}"
        )));
    }
    if all.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Kruskal-Wallis observations".into()));
    }
    let (ranks, ties) = average_ranks(&all);
    let nf = n as f64;
    let mut offset = 0;
    let mut sum = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        sum += r * r / g.len() as f64;
        offset += g.len();
    }
    let h = 12.0 / (nf * (nf + 1.0)) * sum - 3.0 * (nf + 1.0);
    let correction = 1.0 - ties / (nf * nf * nf - nf);
    let df = groups.len() - 1;
    let group_sizes = groups.iter().map(|g| g.len()).collect();
    if correction <= 0.0 {
        return Ok(KwResult {
            statistic: 0.0,
            df,
            p_value: 1.0,
            group_sizes,
            tie_correction: 0.0,
            degenerate: true,
        });
    }
    // rounding can leave a tiny negative H when groups are identical
    let statistic = (h / correction).max(0.0);
    Ok(KwResult {
        statistic,
        df,
        p_value: chi_square_sf(statistic, df as f64)?,
        group_sizes,
        tie_correction: correction,
        degenerate: false,
    })
}

/// Kruskal-Wallis grouped by layer (observations: that layer's head scores)
/// and by head (observations: that head's per-layer scores).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerTests {
    pub layers: KwResult,
    pub heads: KwResult,
}

pub fn layer_tests(hi: &HiMatrix) -> Result<LayerTests> {
    let by_layer: Vec<Vec<f64>> = (0..hi.n_layers).map(|l| hi.layer(l).to_vec()).collect();
    let by_head: Vec<Vec<f64>> = (0..hi.n_heads)
        .map(|h| (0..hi.n_layers).map(|l| hi.get(l, h)).collect())
        .collect();
    Ok(LayerTests {
        layers: kruskal_wallis(&by_layer)?,
        heads: kruskal_wallis(&by_head)?,
    })
}

/// Chi-square survival function `Q(df/2, x/2)`.
pub fn chi_square_sf(x: f64, df: f64) -> Result<f64> {
    if !x.is_finite() || !df.is_finite() {
        return Err(Error::NonFinite(format!("chi_square_sf({x}, {df})")));
    }
    if x < 0.0 || df < 1.0 {
        return Err(Error::InvalidInput(format!("chi_square_sf({x}, {df})")));
    }
    let dist = ChiSquared::new(df).map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(dist.sf(x))
}
