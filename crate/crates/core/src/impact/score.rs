//! Head Impact: dataset-mean IoU between each head's binarized
//! caption→visual attention and the key-object token mask.

use serde::{Deserialize, Serialize};

use super::attention::extract_caption_attention;
use super::grid::{binarize, iou, project_mask};
use crate::data::Sample;
use crate::error::{Error, Result, ResultExt};
use crate::model::{caption_prompt, forward, AttentionRecord, ModelWeights, PromptLayout, Vocab};

pub const DEFAULT_TAU: f64 = 0.25;

/// `(n_layers × n_heads)` Head Impact scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HiMatrix {
    pub n_layers: usize,
    pub n_heads: usize,
    /// Row-major, one row per layer.
    pub scores: Vec<f64>,
    /// Number of `(sample, object)` units averaged.
    pub n_units: usize,
    pub layer_means: Vec<f64>,
}

impl HiMatrix {
    pub fn new(n_layers: usize, n_heads: usize, scores: Vec<f64>, n_units: usize) -> Result<Self> {
        if scores.len() != n_layers * n_heads || n_layers == 0 || n_heads == 0 {
            return Err(Error::InvalidInput(format!(
                "{} scores for {n_layers} layers x {n_heads} heads",
                scores.len()
            )));
        }
        let layer_means = scores
            .chunks(n_heads)
            .map(|row| row.iter().sum::<f64>() / n_heads as f64)
            .collect();
        Ok(HiMatrix {
            n_layers,
            n_heads,
            scores,
            n_units,
            layer_means,
        })
    }

    pub fn get(&self, layer: usize, head: usize) -> f64 {
        self.scores[layer * self.n_heads + head]
    }

    pub fn layer(&self, layer: usize) -> &[f64] {
        &self.scores[layer * self.n_heads..(layer + 1) * self.n_heads]
    }

    /// Swaps the roles of layers and heads.
    pub fn transpose(&self) -> HiMatrix {
        let mut scores = Vec::with_capacity(self.scores.len());
        for h in 0..self.n_heads {
            for l in 0..self.n_layers {
                scores.push(self.get(l, h));
            }
        }
        HiMatrix::new(self.n_heads, self.n_layers, scores, self.n_units).expect("consistent shape")
    }

    /// Mean of per-unit IoU grids, accumulated in the given order.
    pub fn from_unit_grids(n_layers: usize, n_heads: usize, grids: &[Vec<f64>]) -> Result<Self> {
        if grids.is_empty() {
            return Err(Error::InvalidInput("no scoring units".into()));
        }
        let mut sum = vec![0.0; n_layers * n_heads];
        for g in grids {
            if g.len() != sum.len() {
                return Err(Error::InvalidInput("unit grid shape mismatch".into()));
            }
            for (s, v) in sum.iter_mut().zip(g) {
                *s += v;
            }
        }
        let n = grids.len() as f64;
        HiMatrix::new(
            n_layers,
            n_heads,
            sum.into_iter().map(|s| s / n).collect(),
            grids.len(),
        )
    }
}

/// Per-head IoU for one `(layout, record)` pair against the token mask of
/// the captioned object.
pub fn unit_iou_grid(
    record: &AttentionRecord,
    layout: &PromptLayout,
    token_mask: &super::TokenMask,
) -> Result<Vec<f64>> {
    let grid = extract_caption_attention(record, layout)?;
    let mut out = Vec::with_capacity(grid.n_layers * grid.n_heads);
    for l in 0..grid.n_layers {
        for h in 0..grid.n_heads {
            let bin = binarize(grid.head(l, h), grid.rows, grid.cols)?;
            out.push(iou(&bin, token_mask)?);
        }
    }
    Ok(out)
}

/// Scores every `(sample, object)` unit and averages. Units are processed in
/// `(sample id, object index)` order regardless of input order, so the
/// result is bit-identical under any permutation of `samples`.
pub fn head_impact(
    weights: &ModelWeights,
    vocab: &Vocab,
    samples: &[&Sample],
    tau: f64,
) -> Result<HiMatrix> {
    if samples.is_empty() {
        return Err(Error::InvalidInput(
            "head impact needs at least one sample".into(),
        ));
    }
    let config = &weights.config;
    let mut ordered: Vec<&Sample> = samples.to_vec();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    let mut grids = Vec::new();
    for sample in ordered {
        for (k, object) in sample.objects.iter().enumerate() {
            let ctx = || format!("sample {} object {k}", sample.id);
            let layout = caption_prompt(vocab, config, &object.caption).context(ctx)?;
            let out = forward(weights, &layout, &sample.image, true).context(ctx)?;
            let record = out.attention.expect("attention requested");
            let token_mask = project_mask(&object.mask, config.patch_size, tau).context(ctx)?;
            grids.push(unit_iou_grid(&record, &layout, &token_mask).context(ctx)?);
        }
    }
    HiMatrix::from_unit_grids(config.n_layers, config.n_heads, &grids)
}
