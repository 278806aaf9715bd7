use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::data::RgbImage;
use crate::error::{Error, Result};
use crate::model::{
    forward_with_deltas, read_checkpoint, write_checkpoint, ForwardOutput, LowRankDelta,
    ModelWeights, Projection, PromptLayout,
};
use crate::rng::Rng;

pub const DEFAULT_RANK: usize = 8;
pub const DEFAULT_ALPHA: f64 = 16.0;
pub const A_INIT_STD: f64 = 0.02;

/// Low-rank update `(alpha / rank) · B · A` of one attention projection.
#[derive(Clone, Debug, PartialEq)]
pub struct LoraAdapter {
    pub layer: usize,
    pub projection: Projection,
    /// `(rank, d_in)`
    pub a: Tensor,
    /// `(d_out, rank)`
    pub b: Tensor,
    pub rank: usize,
    pub alpha: f64,
}

impl LoraAdapter {
    pub fn scale(&self) -> f64 {
        self.alpha / self.rank as f64
    }

    pub fn num_params(&self) -> usize {
        self.a.len() + self.b.len()
    }

    /// Dense `(d_in, d_out)` update in the same layout as the base weight.
    pub fn delta(&self) -> Result<Tensor> {
        let ba = self.b.matmul(&self.a)?;
        Ok(ba.transpose()?.map(|v| v * self.scale()))
    }
}

/// A frozen base model plus zero or more adapters. Adapters are never merged
/// into the base weights.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptedModel {
    pub base: ModelWeights,
    pub adapters: Vec<LoraAdapter>,
}

impl AdaptedModel {
    pub fn plain(base: ModelWeights) -> Self {
        AdaptedModel {
            base,
            adapters: Vec::new(),
        }
    }

    pub fn deltas(&self) -> Vec<LowRankDelta<'_>> {
        self.adapters
            .iter()
            .map(|a| LowRankDelta {
                layer: a.layer,
                projection: a.projection,
                a: &a.a,
                b: &a.b,
                scale: a.scale(),
            })
            .collect()
    }

    pub fn forward(
        &self,
        layout: &PromptLayout,
        image: &RgbImage,
        record: bool,
    ) -> Result<ForwardOutput> {
        forward_with_deltas(&self.base, &self.deltas(), layout, image, record)
    }

    /// Layers carrying adapters, ascending.
    pub fn adapted_layers(&self) -> Vec<usize> {
        let mut l: Vec<usize> = self.adapters.iter().map(|a| a.layer).collect();
        l.sort_unstable();
        l.dedup();
        l
    }
}

/// Attaches rank-`rank` adapters to the query, key, and value projections of
/// each listed layer. `A ~ N(0, 0.02²)`, `B = 0`, so the adapted model starts
/// out identical to the base.
pub fn attach_lora(
    base: ModelWeights,
    layers: &[usize],
    rank: usize,
    alpha: f64,
    seed: u64,
) -> Result<AdaptedModel> {
    let n_layers = base.config.n_layers;
    if rank == 0 {
        return Err(Error::InvalidInput("LoRA rank must be positive".into()));
    }
    for (i, &l) in layers.iter().enumerate() {
        if l >= n_layers {
            return Err(Error::InvalidInput(format!(
                "layer {l} out of range ({n_layers} layers)"
            )));
        }
        if layers[..i].contains(&l) {
            return Err(Error::InvalidInput(format!("duplicate layer index {l}")));
        }
    }
    let d = base.config.d_model;
    let mut rng = Rng::derive(seed, 0x10_7a);
    let mut adapters = Vec::with_capacity(layers.len() * 3);
    for &layer in layers {
        for projection in Projection::ALL {
            adapters.push(LoraAdapter {
                layer,
                projection,
                a: Tensor::randn(&[rank, d], A_INIT_STD, &mut rng),
                b: Tensor::zeros(&[d, rank]),
                rank,
                alpha,
            });
        }
    }
    Ok(AdaptedModel { base, adapters })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamCount {
    pub total: usize,
    pub trainable: usize,
    pub percent: f64,
}

/// Parameter accounting of an adapter setup: every adapter contributes
/// `rank · (d_in + d_out)` trainable parameters, base weights none.
pub fn count_params(model: &AdaptedModel) -> ParamCount {
    let trainable: usize = model.adapters.iter().map(|a| a.num_params()).sum();
    let total = model.base.num_params() + trainable;
    ParamCount {
        total,
        trainable,
        percent: 100.0 * trainable as f64 / total as f64,
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdapterHeader {
    rank: usize,
    alpha: f64,
    targets: Vec<(usize, Projection)>,
}

fn adapter_name(a: &LoraAdapter, factor: &str) -> String {
    format!(
        "adapters.{}.{}.{factor}",
        a.layer,
        a.projection.short_name()
    )
}

/// Writes the base tensors followed by each adapter's `A` and `B`, with the
/// adapter list recorded in the header's `adapters` section.
pub fn save_adapted(model: &AdaptedModel, path: &Path) -> Result<()> {
    let mut tensors = model.base.named_tensors();
    for a in &model.adapters {
        tensors.push((adapter_name(a, "A"), &a.a));
        tensors.push((adapter_name(a, "B"), &a.b));
    }
    let header = AdapterHeader {
        rank: model.adapters.first().map_or(0, |a| a.rank),
        alpha: model.adapters.first().map_or(0.0, |a| a.alpha),
        targets: model
            .adapters
            .iter()
            .map(|a| (a.layer, a.projection))
            .collect(),
    };
    write_checkpoint(
        path,
        &model.base.config,
        &tensors,
        Some(serde_json::to_value(header)?),
    )
}

pub fn load_adapted(path: &Path) -> Result<AdaptedModel> {
    let mut ckpt = read_checkpoint(path)?;
    let header: AdapterHeader = match ckpt.adapters.take() {
        Some(v) => serde_json::from_value(v).map_err(|e| Error::format(path, e.to_string()))?,
        None => {
            return Ok(AdaptedModel::plain(
                ModelWeights::from_named(ckpt.config, ckpt.tensors)
                    .map_err(|e| Error::format(path, e.to_string()))?,
            ))
        }
    };
    let n_adapter = header.targets.len() * 2;
    if ckpt.tensors.len() < n_adapter {
        return Err(Error::format(path, "fewer tensors than adapters"));
    }
    let adapter_tensors = ckpt.tensors.split_off(ckpt.tensors.len() - n_adapter);
    let base = ModelWeights::from_named(ckpt.config, ckpt.tensors)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let d = base.config.d_model;
    let mut adapters = Vec::with_capacity(header.targets.len());
    for (&(layer, projection), pair) in header.targets.iter().zip(adapter_tensors.chunks(2)) {
        let (a, b) = (pair[0].1.clone(), pair[1].1.clone());
        if a.shape() != [header.rank, d]
            || b.shape() != [d, header.rank]
            || layer >= base.config.n_layers
        {
            return Err(Error::format(
                path,
                format!("adapter {} has inconsistent shape", pair[0].0),
            ));
        }
        adapters.push(LoraAdapter {
            layer,
            projection,
            a,
            b,
            rank: header.rank,
            alpha: header.alpha,
        });
    }
    Ok(AdaptedModel { base, adapters })
}
