//! Decoder forward pass.
//!
//! Visual placeholder positions receive `patch · W_patch`, text positions a
//! token embedding, and every position adds a learned position embedding.
//! Blocks are pre-norm: `h += attn(ln1(h))`, `h += ffn(ln2(h))`, with fully
//! causal attention over the whole sequence.

use serde::{Deserialize, Serialize};

use super::layout::PromptLayout;
use super::patch::patchify;
use super::weights::{ModelWeights, WeightVars};
use super::ModelConfig;
use crate::autodiff::{Tape, Tensor, Var};
use crate::data::RgbImage;
use crate::error::{Error, Result};

/// Attention projection a low-rank delta can target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Projection {
    Query,
    Key,
    Value,
}

impl Projection {
    pub const ALL: [Projection; 3] = [Projection::Query, Projection::Key, Projection::Value];

    pub fn short_name(self) -> &'static str {
        match self {
            Projection::Query => "q",
            Projection::Key => "k",
            Projection::Value => "v",
        }
    }
}

/// `x · W + scale · (x · Aᵀ) · Bᵀ` contribution for one projection, with
/// `A: (r, d_in)` and `B: (d_out, r)`.
#[derive(Clone, Copy, Debug)]
pub struct LowRankDelta<'a> {
    pub layer: usize,
    pub projection: Projection,
    pub a: &'a Tensor,
    pub b: &'a Tensor,
    pub scale: f64,
}

/// A [`LowRankDelta`] whose factors live on a tape.
#[derive(Clone, Copy, Debug)]
pub struct DeltaVars {
    pub layer: usize,
    pub projection: Projection,
    pub a: Var,
    pub b: Var,
    pub scale: f64,
}

/// Post-softmax attention probabilities, indexed `[layer][head]`, each
/// `(seq_len, seq_len)` with rows as queries.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionRecord {
    pub probs: Vec<Vec<Tensor>>,
}

impl AttentionRecord {
    pub fn n_layers(&self) -> usize {
        self.probs.len()
    }

    pub fn n_heads(&self) -> usize {
        self.probs.first().map_or(0, |l| l.len())
    }

    pub fn get(&self, layer: usize, head: usize) -> &Tensor {
        &self.probs[layer][head]
    }
}

pub struct GraphOutput {
    pub logits: Var,
    /// Attention probability vars `[layer][head]`; empty unless requested.
    pub attention: Vec<Vec<Var>>,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// `(seq_len, vocab_size)` next-token logits.
    pub logits: Tensor,
    pub attention: Option<AttentionRecord>,
}

fn project(tape: &mut Tape<'_>, x: Var, w: Var, delta: Option<&DeltaVars>) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    let Some(d) = delta else { return Ok(y) };
    let at = tape.transpose(d.a)?;
    let bt = tape.transpose(d.b)?;
    let xa = tape.matmul(x, at)?;
    let xab = tape.matmul(xa, bt)?;
    let scaled = tape.scale(xab, d.scale)?;
    tape.add(y, scaled)
}

/// Records the full forward computation on `tape`.
pub fn build_forward(
    tape: &mut Tape<'_>,
    config: &ModelConfig,
    vars: &WeightVars,
    deltas: &[DeltaVars],
    layout: &PromptLayout,
    patches: Var,
    record_attention: bool,
) -> Result<GraphOutput> {
    layout.validate(config)?;
    let n = layout.len();
    let hd = config.head_dim;

    let text = tape.embedding(vars.token_embedding, &layout.tokens)?;
    let visual = tape.matmul(patches, vars.patch_proj)?;
    let mut pieces = Vec::with_capacity(3);
    if layout.visual.start > 0 {
        pieces.push(tape.slice(text, 0, 0, layout.visual.start)?);
    }
    pieces.push(visual);
    if layout.visual.end < n {
        pieces.push(tape.slice(text, 0, layout.visual.end, n - layout.visual.end)?);
    }
    let tokens = tape.concat(&pieces, 0)?;
    let positions = tape.slice(vars.position_embedding, 0, 0, n)?;
    let mut h = tape.add(tokens, positions)?;

    let scale = 1.0 / (hd as f64).sqrt();
    let mut attention = Vec::new();
    for (l, lv) in vars.layers.iter().enumerate() {
        let find = |p: Projection| deltas.iter().find(|d| d.layer == l && d.projection == p);
        let x = tape.layer_norm(h, lv.ln1_gamma, lv.ln1_beta)?;
        let q = project(tape, x, lv.wq, find(Projection::Query))?;
        let k = project(tape, x, lv.wk, find(Projection::Key))?;
        let v = project(tape, x, lv.wv, find(Projection::Value))?;
        let mut heads = Vec::with_capacity(config.n_heads);
        let mut layer_probs = Vec::new();
        for head in 0..config.n_heads {
            let qh = tape.slice(q, 1, head * hd, hd)?;
            let kh = tape.slice(k, 1, head * hd, hd)?;
            let vh = tape.slice(v, 1, head * hd, hd)?;
            let kt = tape.transpose(kh)?;
            let scores = tape.matmul(qh, kt)?;
            let scores = tape.scale(scores, scale)?;
            let probs = tape.causal_softmax(scores)?;
            if record_attention {
                layer_probs.push(probs);
            }
            heads.push(tape.matmul(probs, vh)?);
        }
        if record_attention {
            attention.push(layer_probs);
        }
        let merged = tape.concat(&heads, 1)?;
        let attn_out = tape.matmul(merged, lv.wo)?;
        h = tape.add(h, attn_out)?;

        let x = tape.layer_norm(h, lv.ln2_gamma, lv.ln2_beta)?;
        let up = tape.matmul(x, lv.ffn_in)?;
        let act = tape.gelu(up)?;
        let down = tape.matmul(act, lv.ffn_out)?;
        h = tape.add(h, down)?;
        if !tape.value(h).is_finite() {
            return Err(Error::NonFinite(format!("activations of layer {l}")));
        }
    }
    let x = tape.layer_norm(h, vars.final_gamma, vars.final_beta)?;
    let logits = tape.matmul(x, vars.output_head)?;
    if !tape.value(logits).is_finite() {
        return Err(Error::NonFinite("output logits".into()));
    }
    Ok(GraphOutput { logits, attention })
}

/// Inference forward pass of the base model.
pub fn forward(
    weights: &ModelWeights,
    layout: &PromptLayout,
    image: &RgbImage,
    record_attention: bool,
) -> Result<ForwardOutput> {
    forward_with_deltas(weights, &[], layout, image, record_attention)
}

/// Inference forward pass with low-rank deltas applied to attention
/// projections.
pub fn forward_with_deltas(
    weights: &ModelWeights,
    deltas: &[LowRankDelta<'_>],
    layout: &PromptLayout,
    image: &RgbImage,
    record_attention: bool,
) -> Result<ForwardOutput> {
    let (patches, _) = patchify(image, &weights.config)?;
    forward_patches(weights, deltas, layout, &patches, record_attention)
}

/// Same as [`forward_with_deltas`] for an image already split into patches.
pub fn forward_patches(
    weights: &ModelWeights,
    deltas: &[LowRankDelta<'_>],
    layout: &PromptLayout,
    patches: &Tensor,
    record_attention: bool,
) -> Result<ForwardOutput> {
    let mut tape = Tape::new();
    let vars = WeightVars::register(&mut tape, weights, false);
    let delta_vars: Vec<DeltaVars> = deltas
        .iter()
        .map(|d| DeltaVars {
            layer: d.layer,
            projection: d.projection,
            a: tape.leaf_ref(d.a, false),
            b: tape.leaf_ref(d.b, false),
            scale: d.scale,
        })
        .collect();
    let patches = tape.leaf_ref(patches, false);
    let out = build_forward(
        &mut tape,
        &weights.config,
        &vars,
        &delta_vars,
        layout,
        patches,
        record_attention,
    )?;
    let attention = record_attention.then(|| AttentionRecord {
        probs: out
            .attention
            .iter()
            .map(|l| l.iter().map(|&v| tape.value(v).clone()).collect())
            .collect(),
    });
    Ok(ForwardOutput {
        logits: tape.value(out.logits).clone(),
        attention,
    })
}
