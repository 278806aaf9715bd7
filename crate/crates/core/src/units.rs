//! Per-(sample, object) prompt units shared by training and evaluation.

use crate::autodiff::Tensor;
use crate::data::{draw_distractors, Sample};
use crate::error::Result;
use crate::model::{assemble_prompt, patchify, ModelConfig, PromptLayout, PromptMode, Vocab};
use crate::rng::Rng;

/// One key object of one sample, rendered into a prompt.
#[derive(Clone, Debug, PartialEq)]
pub struct Unit {
    pub sample_id: String,
    pub object: usize,
    pub layout: PromptLayout,
    pub patches: Tensor,
}

/// Captioning units in sample order, objects in sample order.
pub fn caption_units(
    vocab: &Vocab,
    config: &ModelConfig,
    samples: &[&Sample],
) -> Result<Vec<Unit>> {
    let mut out = Vec::new();
    for s in samples {
        let (patches, _) = patchify(&s.image, config)?;
        for k in 0..s.objects.len() {
            out.push(Unit {
                sample_id: s.id.clone(),
                object: k,
                layout: assemble_prompt(vocab, config, s, k, &PromptMode::Caption)?,
                patches: patches.clone(),
            });
        }
    }
    Ok(out)
}

/// Four-way question for one object: three distractors from `pool` plus the
/// true caption at a uniformly drawn position. Returns the options and the
/// index of the correct one.
pub fn vqa_options(
    sample: &Sample,
    object: usize,
    pool: &[String],
    rng: &mut Rng,
) -> Result<(Vec<String>, usize)> {
    let mut options = draw_distractors(sample, object, pool, rng, 3)?;
    let correct = rng.below(4);
    options.insert(correct, sample.objects[object].caption.clone());
    Ok((options, correct))
}

/// Question units, drawing options from one `rng` stream in unit order.
pub fn vqa_units(
    vocab: &Vocab,
    config: &ModelConfig,
    samples: &[&Sample],
    pool: &[String],
    rng: &mut Rng,
) -> Result<Vec<Unit>> {
    let mut out = Vec::new();
    for s in samples {
        let (patches, _) = patchify(&s.image, config)?;
        for k in 0..s.objects.len() {
            let (options, correct) = vqa_options(s, k, pool, rng)?;
            out.push(Unit {
                sample_id: s.id.clone(),
                object: k,
                layout: assemble_prompt(
                    vocab,
                    config,
                    s,
                    k,
                    &PromptMode::Vqa { options, correct },
                )?,
                patches: patches.clone(),
            });
        }
    }
    Ok(out)
}
