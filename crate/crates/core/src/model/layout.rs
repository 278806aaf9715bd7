use std::ops::Range;

use super::vocab::{self, Vocab, OPTION_LABELS};
use super::ModelConfig;
use crate::data::Sample;
use crate::error::{Error, Result};

/// User turn of the captioning prompt.
pub const CAPTION_QUESTION: &str = "what is this photo";
/// Assistant prefix preceding the object description.
pub const CAPTION_PREFIX: &str = "this is a photo of";
/// User turn of the closed-ended question prompt (options follow it).
pub const VQA_QUESTION: &str = "what is shown in this photo choose one of the options";

#[derive(Clone, Debug, PartialEq)]
pub enum PromptMode {
    /// Assistant answers "this is a photo of {caption}".
    Caption,
    /// Four options with the assistant answering the label of `correct`.
    Vqa {
        options: Vec<String>,
        correct: usize,
    },
}

/// A token sequence plus the index ranges the interpretability and loss
/// code need.
#[derive(Clone, Debug, PartialEq)]
pub struct PromptLayout {
    pub tokens: Vec<usize>,
    /// Visual placeholder positions.
    pub visual: Range<usize>,
    /// User turn (including the user marker).
    pub user: Range<usize>,
    /// Object description tokens in the assistant turn; empty in VQA mode.
    pub caption: Range<usize>,
    /// Position of the answer label token in VQA mode.
    pub label: Option<usize>,
    /// Index (0..4) of the correct option in VQA mode.
    pub correct_option: Option<usize>,
    pub grid: (usize, usize),
}

impl PromptLayout {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// `(logit row, target token)` pairs scored by the training loss and by
    /// perplexity: every caption token in caption mode, the answer label in
    /// VQA mode. The token at position `p` is predicted from row `p - 1`.
    pub fn targets(&self) -> Vec<(usize, usize)> {
        match self.label {
            Some(p) => vec![(p - 1, self.tokens[p])],
            None => self
                .caption
                .clone()
                .map(|p| (p - 1, self.tokens[p]))
                .collect(),
        }
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        let n = self.tokens.len();
        let bad = |m: String| Err(Error::Layout(m));
        if n > config.max_seq_len {
            return bad(format!(
                "sequence length {n} exceeds max_seq_len {}",
                config.max_seq_len
            ));
        }
        if self.grid != config.grid() || self.visual.len() != config.visual_tokens() {
            return bad(format!(
                "visual range {:?} does not match grid {:?}",
                self.visual,
                config.grid()
            ));
        }
        if self.visual.start == 0 || self.visual.end > self.user.start || self.user.end > n {
            return bad("ranges out of order".into());
        }
        if !self.caption.is_empty() && (self.caption.start < self.user.end || self.caption.end > n)
        {
            return bad("caption range out of bounds".into());
        }
        match self.label {
            Some(p) if p <= self.user.end || p >= n => bad(format!("label position {p} invalid")),
            None if self.caption.is_empty() => bad("empty caption range".into()),
            _ => Ok(()),
        }
    }
}

fn begin(vocab: &Vocab, config: &ModelConfig) -> Result<(Vec<usize>, Range<usize>)> {
    let mut tokens = vec![vocab.id(vocab::BOS)?];
    let start = tokens.len();
    tokens.extend(std::iter::repeat(vocab.id(vocab::IMG)?).take(config.visual_tokens()));
    Ok((tokens, start..start + config.visual_tokens()))
}

fn finish(config: &ModelConfig, layout: PromptLayout) -> Result<PromptLayout> {
    if layout.tokens.len() > config.max_seq_len {
        return Err(Error::Layout(format!(
            "sequence length {} exceeds max_seq_len {}",
            layout.tokens.len(),
            config.max_seq_len
        )));
    }
    Ok(layout)
}

/// `<bos> <img>×N <user> what is this photo <assistant> this is a photo of {caption} <eos>`
pub fn caption_prompt(vocab: &Vocab, config: &ModelConfig, caption: &str) -> Result<PromptLayout> {
    let described = vocab.tokenize(caption)?;
    if described.is_empty() {
        return Err(Error::Layout("empty caption".into()));
    }
    let (mut tokens, visual) = begin(vocab, config)?;
    let user_start = tokens.len();
    tokens.push(vocab.id(vocab::USER)?);
    tokens.extend(vocab.tokenize(CAPTION_QUESTION)?);
    let user = user_start..tokens.len();
    tokens.push(vocab.id(vocab::ASSISTANT)?);
    tokens.extend(vocab.tokenize(CAPTION_PREFIX)?);
    let cap_start = tokens.len();
    tokens.extend(described);
    let caption = cap_start..tokens.len();
    tokens.push(vocab.id(vocab::EOS)?);
    finish(
        config,
        PromptLayout {
            tokens,
            visual,
            user,
            caption,
            label: None,
            correct_option: None,
            grid: config.grid(),
        },
    )
}

/// `<bos> <img>×N <user> {question} A {opt} B {opt} C {opt} D {opt} <assistant> {label} <eos>`
pub fn vqa_prompt(
    vocab: &Vocab,
    config: &ModelConfig,
    options: &[String],
    correct: usize,
) -> Result<PromptLayout> {
    if options.len() != 4 || correct >= 4 {
        return Err(Error::Layout(format!(
            "need exactly 4 options and a correct index below 4, got {} options and {correct}",
            options.len()
        )));
    }
    let (mut tokens, visual) = begin(vocab, config)?;
    let user_start = tokens.len();
    tokens.push(vocab.id(vocab::USER)?);
    tokens.extend(vocab.tokenize(VQA_QUESTION)?);
    for (label, option) in OPTION_LABELS.iter().zip(options) {
        tokens.push(vocab.id(label)?);
        tokens.extend(vocab.tokenize(option)?);
    }
    let user = user_start..tokens.len();
    tokens.push(vocab.id(vocab::ASSISTANT)?);
    let label = tokens.len();
    tokens.push(vocab.id(OPTION_LABELS[correct])?);
    tokens.push(vocab.id(vocab::EOS)?);
    finish(
        config,
        PromptLayout {
            tokens,
            visual,
            user,
            caption: label..label,
            label: Some(label),
            correct_option: Some(correct),
            grid: config.grid(),
        },
    )
}

/// Builds the prompt for one key object of `sample`.
///
/// In VQA mode the options must contain the object's caption exactly once.
pub fn assemble_prompt(
    vocab: &Vocab,
    config: &ModelConfig,
    sample: &Sample,
    object_index: usize,
    mode: &PromptMode,
) -> Result<PromptLayout> {
    let object = sample.objects.get(object_index).ok_or_else(|| {
        Error::Layout(format!(
            "object {object_index} out of range for sample {} with {} objects",
            sample.id,
            sample.objects.len()
        ))
    })?;
    match mode {
        PromptMode::Caption => caption_prompt(vocab, config, &object.caption),
        PromptMode::Vqa { options, correct } => {
            let hits = options.iter().filter(|o| **o == object.caption).count();
            if hits != 1 || options.get(*correct) != Some(&object.caption) {
                return Err(Error::Layout(format!(
                    "options must contain `{}` exactly once at the correct index",
                    object.caption
                )));
            }
            vqa_prompt(vocab, config, options, *correct)
        }
    }
}
