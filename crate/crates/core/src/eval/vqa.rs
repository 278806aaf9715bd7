use serde::{Deserialize, Serialize};

use super::scorer::LogitModel;
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Vocab};
use crate::rng::Rng;
use crate::units::{vqa_units, Unit};

const OPTION_STREAM: u64 = 0x0b7_10e5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VqaRecord {
    pub sample_id: String,
    pub object: usize,
    pub correct: usize,
    pub predicted: usize,
    /// Distribution over the four labels A–D.
    pub probs: [f64; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VqaResult {
    pub accuracy: f64,
    pub ans_prob: f64,
    pub ans_prob_se: f64,
    pub n_units: usize,
    pub records: Vec<VqaRecord>,
}

/// Softmax restricted to `label_ids`.
pub fn label_distribution(row: &[f64], label_ids: &[usize; 4]) -> [f64; 4] {
    let z = label_ids.map(|i| row[i]);
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e = z.map(|x| (x - m).exp());
    let s: f64 = e.iter().sum();
    e.map(|x| x / s)
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Scores prebuilt question units.
pub fn score_vqa_units<M: LogitModel + ?Sized>(
    model: &M,
    vocab: &Vocab,
    units: &[Unit],
) -> Result<VqaResult> {
    if units.is_empty() {
        return Err(Error::InvalidInput("no question units".into()));
    }
    let label_ids = vocab.label_ids()?;
    let v = model.vocab_size();
    let mut records = Vec::with_capacity(units.len());
    for u in units {
        let (Some(pos), Some(correct)) = (u.layout.label, u.layout.correct_option) else {
            return Err(Error::InvalidInput(format!(
                "unit {}/{} is not a question",
                u.sample_id, u.object
            )));
        };
        let logits = model.logits(u)?;
        let row = &logits.data()[(pos - 1) * v..pos * v];
        let probs = label_distribution(row, &label_ids);
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!(
                "answer distribution of unit {}",
                u.sample_id
            )));
        }
        records.push(VqaRecord {
            sample_id: u.sample_id.clone(),
            object: u.object,
            correct,
            predicted: argmax(&probs),
            probs,
        });
    }
    Ok(summarize(records))
}

/// Accuracy and mean correct-label probability of per-unit records.
pub fn summarize(records: Vec<VqaRecord>) -> VqaResult {
    let n = records.len() as f64;
    let hits = records.iter().filter(|r| r.predicted == r.correct).count();
    let p: Vec<f64> = records.iter().map(|r| r.probs[r.correct]).collect();
    let mean = p.iter().sum::<f64>() / n;
    let sd = if records.len() > 1 {
        (p.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    VqaResult {
        accuracy: hits as f64 / n,
        ans_prob: mean,
        ans_prob_se: sd / n.sqrt(),
        n_units: records.len(),
        records,
    }
}

/// Builds one four-option question per (sample, object), with distractors and
/// the correct letter drawn from `seed`, and scores them.
pub fn vqa_eval<M: LogitModel + ?Sized>(
    model: &M,
    vocab: &Vocab,
    config: &ModelConfig,
    samples: &[&Sample],
    pool: &[String],
    seed: u64,
) -> Result<VqaResult> {
    let units = question_units(vocab, config, samples, pool, seed)?;
    score_vqa_units(model, vocab, &units)
}

/// The question units [`vqa_eval`] scores for `seed`.
pub fn question_units(
    vocab: &Vocab,
    config: &ModelConfig,
    samples: &[&Sample],
    pool: &[String],
    seed: u64,
) -> Result<Vec<Unit>> {
    vqa_units(
        vocab,
        config,
        samples,
        pool,
        &mut Rng::derive(seed, OPTION_STREAM),
    )
}
