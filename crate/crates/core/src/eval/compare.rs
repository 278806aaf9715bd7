use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::perplexity::{perplexity, PerplexityResult};
use super::scorer::LogitModel;
use super::vqa::{score_vqa_units, VqaResult};
use crate::error::{Error, Result};
use crate::model::Vocab;
use crate::units::Unit;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub setup: String,
    pub perplexity: f64,
    pub perplexity_se: f64,
    pub accuracy: f64,
    pub ans_prob: f64,
    pub ans_prob_se: f64,
    pub n_caption_units: usize,
    pub n_question_units: usize,
    pub clamped_tokens: usize,
}

impl EvalResult {
    pub fn from_parts(setup: &str, p: &PerplexityResult, q: &VqaResult) -> Self {
        EvalResult {
            setup: setup.to_string(),
            perplexity: p.perplexity,
            perplexity_se: p.se,
            accuracy: q.accuracy,
            ans_prob: q.ans_prob,
            ans_prob_se: q.ans_prob_se,
            n_caption_units: p.n_units,
            n_question_units: q.n_units,
            clamped_tokens: p.clamped,
        }
    }
}

/// Caption perplexity plus question accuracy of one model.
pub fn evaluate<M: LogitModel + ?Sized>(
    setup: &str,
    model: &M,
    vocab: &Vocab,
    caption_units: &[Unit],
    question_units: &[Unit],
) -> Result<EvalResult> {
    let p = perplexity(model, caption_units)?;
    let q = score_vqa_units(model, vocab, question_units)?;
    Ok(EvalResult::from_parts(setup, &p, &q))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Perplexity,
    Accuracy,
    AnsProb,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Perplexity, Metric::Accuracy, Metric::AnsProb];

    pub fn of(self, r: &EvalResult) -> f64 {
        match self {
            Metric::Perplexity => r.perplexity,
            Metric::Accuracy => r.accuracy,
            Metric::AnsProb => r.ans_prob,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Perplexity => "perplexity",
            Metric::Accuracy => "accuracy",
            Metric::AnsProb => "ans_prob",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub result: EvalResult,
    /// `setup − baseline` for perplexity, accuracy, ans_prob.
    pub deltas: [f64; 3],
    /// Metrics on which this setup has the largest |Δ|.
    pub flagged: Vec<Metric>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: String,
    pub rows: Vec<ComparisonRow>,
}

/// Deltas of every setup against `baseline`. For each metric the setup with
/// the largest nonzero |Δ| is flagged; the first one listed wins ties.
pub fn compare_setups(results: &[EvalResult], baseline: &str) -> Result<Comparison> {
    let base = results
        .iter()
        .find(|r| r.setup == baseline)
        .ok_or_else(|| {
            Error::InvalidInput(format!("baseline setup `{baseline}` missing from results"))
        })?;
    let mut rows: Vec<ComparisonRow> = results
        .iter()
        .map(|r| ComparisonRow {
            result: r.clone(),
            deltas: Metric::ALL.map(|m| m.of(r) - m.of(base)),
            flagged: Vec::new(),
        })
        .collect();
    for (i, metric) in Metric::ALL.into_iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (j, row) in rows.iter().enumerate() {
            let d = row.deltas[i].abs();
            if d > 0.0 && best.is_none_or(|(_, b)| d > b) {
                best = Some((j, d));
            }
        }
        if let Some((j, _)) = best {
            rows[j].flagged.push(metric);
        }
    }
    Ok(Comparison {
        baseline: baseline.to_string(),
        rows,
    })
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "setup,perplexity,perplexity_se,d_perplexity,accuracy,d_accuracy,ans_prob,ans_prob_se,d_ans_prob,flagged\n",
        );
        for row in &self.rows {
            let r = &row.result;
            let flags: Vec<&str> = row.flagged.iter().map(|m| m.name()).collect();
            let _ = writeln!(
                s,
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
                r.setup,
                r.perplexity,
                r.perplexity_se,
                row.deltas[0],
                r.accuracy,
                row.deltas[1],
                r.ans_prob,
                r.ans_prob_se,
                row.deltas[2],
                flags.join(";")
            );
        }
        s
    }

    /// Fixed-width table; `*` marks the largest change per metric.
    pub fn to_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.result.setup.len())
            .max()
            .unwrap_or(5)
            .max(5);
        let mut s = format!(
            "{:<width$}  {:>18}  {:>9}  {:>9}  {:>18}  {:>9}\n",
            "setup", "perplexity", "Δ", "accuracy", "ans_prob", "Δ"
        );
        for row in &self.rows {
            let r = &row.result;
            let mark = |m: Metric| if row.flagged.contains(&m) { "*" } else { " " };
            let _ = writeln!(
                s,
                "{:<width$}  {:>18}  {:>8.3}{}  {:>8.3}{}  {:>18}  {:>8.3}{}",
                r.setup,
                format!("{:.3} ± {:.3}", r.perplexity, r.perplexity_se),
                row.deltas[0],
                mark(Metric::Perplexity),
                r.accuracy,
                mark(Metric::Accuracy),
                format!("{:.3} ± {:.3}", r.ans_prob, r.ans_prob_se),
                row.deltas[2],
                mark(Metric::AnsProb),
            );
        }
        s
    }
}
