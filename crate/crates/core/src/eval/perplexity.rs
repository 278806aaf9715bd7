use serde::{Deserialize, Serialize};

use super::scorer::{log_prob, LogitModel};
use crate::error::{Error, Result};
use crate::units::Unit;

/// Token probabilities below this are clamped before taking the log.
pub const MIN_PROB: f64 = 1e-300;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerplexityResult {
    pub perplexity: f64,
    pub se: f64,
    pub mean_nll: f64,
    pub n_units: usize,
    pub n_tokens: usize,
    /// Tokens whose probability hit the clamp.
    pub clamped: usize,
}

/// `exp` of the mean per-unit NLL, with the delta-method standard error
/// `ppl · sd(m) / √N` (sample standard deviation; 0 for a single unit).
pub fn perplexity_from_unit_nll(unit_nll: &[f64]) -> Result<(f64, f64)> {
    if unit_nll.is_empty() {
        return Err(Error::InvalidInput("perplexity of zero units".into()));
    }
    let n = unit_nll.len() as f64;
    let mean = unit_nll.iter().sum::<f64>() / n;
    let ppl = mean.exp();
    let sd = if unit_nll.len() > 1 {
        (unit_nll.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok((ppl, ppl * sd / n.sqrt()))
}

/// Mean NLL of each unit's target tokens, plus the number of clamped tokens.
pub fn unit_nll<M: LogitModel + ?Sized>(model: &M, unit: &Unit) -> Result<(f64, usize, usize)> {
    let targets = unit.layout.targets();
    if targets.is_empty() {
        return Err(Error::InvalidInput(format!(
            "unit {}/{} has no target tokens",
            unit.sample_id, unit.object
        )));
    }
    let logits = model.logits(unit)?;
    let v = model.vocab_size();
    let mut clamped = 0;
    let mut total = 0.0;
    for &(row, class) in &targets {
        let lp = log_prob(&logits.data()[row * v..(row + 1) * v], class);
        let lp = if lp.is_nan() {
            return Err(Error::NonFinite(format!(
                "log-probability in unit {}",
                unit.sample_id
            )));
        } else if lp < MIN_PROB.ln() {
            clamped += 1;
            MIN_PROB.ln()
        } else {
            lp
        };
        total -= lp;
    }
    Ok((total / targets.len() as f64, targets.len(), clamped))
}

pub fn perplexity<M: LogitModel + ?Sized>(model: &M, units: &[Unit]) -> Result<PerplexityResult> {
    let mut nll = Vec::with_capacity(units.len());
    let (mut n_tokens, mut clamped) = (0, 0);
    for u in units {
        let (m, t, c) = unit_nll(model, u)?;
        nll.push(m);
        n_tokens += t;
        clamped += c;
    }
    let (perplexity, se) = perplexity_from_unit_nll(&nll)?;
    if clamped > 0 {
        log::warn!("{clamped} token probabilities clamped at {MIN_PROB:e}");
    }
    Ok(PerplexityResult {
        perplexity,
        se,
        mean_nll: nll.iter().sum::<f64>() / nll.len() as f64,
        n_units: units.len(),
        n_tokens,
        clamped,
    })
}
