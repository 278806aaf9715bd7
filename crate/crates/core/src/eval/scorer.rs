use crate::autodiff::Tensor;
use crate::error::Result;
use crate::lora::AdaptedModel;
use crate::model::{forward_patches, ModelWeights};
use crate::units::Unit;

/// Anything that maps a prompt unit to `(seq_len, vocab)` next-token logits.
pub trait LogitModel {
    fn vocab_size(&self) -> usize;
    fn logits(&self, unit: &Unit) -> Result<Tensor>;
}

impl LogitModel for ModelWeights {
    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn logits(&self, unit: &Unit) -> Result<Tensor> {
        Ok(forward_patches(self, &[], &unit.layout, &unit.patches, false)?.logits)
    }
}

impl LogitModel for AdaptedModel {
    fn vocab_size(&self) -> usize {
        self.base.config.vocab_size
    }

    fn logits(&self, unit: &Unit) -> Result<Tensor> {
        Ok(forward_patches(
            &self.base,
            &self.deltas(),
            &unit.layout,
            &unit.patches,
            false,
        )?
        .logits)
    }
}

/// Constant logits: every token equally likely at every position.
#[derive(Clone, Copy, Debug)]
pub struct UniformModel {
    pub vocab_size: usize,
}

impl LogitModel for UniformModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn logits(&self, unit: &Unit) -> Result<Tensor> {
        Ok(Tensor::zeros(&[unit.layout.len(), self.vocab_size]))
    }
}

/// Reads the answer off the teacher-forced sequence: row `p` puts a large
/// logit on `tokens[p + 1]`.
#[derive(Clone, Copy, Debug)]
pub struct OracleModel {
    pub vocab_size: usize,
}

impl LogitModel for OracleModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn logits(&self, unit: &Unit) -> Result<Tensor> {
        let n = unit.layout.len();
        let mut t = Tensor::zeros(&[n, self.vocab_size]);
        let v = self.vocab_size;
        for (p, &next) in unit.layout.tokens.iter().enumerate().skip(1) {
            t.data_mut()[(p - 1) * v + next] = 1e3;
        }
        Ok(t)
    }
}

/// `log softmax(row)[class]`.
pub fn log_prob(row: &[f64], class: usize) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    row[class] - lse
}
