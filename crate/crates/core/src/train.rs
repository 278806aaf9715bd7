//! Mini-batch Adam training with validation-based checkpoint selection,
//! shared by pretraining and adapter fine-tuning.

use serde::{Deserialize, Serialize};

use crate::autodiff::{adam_step, AdamConfig, AdamState, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::lora::AdaptedModel;
use crate::model::{build_forward, forward_patches, DeltaVars, WeightVars};
use crate::rng::Rng;
use crate::units::Unit;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Global gradient-norm ceiling; non-positive disables clipping.
    pub clip_norm: f64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 8,
            lr: 1e-3,
            clip_norm: 1.0,
            patience: 3,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        Ok(())
    }
}

/// Which tensors receive updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trainable {
    /// Base weights and any adapters.
    All,
    /// Adapters only; base weights stay bit-identical.
    Adapters,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub initial_val_loss: Option<f64>,
    pub epochs: Vec<EpochLog>,
    /// Epoch whose weights were kept; 0 means the starting weights.
    pub best_epoch: usize,
    pub best_val_loss: Option<f64>,
    pub steps: usize,
    pub stopped_early: bool,
}

/// Mean token cross-entropy of one unit.
pub fn unit_loss(model: &AdaptedModel, unit: &Unit) -> Result<f64> {
    let out = forward_patches(
        &model.base,
        &model.deltas(),
        &unit.layout,
        &unit.patches,
        false,
    )?;
    let logits = out.logits;
    let targets = unit.layout.targets();
    let v = logits.shape()[1];
    let mut total = 0.0;
    for &(row, class) in &targets {
        let r = &logits.data()[row * v..(row + 1) * v];
        let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + r.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        total += lse - r[class];
    }
    Ok(total / targets.len() as f64)
}

/// Unit-averaged loss; `None` for an empty set.
pub fn mean_loss(model: &AdaptedModel, units: &[Unit]) -> Result<Option<f64>> {
    if units.is_empty() {
        return Ok(None);
    }
    let mut total = 0.0;
    for u in units {
        total += unit_loss(model, u)?;
    }
    Ok(Some(total / units.len() as f64))
}

fn params_mut(model: &mut AdaptedModel, which: Trainable) -> Vec<&mut Tensor> {
    let mut out = match which {
        Trainable::All => model.base.tensors_mut(),
        Trainable::Adapters => Vec::new(),
    };
    for a in &mut model.adapters {
        out.push(&mut a.a);
        out.push(&mut a.b);
    }
    out
}

fn snapshot(model: &mut AdaptedModel, which: Trainable) -> Vec<Tensor> {
    params_mut(model, which)
        .into_iter()
        .map(|t| t.clone())
        .collect()
}

fn restore(model: &mut AdaptedModel, which: Trainable, saved: Vec<Tensor>) {
    for (dst, src) in params_mut(model, which).into_iter().zip(saved) {
        *dst = src;
    }
}

/// Batch-mean loss and gradients in `params_mut` order.
pub fn batch_gradients(
    model: &AdaptedModel,
    which: Trainable,
    batch: &[&Unit],
) -> Result<(f64, Vec<Tensor>)> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let mut tape = Tape::new();
    let vars = WeightVars::register(&mut tape, &model.base, which == Trainable::All);
    let deltas: Vec<DeltaVars> = model
        .adapters
        .iter()
        .map(|a| DeltaVars {
            layer: a.layer,
            projection: a.projection,
            a: tape.leaf_ref(&a.a, true),
            b: tape.leaf_ref(&a.b, true),
            scale: a.scale(),
        })
        .collect();
    let mut total: Option<Var> = None;
    for unit in batch {
        let patches = tape.leaf_ref(&unit.patches, false);
        let out = build_forward(
            &mut tape,
            &model.base.config,
            &vars,
            &deltas,
            &unit.layout,
            patches,
            false,
        )?;
        let loss = tape.cross_entropy(out.logits, &unit.layout.targets())?;
        total = Some(match total {
            Some(t) => tape.add(t, loss)?,
            None => loss,
        });
    }
    let loss = tape.scale(total.expect("non-empty batch"), 1.0 / batch.len() as f64)?;
    let value = tape.value(loss).data()[0];
    let mut grads = tape.backward(loss)?;
    let mut order = match which {
        Trainable::All => vars.in_order(),
        Trainable::Adapters => Vec::new(),
    };
    for d in &deltas {
        order.extend([d.a, d.b]);
    }
    let out = order
        .into_iter()
        .map(|v| {
            grads
                .take(v)
                .unwrap_or_else(|| Tensor::zeros(tape.value(v).shape()))
        })
        .collect();
    Ok((value, out))
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

/// Trains `model` in place and leaves it at the best validation checkpoint
/// (the starting weights count as epoch 0). With no validation units the
/// final weights are kept.
pub fn train(
    model: &mut AdaptedModel,
    which: Trainable,
    train_units: &[Unit],
    val_units: &[Unit],
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainHistory> {
    config.validate()?;
    let initial_val_loss = mean_loss(model, val_units)?;
    let mut history = TrainHistory {
        initial_val_loss,
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_loss: initial_val_loss,
        steps: 0,
        stopped_early: false,
    };
    let n_params = params_mut(model, which).len();
    if n_params == 0 || train_units.is_empty() || config.epochs == 0 {
        return Ok(history);
    }
    let adam = AdamConfig {
        lr: config.lr,
        ..AdamConfig::default()
    };
    let mut state = AdamState::new(adam, snapshot(model, which).iter());
    let mut best = snapshot(model, which);
    let mut rng = Rng::derive(seed, 0x7_2a1);
    let mut order: Vec<usize> = (0..train_units.len()).collect();
    let mut stale = 0;
    'epochs: for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut n_batches = 0;
        for chunk in order.chunks(config.batch_size) {
            if config.max_steps.is_some_and(|m| history.steps >= m) {
                break;
            }
            let batch: Vec<&Unit> = chunk.iter().map(|&i| &train_units[i]).collect();
            let (loss, mut grads) = batch_gradients(model, which, &batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss at step {} (epoch {epoch})",
                    history.steps + 1
                )));
            }
            clip_global_norm(&mut grads, config.clip_norm);
            adam_step(&mut params_mut(model, which), &grads, &mut state)?;
            history.steps += 1;
            loss_sum += loss;
            n_batches += 1;
        }
        if n_batches == 0 {
            break;
        }
        let val_loss = mean_loss(model, val_units)?;
        log::info!(
            "epoch {epoch}: train {:.4} val {}",
            loss_sum / n_batches as f64,
            val_loss.map_or("-".into(), |v| format!("{v:.4}"))
        );
        history.epochs.push(EpochLog {
            epoch,
            train_loss: loss_sum / n_batches as f64,
            val_loss,
            steps: history.steps,
        });
        match (val_loss, history.best_val_loss) {
            (Some(v), Some(b)) if v < b => {
                history.best_val_loss = Some(v);
                history.best_epoch = epoch;
                best = snapshot(model, which);
                stale = 0;
            }
            (Some(_), _) => {
                stale += 1;
                if config.patience > 0 && stale >= config.patience {
                    history.stopped_early = true;
                    break 'epochs;
                }
            }
            (None, _) => history.best_epoch = epoch,
        }
        if config.max_steps.is_some_and(|m| history.steps >= m) {
            break;
        }
    }
    if val_units.is_empty() {
        return Ok(history);
    }
    restore(model, which, best);
    Ok(history)
}
