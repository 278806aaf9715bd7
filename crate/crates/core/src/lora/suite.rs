use serde::{Deserialize, Serialize};

use super::adapter::{
    attach_lora, count_params, AdaptedModel, ParamCount, DEFAULT_ALPHA, DEFAULT_RANK,
};
use crate::error::{Error, Result, ResultExt};
use crate::impact::Rankings;
use crate::model::ModelWeights;
use crate::train::{train, TrainConfig, TrainHistory, Trainable};
use crate::units::Unit;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoraConfig {
    pub rank: usize,
    pub alpha: f64,
}

impl Default for LoraConfig {
    fn default() -> Self {
        LoraConfig {
            rank: DEFAULT_RANK,
            alpha: DEFAULT_ALPHA,
        }
    }
}

/// A quarter of the layers, at least one.
pub fn default_k(n_layers: usize) -> usize {
    (n_layers / 4).max(1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetupKind {
    Original,
    Top,
    Bottom,
    Random,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSetup {
    pub name: String,
    pub kind: SetupKind,
    pub layers: Vec<usize>,
}

/// `original`, `top-k`, `bottom-k`, `random-k`, `full`, in that order.
pub fn build_setups(rankings: &Rankings, n_layers: usize) -> Vec<ExperimentSetup> {
    let k = rankings.k;
    let setup = |name: String, kind, layers: &[usize]| ExperimentSetup {
        name,
        kind,
        layers: layers.to_vec(),
    };
    vec![
        setup("original".into(), SetupKind::Original, &[]),
        setup(format!("top-{k}"), SetupKind::Top, &rankings.top),
        setup(format!("bottom-{k}"), SetupKind::Bottom, &rankings.bottom),
        setup(format!("random-{k}"), SetupKind::Random, &rankings.random),
        setup(
            "full".into(),
            SetupKind::Full,
            &(0..n_layers).collect::<Vec<_>>(),
        ),
    ]
}

#[derive(Clone, Debug)]
pub struct SetupOutcome {
    pub setup: ExperimentSetup,
    pub model: AdaptedModel,
    pub params: ParamCount,
    /// `None` for the untrained original model.
    pub history: Option<TrainHistory>,
}

/// Fine-tunes one adapted copy of `base` per setup. Every setup shares the
/// adapter seed and the batch order.
pub fn run_setup_suite(
    base: &ModelWeights,
    setups: &[ExperimentSetup],
    train_units: &[Unit],
    val_units: &[Unit],
    train_config: &TrainConfig,
    lora: &LoraConfig,
    seed: u64,
) -> Result<Vec<SetupOutcome>> {
    let mut out = Vec::with_capacity(setups.len());
    for setup in setups {
        out.push(run_setup(
            base,
            setup,
            train_units,
            val_units,
            train_config,
            lora,
            seed,
        )?);
    }
    Ok(out)
}

pub(crate) fn run_setup(
    base: &ModelWeights,
    setup: &ExperimentSetup,
    train_units: &[Unit],
    val_units: &[Unit],
    train_config: &TrainConfig,
    lora: &LoraConfig,
    seed: u64,
) -> Result<SetupOutcome> {
    if setup.kind == SetupKind::Original {
        let model = AdaptedModel::plain(base.clone());
        return Ok(SetupOutcome {
            setup: setup.clone(),
            params: count_params(&model),
            model,
            history: None,
        });
    }
    if setup.layers.is_empty() {
        return Err(Error::Config(format!(
            "setup {} selects no layers",
            setup.name
        )));
    }
    log::info!("fine-tuning {} on layers {:?}", setup.name, setup.layers);
    let mut model = attach_lora(base.clone(), &setup.layers, lora.rank, lora.alpha, seed)?;
    let history = train(
        &mut model,
        Trainable::Adapters,
        train_units,
        val_units,
        train_config,
        seed,
    )
    .context(|| format!("fine-tuning setup {}", setup.name))?;
    Ok(SetupOutcome {
        setup: setup.clone(),
        params: count_params(&model),
        model,
        history: Some(history),
    })
}
