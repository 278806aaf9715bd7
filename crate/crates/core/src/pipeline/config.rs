use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::impact::DEFAULT_TAU;
use crate::lora::{default_k, LoraConfig};
use crate::model::{ModelConfig, Vocab};
use crate::train::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "gen-data")]
    Data,
    #[serde(rename = "pretrain")]
    Pretrain,
    #[serde(rename = "hi")]
    Hi,
    #[serde(rename = "finetune")]
    Finetune,
    #[serde(rename = "eval")]
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Data,
        Stage::Pretrain,
        Stage::Hi,
        Stage::Finetune,
        Stage::Eval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Data => "gen-data",
            Stage::Pretrain => "pretrain",
            Stage::Hi => "hi",
            Stage::Finetune => "finetune",
            Stage::Eval => "eval",
        }
    }

    /// Subdirectory of the output root holding this stage's artifacts.
    pub fn dir_name(self) -> &'static str {
        match self {
            Stage::Data => "data",
            other => other.name(),
        }
    }

    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Data => &[],
            Stage::Pretrain => &[Stage::Data],
            Stage::Hi => &[Stage::Data, Stage::Pretrain],
            Stage::Finetune => &[Stage::Data, Stage::Pretrain, Stage::Hi],
            Stage::Eval => &[Stage::Data, Stage::Pretrain, Stage::Finetune],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s || st.dir_name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

/// Everything a run depends on. Loaded from JSON; command-line flags
/// override individual fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub n_samples: usize,
    pub model: ModelConfig,
    pub pretrain: TrainConfig,
    /// Mix four-way question units into pretraining.
    pub pretrain_questions: bool,
    pub finetune: TrainConfig,
    pub lora: LoraConfig,
    /// Layers per HI-ranked setup; defaults to a quarter of the layers.
    pub k: Option<usize>,
    pub tau: f64,
    pub out: PathBuf,
    /// Last stage `run-all` executes.
    pub stage: Option<Stage>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            n_samples: 300,
            model: ModelConfig::default(),
            pretrain: TrainConfig {
                epochs: 40,
                batch_size: 4,
                lr: 1e-3,
                clip_norm: 1.0,
                patience: 6,
                max_steps: None,
            },
            pretrain_questions: false,
            finetune: TrainConfig::default(),
            lora: LoraConfig::default(),
            k: None,
            tau: DEFAULT_TAU,
            out: PathBuf::from("runs/default"),
            stage: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn k(&self) -> usize {
        self.k.unwrap_or_else(|| default_k(self.model.n_layers))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.model.validate()?;
        let vocab = Vocab::standard().len();
        if self.model.vocab_size != vocab {
            return bad(format!(
                "model.vocab_size must be {vocab}, got {}",
                self.model.vocab_size
            ));
        }
        self.pretrain
            .validate()
            .map_err(|e| Error::Config(format!("pretrain: {e}")))?;
        self.finetune
            .validate()
            .map_err(|e| Error::Config(format!("finetune: {e}")))?;
        if self.n_samples < 10 {
            return bad(format!(
                "n_samples must be at least 10, got {}",
                self.n_samples
            ));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        let k = self.k();
        if k == 0 || 3 * k > self.model.n_layers {
            return bad(format!(
                "k = {k} leaves no room for a random selection outside top-k and bottom-k of {} layers",
                self.model.n_layers
            ));
        }
        if self.lora.rank == 0 || !self.lora.alpha.is_finite() {
            return bad("lora.rank must be positive and lora.alpha finite".into());
        }
        Ok(())
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.out.join(stage.dir_name())
    }
}
