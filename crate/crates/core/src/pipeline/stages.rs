use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::cache::{dir_digest, is_fresh, key_digest, read_record, write_record, StageRecord};
use super::config::{RunConfig, Stage};
use crate::data::{generate_dataset, make_splits, read_dataset, write_dataset, Dataset, Sample};
use crate::error::{Error, Result, ResultExt};
use crate::eval::{
    compare_setups, perplexity, question_units, score_vqa_units, EvalResult, VqaRecord,
};
use crate::impact::{head_impact, read_hi_stats, write_hi_report, HiStats};
use crate::lora::{build_setups, load_adapted, save_adapted, AdaptedModel, ParamCount, SetupKind};
use crate::model::{init_model, load_weights, save_weights, Vocab};
use crate::rng::Rng;
use crate::train::{train, Trainable};
use crate::units::{caption_units, vqa_units, Unit};

pub const CHECKPOINT: &str = "model.bin";
pub const HISTORY: &str = "history.json";
pub const PARAMS: &str = "params.json";
pub const BASE_REF: &str = "base.json";
pub const SETUPS: &str = "setups.json";
pub const RESULTS: &str = "results.json";
pub const COMPARISON_CSV: &str = "comparison.csv";
pub const COMPARISON_TXT: &str = "comparison.txt";
pub const QUESTIONS: &str = "questions.json";

const PRETRAIN_TRAIN_QUESTIONS: u64 = 0x9_7e1;
const PRETRAIN_VAL_QUESTIONS: u64 = 0x9_7e2;
const BASELINE: &str = "original";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    Cached,
}

/// One row of `setups.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetupMeta {
    pub name: String,
    pub kind: SetupKind,
    pub layers: Vec<usize>,
    pub seed: u64,
    pub params: ParamCount,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub baseline: String,
    pub seed: u64,
    pub results: Vec<EvalResult>,
}

pub struct Pipeline {
    config: RunConfig,
    vocab: Vocab,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => e.into(),
    })?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(path, e.to_string()))
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        Ok(Pipeline {
            config,
            vocab: Vocab::standard(),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn dir(&self, stage: Stage) -> PathBuf {
        self.config.stage_dir(stage)
    }

    fn key(&self, stage: Stage) -> Result<String> {
        let c = &self.config;
        let settings = match stage {
            Stage::Data => json!({ "seed": c.seed, "n_samples": c.n_samples }),
            Stage::Pretrain => json!({
                "seed": c.seed,
                "model": c.model,
                "pretrain": c.pretrain,
                "pretrain_questions": c.pretrain_questions,
            }),
            Stage::Hi => json!({ "seed": c.seed, "tau": c.tau, "k": c.k() }),
            Stage::Finetune => json!({ "seed": c.seed, "finetune": c.finetune, "lora": c.lora }),
            Stage::Eval => json!({ "seed": c.seed }),
        };
        let mut upstream = serde_json::Map::new();
        for &up in stage.upstream() {
            let dir = self.dir(up);
            let rec = read_record(&dir)?.ok_or_else(|| {
                Error::MissingFile(dir.join(super::cache::STAGE_FILE))
                    .context(format!("stage {stage} needs {up} first"))
            })?;
            upstream.insert(up.name().into(), rec.outputs.into());
        }
        Ok(key_digest(
            &json!({ "stage": stage, "settings": settings, "upstream": upstream }),
        ))
    }

    fn write_config(&self) -> Result<()> {
        fs::create_dir_all(&self.config.out)?;
        write_json(&self.config.out.join("config.json"), &self.config)
    }

    /// Runs one stage unconditionally, replacing its previous outputs.
    pub fn run_stage(&self, stage: Stage) -> Result<()> {
        let key = self.key(stage)?;
        self.execute(stage, key)
    }

    fn execute(&self, stage: Stage, key: String) -> Result<()> {
        self.write_config()?;
        let dir = self.dir(stage);
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir_all(&dir)?;
        let start = Instant::now();
        log::info!("stage {stage}: running");
        match stage {
            Stage::Data => self.gen_data(&dir),
            Stage::Pretrain => self.pretrain(&dir),
            Stage::Hi => self.hi(&dir),
            Stage::Finetune => self.finetune(&dir),
            Stage::Eval => self.eval(&dir),
        }
        .context(|| format!("stage {stage}"))?;
        let outputs = dir_digest(&dir)?;
        write_record(
            &dir,
            &StageRecord {
                stage,
                key,
                outputs,
            },
        )?;
        log::info!(
            "stage {stage}: done in {:.1}s",
            start.elapsed().as_secs_f64()
        );
        Ok(())
    }

    /// Runs every stage up to the configured last one, skipping stages whose
    /// outputs are present and whose inputs are unchanged.
    pub fn run_all(&self) -> Result<Vec<(Stage, StageStatus)>> {
        let last = self.config.stage.unwrap_or(Stage::Eval);
        let mut report = Vec::new();
        for stage in Stage::ALL.into_iter().filter(|s| *s <= last) {
            let key = self.key(stage)?;
            if is_fresh(&self.dir(stage), &key)? {
                log::info!("stage {stage}: cached");
                report.push((stage, StageStatus::Cached));
            } else {
                self.execute(stage, key)?;
                report.push((stage, StageStatus::Ran));
            }
        }
        Ok(report)
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        read_dataset(&self.dir(Stage::Data))
    }

    fn gen_data(&self, dir: &Path) -> Result<()> {
        let c = &self.config;
        let dataset = Dataset {
            seed: c.seed,
            samples: generate_dataset(c.n_samples, c.seed)?,
            splits: make_splits(c.n_samples, c.seed)?,
        };
        write_dataset(&dataset, dir)
    }

    fn units(
        &self,
        samples: &[&Sample],
        pool: &[String],
        question_stream: Option<u64>,
    ) -> Result<Vec<Unit>> {
        let mut units = caption_units(&self.vocab, &self.config.model, samples)?;
        if let Some(stream) = question_stream {
            let mut rng = Rng::derive(self.config.seed, stream);
            units.extend(vqa_units(
                &self.vocab,
                &self.config.model,
                samples,
                pool,
                &mut rng,
            )?);
        }
        Ok(units)
    }

    fn pretrain(&self, dir: &Path) -> Result<()> {
        let c = &self.config;
        let data = self.load_dataset()?;
        let pool = data.caption_pool();
        let q = c.pretrain_questions;
        let train_units = self.units(
            &data.split(&data.splits.train),
            &pool,
            q.then_some(PRETRAIN_TRAIN_QUESTIONS),
        )?;
        let val_units = self.units(
            &data.split(&data.splits.val),
            &pool,
            q.then_some(PRETRAIN_VAL_QUESTIONS),
        )?;
        let mut model = AdaptedModel::plain(init_model(&c.model, c.seed)?);
        let history = train(
            &mut model,
            Trainable::All,
            &train_units,
            &val_units,
            &c.pretrain,
            c.seed,
        )?;
        if let Some(v) = history.best_val_loss {
            log::info!(
                "pretrain: best validation loss {v:.4} at epoch {} (uniform {:.4})",
                history.best_epoch,
                (c.model.vocab_size as f64).ln()
            );
        }
        save_weights(&model.base, &dir.join(CHECKPOINT))?;
        write_json(&dir.join(HISTORY), &history)
    }

    fn hi(&self, dir: &Path) -> Result<()> {
        let c = &self.config;
        let data = self.load_dataset()?;
        let weights = load_weights(&self.dir(Stage::Pretrain).join(CHECKPOINT))?;
        let hi = head_impact(&weights, &self.vocab, &data.split(&data.splits.hi), c.tau)?;
        let stats = HiStats::compute(&hi, c.tau, c.k(), c.seed)?;
        log::info!(
            "hi: layers p = {:.4}, heads p = {:.4}, top {:?}",
            stats.tests.layers.p_value,
            stats.tests.heads.p_value,
            stats.rankings.top
        );
        write_hi_report(dir, &hi, &stats)
    }

    fn finetune(&self, dir: &Path) -> Result<()> {
        let c = &self.config;
        let data = self.load_dataset()?;
        let base_path = self.dir(Stage::Pretrain).join(CHECKPOINT);
        let base = load_weights(&base_path)?;
        let stats = read_hi_stats(&self.dir(Stage::Hi))?;
        if stats.rankings.k != c.k() {
            return Err(Error::Config(format!(
                "head impact rankings were computed for k = {}, config asks for {}",
                stats.rankings.k,
                c.k()
            )));
        }
        let train_units = self.units(&data.split(&data.splits.train), &[], None)?;
        let val_units = self.units(&data.split(&data.splits.val), &[], None)?;
        let mut meta = Vec::new();
        for setup in build_setups(&stats.rankings, c.model.n_layers) {
            let out = crate::lora::run_setup(
                &base,
                &setup,
                &train_units,
                &val_units,
                &c.finetune,
                &c.lora,
                c.seed,
            )?;
            let sub = dir.join(&setup.name);
            fs::create_dir_all(&sub)?;
            match &out.history {
                None => write_json(
                    &sub.join(BASE_REF),
                    &json!({ "base_checkpoint": format!("{}/{CHECKPOINT}", Stage::Pretrain.dir_name()) }),
                )?,
                Some(h) => {
                    save_adapted(&out.model, &sub.join(CHECKPOINT))?;
                    write_json(&sub.join(HISTORY), h)?;
                }
            }
            write_json(&sub.join(PARAMS), &out.params)?;
            meta.push(SetupMeta {
                name: setup.name,
                kind: setup.kind,
                layers: setup.layers,
                seed: c.seed,
                params: out.params,
            });
        }
        write_json(&dir.join(SETUPS), &meta)
    }

    /// Loads a fine-tuned setup, resolving the original setup to the base
    /// checkpoint.
    pub fn load_setup(&self, name: &str) -> Result<AdaptedModel> {
        let sub = self.dir(Stage::Finetune).join(name);
        if sub.join(BASE_REF).exists() {
            let r: serde_json::Value = read_json(&sub.join(BASE_REF))?;
            let rel = r["base_checkpoint"]
                .as_str()
                .ok_or_else(|| Error::format(sub.join(BASE_REF), "missing base_checkpoint"))?;
            return Ok(AdaptedModel::plain(load_weights(
                &self.config.out.join(rel),
            )?));
        }
        load_adapted(&sub.join(CHECKPOINT))
    }

    pub fn setups(&self) -> Result<Vec<SetupMeta>> {
        read_json(&self.dir(Stage::Finetune).join(SETUPS))
    }

    fn eval(&self, dir: &Path) -> Result<()> {
        let c = &self.config;
        let data = self.load_dataset()?;
        let test = data.split(&data.splits.test);
        let captions = caption_units(&self.vocab, &c.model, &test)?;
        let questions = question_units(&self.vocab, &c.model, &test, &data.caption_pool(), c.seed)?;
        let mut results = Vec::new();
        let mut records: Vec<(String, Vec<VqaRecord>)> = Vec::new();
        for setup in self.setups()? {
            let model = self.load_setup(&setup.name)?;
            let (p, q) = perplexity(&model, &captions)
                .and_then(|p| Ok((p, score_vqa_units(&model, &self.vocab, &questions)?)))
                .context(|| format!("evaluating setup {}", setup.name))?;
            let r = EvalResult::from_parts(&setup.name, &p, &q);
            records.push((setup.name.clone(), q.records));
            log::info!(
                "eval {}: perplexity {:.3}, accuracy {:.3}, ans_prob {:.3}",
                r.setup,
                r.perplexity,
                r.accuracy,
                r.ans_prob
            );
            results.push(r);
        }
        let comparison = compare_setups(&results, BASELINE)?;
        write_json(
            &dir.join(RESULTS),
            &EvalReport {
                baseline: BASELINE.into(),
                seed: c.seed,
                results,
            },
        )?;
        fs::write(dir.join(COMPARISON_CSV), comparison.to_csv())?;
        fs::write(dir.join(COMPARISON_TXT), comparison.to_text())?;
        write_json(&dir.join(QUESTIONS), &records)
    }

    pub fn eval_report(&self) -> Result<EvalReport> {
        read_json(&self.dir(Stage::Eval).join(RESULTS))
    }
}
