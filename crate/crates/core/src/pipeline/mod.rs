//! File-based experiment pipeline: data → pretrain → hi → finetune → eval.
//!
//! ```text
//! out/config.json
//! out/data/        manifest.json, images/, masks/
//! out/pretrain/    model.bin, history.json
//! out/hi/          hi_scores.csv, hi_heatmap.pgm, stats.json
//! out/finetune/    setups.json, <setup>/{model.bin | base.json, params.json, history.json}
//! out/eval/        results.json, comparison.csv, comparison.txt, questions.json
//! ```
//!
//! Each stage directory ends with a `stage.json` record used for caching.

mod cache;
mod config;
mod stages;

pub use cache::{dir_digest, is_fresh, read_record, StageRecord, STAGE_FILE};
pub use config::{RunConfig, Stage};
pub use stages::{
    EvalReport, Pipeline, SetupMeta, StageStatus, BASE_REF, CHECKPOINT, COMPARISON_CSV,
    COMPARISON_TXT, HISTORY, PARAMS, QUESTIONS, RESULTS, SETUPS,
};
