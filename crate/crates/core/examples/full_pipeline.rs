//! Runs the whole experiment through the library API with a shortened
//! schedule: data, pretraining, head scoring, the five adapter setups, and
//! evaluation. A second run reuses every stage.
//!
//! cargo run --release --example full_pipeline -- [out_dir]

use std::path::PathBuf;

use headimpact::pipeline::{Pipeline, RunConfig, Stage};
use headimpact::train::TrainConfig;

fn main() -> headimpact::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("headimpact-run"));
    let config = RunConfig {
        out: out.clone(),
        n_samples: 120,
        pretrain: TrainConfig {
            epochs: 8,
            batch_size: 4,
            ..TrainConfig::default()
        },
        finetune: TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        },
        ..RunConfig::default()
    };
    let pipeline = Pipeline::new(config)?;
    for (stage, status) in pipeline.run_all()? {
        println!("{stage:<9} {status:?}");
    }
    for (stage, status) in pipeline.run_all()? {
        println!("{stage:<9} {status:?} (second run)");
    }
    let table = std::fs::read_to_string(pipeline.dir(Stage::Eval).join("comparison.txt"))?;
    print!("{table}");
    for s in pipeline.setups()? {
        println!(
            "{:<10} layers {:?}, {} trainable",
            s.name, s.layers, s.params.trainable
        );
    }
    Ok(())
}
