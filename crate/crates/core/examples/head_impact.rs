//! Scores every attention head by how well its caption->image attention
//! overlaps the key-object masks, then ranks layers.
//!
//! cargo run --example head_impact -- [checkpoint]
//!
//! Without a checkpoint a freshly initialised model is scored, which gives
//! near-uniform attention; pass `out/pretrain/model.bin` from a pipeline run
//! for a trained one.

use std::path::Path;

use headimpact::data::{generate_dataset, Sample};
use headimpact::impact::{
    head_impact, hi_csv, layer_tests, rank_layers, RankStrategy, DEFAULT_TAU,
};
use headimpact::model::{init_model, load_weights, ModelConfig, Vocab};

fn main() -> headimpact::Result<()> {
    let weights = match std::env::args().nth(1) {
        Some(p) => load_weights(Path::new(&p))?,
        None => init_model(&ModelConfig::default(), 0)?,
    };
    let samples = generate_dataset(40, 11)?;
    let refs: Vec<&Sample> = samples.iter().collect();

    let hi = head_impact(&weights, &Vocab::standard(), &refs, DEFAULT_TAU)?;
    println!(
        "HI over {} units (rows = layers, cols = heads):",
        hi.n_units
    );
    print!("{}", hi_csv(&hi));
    println!(
        "layer means: {:?}",
        hi.layer_means
            .iter()
            .map(|m| (m * 1e4).round() / 1e4)
            .collect::<Vec<_>>()
    );

    let t = layer_tests(&hi)?;
    println!(
        "Kruskal-Wallis by layer p = {:.4}, by head p = {:.4}",
        t.layers.p_value, t.heads.p_value
    );
    for s in [
        RankStrategy::Top,
        RankStrategy::Bottom,
        RankStrategy::Random,
    ] {
        println!("{s:?}-1: {:?}", rank_layers(&hi, 1, s, 0)?);
    }
    Ok(())
}
