//! Caption perplexity and four-way question accuracy for reference models
//! and an untrained toy decoder.

use headimpact::data::{generate_dataset, ObjectKind, Sample};
use headimpact::eval::{
    compare_setups, evaluate, question_units, LogitModel, OracleModel, UniformModel,
};
use headimpact::model::{init_model, ModelConfig, Vocab};
use headimpact::units::caption_units;

fn main() -> headimpact::Result<()> {
    let config = ModelConfig::default();
    let vocab = Vocab::standard();
    let samples = generate_dataset(200, 9)?;
    let refs: Vec<&Sample> = samples.iter().collect();
    let pool: Vec<String> = ObjectKind::all().iter().map(|k| k.caption()).collect();

    let captions = caption_units(&vocab, &config, &refs)?;
    let questions = question_units(&vocab, &config, &refs, &pool, 0)?;
    println!(
        "{} caption units, {} question units",
        captions.len(),
        questions.len()
    );

    let untrained = init_model(&config, 0)?;
    let uniform = UniformModel {
        vocab_size: vocab.len(),
    };
    let oracle = OracleModel {
        vocab_size: vocab.len(),
    };
    let models: Vec<(&str, &dyn LogitModel)> = vec![
        ("uniform", &uniform),
        ("oracle", &oracle),
        ("untrained", &untrained),
    ];
    let mut results = Vec::new();
    for (name, m) in models {
        results.push(evaluate(name, m, &vocab, &captions, &questions)?);
    }
    print!("{}", compare_setups(&results, "uniform")?.to_text());
    Ok(())
}
