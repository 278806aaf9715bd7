//! Attaches rank-8 adapters to one layer, fine-tunes only the adapters on a
//! few captions, and checks that the base weights did not move.

use headimpact::data::{generate_dataset, Sample};
use headimpact::lora::{attach_lora, count_params, load_adapted, save_adapted};
use headimpact::model::{init_model, ModelConfig, Vocab};
use headimpact::train::{mean_loss, train, TrainConfig, Trainable};
use headimpact::units::caption_units;

fn main() -> headimpact::Result<()> {
    let config = ModelConfig::default();
    let base = init_model(&config, 5)?;
    let samples = generate_dataset(20, 2)?;
    let (train_set, val_set) = samples.split_at(16);
    let vocab = Vocab::standard();
    let train_units = caption_units(&vocab, &config, &train_set.iter().collect::<Vec<&Sample>>())?;
    let val_units = caption_units(&vocab, &config, &val_set.iter().collect::<Vec<&Sample>>())?;

    let mut model = attach_lora(base.clone(), &[2], 8, 16.0, 0)?;
    let p = count_params(&model);
    println!(
        "trainable {} of {} parameters ({:.2}%)",
        p.trainable, p.total, p.percent
    );
    println!(
        "val loss before: {:.4}",
        mean_loss(&model, &val_units)?.unwrap_or(f64::NAN)
    );

    let cfg = TrainConfig {
        epochs: 5,
        ..TrainConfig::default()
    };
    let history = train(
        &mut model,
        Trainable::Adapters,
        &train_units,
        &val_units,
        &cfg,
        0,
    )?;
    for e in &history.epochs {
        println!(
            "epoch {}: train {:.4} val {:.4}",
            e.epoch,
            e.train_loss,
            e.val_loss.unwrap_or(f64::NAN)
        );
    }
    println!("kept epoch {}", history.best_epoch);
    assert_eq!(model.base, base, "base weights must stay frozen");

    let path = std::env::temp_dir().join("headimpact-lora.bin");
    save_adapted(&model, &path)?;
    assert_eq!(load_adapted(&path)?, model);
    println!("adapter checkpoint round-trips through {}", path.display());
    Ok(())
}
