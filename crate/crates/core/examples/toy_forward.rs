//! Builds a caption prompt for one key object, runs the toy decoder, and
//! prints the per-token loss and where the caption tokens look.

use headimpact::data::generate_dataset;
use headimpact::eval::log_prob;
use headimpact::impact::extract_caption_attention;
use headimpact::model::{caption_prompt, forward, init_model, ModelConfig, Vocab};

fn main() -> headimpact::Result<()> {
    let config = ModelConfig::default();
    let vocab = Vocab::standard();
    let weights = init_model(&config, 1)?;
    let sample = &generate_dataset(10, 3)?[0];
    let object = &sample.objects[0];

    let layout = caption_prompt(&vocab, &config, &object.caption)?;
    println!("prompt: {}", vocab.detokenize(&layout.tokens)?);
    println!(
        "{} parameters, {} tokens",
        weights.num_params(),
        layout.len()
    );

    let out = forward(&weights, &layout, &sample.image, true)?;
    let v = config.vocab_size;
    for (row, target) in layout.targets() {
        let lp = log_prob(&out.logits.data()[row * v..(row + 1) * v], target);
        println!(
            "  -log p({:<8}) = {:.3}",
            vocab.word(target).unwrap_or("?"),
            -lp
        );
    }

    let grid = extract_caption_attention(out.attention.as_ref().expect("recorded"), &layout)?;
    let (rows, cols) = (grid.rows, grid.cols);
    println!("layer 0 head 0 caption->visual attention ({rows}x{cols}):");
    for r in 0..rows {
        let line: Vec<String> = (0..cols)
            .map(|c| format!("{:.3}", grid.head(0, 0)[r * cols + c]))
            .collect();
        println!("  {}", line.join(" "));
    }
    Ok(())
}
