//! Generates the synthetic key-object dataset, writes it as PPM/PGM files
//! plus a JSON manifest, and reads it back.
//!
//! cargo run --example render_dataset -- [out_dir] [n_samples] [seed]

use std::path::PathBuf;

use headimpact::data::{generate_dataset, make_splits, read_dataset, write_dataset, Dataset};

fn main() -> headimpact::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("headimpact-data"));
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(300);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);

    let dataset = Dataset {
        seed,
        samples: generate_dataset(n, seed)?,
        splits: make_splits(n, seed)?,
    };
    write_dataset(&dataset, &out)?;

    let back = read_dataset(&out)?;
    assert_eq!(back, dataset);
    let s = &back.splits;
    println!("wrote {} samples to {}", n, out.display());
    println!(
        "splits: hi {} / train {} / val {} / test {}",
        s.hi.len(),
        s.train.len(),
        s.val.len(),
        s.test.len()
    );
    let objects: usize = back.samples.iter().map(|s| s.objects.len()).sum();
    println!(
        "{objects} key objects, {} distinct captions",
        back.caption_pool().len()
    );
    for obj in &back.samples[0].objects {
        println!(
            "  {}: {} ({} px)",
            back.samples[0].id,
            obj.caption,
            obj.mask.count()
        );
    }
    Ok(())
}
