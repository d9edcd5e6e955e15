//! Generate a small synthetic dataset, save it, and read it back.
//!
//! ```text
//! cargo run --release --example generate_data -- [out_dir]
//! ```

use vatcmr::dataset::{build_dataset, load_dataset, save_dataset, DatasetConfig, Split, SplitCounts};

fn main() -> vatcmr::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "synthetic_data".into());
    let cfg = DatasetConfig {
        num_classes: 5,
        counts: SplitCounts {
            train: 50,
            val: 10,
            test: 10,
        },
        seed: 7,
        ..DatasetConfig::default()
    };
    let data = build_dataset(&cfg)?;
    save_dataset(&data, &out)?;
    let back = load_dataset(&out)?;
    assert_eq!(back, data);

    for split in [Split::Train, Split::Val, Split::Test] {
        let samples = data.split(split);
        let mut per_class = vec![0usize; data.num_classes()];
        samples.iter().for_each(|s| per_class[s.class()] += 1);
        println!(
            "{:<5} {:>3} samples, per class {per_class:?}",
            split.name(),
            samples.len()
        );
    }
    let s = &data.train[0];
    let energy = s.audio.iter().map(|x| x * x).sum::<f32>() / s.audio.len() as f32;
    println!(
        "sample {}: class {}, visual {} values, tactile {} values, audio {} samples (mean power {energy:.4})",
        s.id,
        s.class(),
        s.visual.len(),
        s.tactile.len(),
        s.audio.len()
    );
    println!("saved to {out}");
    Ok(())
}
