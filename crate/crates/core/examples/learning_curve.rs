//! Train a small model, write its metrics log, and export the stage-2
//! validation MAP curve.
//!
//! ```text
//! cargo run --release --example learning_curve -- [out_dir]
//! ```

use std::path::PathBuf;

use vatcmr::dataset::{build_dataset, DatasetConfig, RenderShape, SplitCounts};
use vatcmr::experiments::{export_curve, write_curve};
use vatcmr::training::{train, write_metrics, TrainConfig};

fn main() -> vatcmr::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "curve_demo".into()));
    std::fs::create_dir_all(&out)?;
    let data = build_dataset(&DatasetConfig {
        num_classes: 3,
        counts: SplitCounts {
            train: 60,
            val: 30,
            test: 30,
        },
        shape: RenderShape {
            height: 32,
            width: 32,
            audio_len: 1024,
            sample_rate: 8192,
        },
        ..DatasetConfig::default()
    })?;
    let mut cfg = TrainConfig {
        ce_epochs: 5,
        triplet_epochs: 15,
        ..TrainConfig::default()
    };
    cfg.model.embed_dim = 16;
    let outcome = train(&data, &cfg)?;

    let metrics = out.join("metrics.csv");
    write_metrics(&outcome.log, &metrics)?;
    let curve = export_curve(&metrics)?;
    write_curve(&curve, out.join("curve.csv"))?;
    for p in &curve {
        let bar = "#".repeat((p.val_map * 40.0).round() as usize);
        println!("{:>3} {:.3} {bar}", p.epoch, p.val_map);
    }
    Ok(())
}
