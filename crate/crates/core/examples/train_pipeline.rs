//! End-to-end run: build a synthetic dataset, train both stages, report test MAP.
//!
//! ```text
//! cargo run --release --example train_pipeline -- [ce_epochs] [triplet_epochs] [train_per_split]
//! ```

use std::time::Instant;

use vatcmr::dataset::{build_dataset, DatasetConfig, SplitCounts};
use vatcmr::encoders::Modality;
use vatcmr::model::Space;
use vatcmr::retrieval::evaluate;
use vatcmr::training::{train, TrainConfig};

fn main() -> vatcmr::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let arg = |i: usize, default: usize| args.get(i).copied().unwrap_or(default);

    let data_cfg = DatasetConfig {
        counts: SplitCounts {
            train: arg(2, 500),
            val: 100,
            test: 100,
        },
        ..DatasetConfig::default()
    };
    let t = Instant::now();
    let data = build_dataset(&data_cfg)?;
    println!("dataset built in {:.1?}", t.elapsed());

    let mut cfg = TrainConfig {
        ce_epochs: arg(0, 50),
        triplet_epochs: arg(1, 50),
        ..TrainConfig::default()
    };
    cfg.model.embed_dim = 64;
    cfg.query = Space::Single(Modality::Audio);
    cfg.retrieval = Space::Fused(Modality::Vision, Modality::Touch);

    let t = Instant::now();
    let outcome = train(&data, &cfg)?;
    println!("trained in {:.1?}", t.elapsed());
    for row in &outcome.log {
        println!(
            "stage {} epoch {:>2}  loss {:>8}  val acc {:>6}  val map {:>6}",
            row.stage,
            row.epoch,
            fmt(row.train_loss),
            fmt(row.val_accuracy),
            fmt(row.val_map)
        );
    }
    let map = evaluate(&outcome.model, &data.test, cfg.query, cfg.retrieval)?;
    println!("test MAP {} -> {}: {map:.4}", cfg.query, cfg.retrieval);
    Ok(())
}

fn fmt(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.4}"))
}
