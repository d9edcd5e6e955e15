//! Run the structure ablation grid at a tiny scale and print the report.
//!
//! ```text
//! cargo run --release --example ablation_grid -- [out_dir]
//! ```

use vatcmr::dataset::{build_dataset, DatasetConfig, RenderShape, SplitCounts};
use vatcmr::experiments::{run_grid, structure_ablation_cells, ExperimentGrid};
use vatcmr::training::TrainConfig;

fn main() -> vatcmr::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "ablation_demo".into());
    let data = build_dataset(&DatasetConfig {
        num_classes: 3,
        counts: SplitCounts {
            train: 30,
            val: 15,
            test: 15,
        },
        shape: RenderShape {
            height: 32,
            width: 32,
            audio_len: 1024,
            sample_rate: 8192,
        },
        ..DatasetConfig::default()
    })?;
    let mut base = TrainConfig {
        ce_epochs: 3,
        triplet_epochs: 3,
        ..TrainConfig::default()
    };
    base.model.embed_dim = 16;

    let grid = ExperimentGrid::new(base, structure_ablation_cells(0))?;
    let report = run_grid(&grid, &data, &out)?;
    print!("{}", report.to_csv());
    println!(
        "{} cells, {} failed, written to {out}/report.csv",
        report.rows.len(),
        report.failures()
    );
    Ok(())
}
