//! Train briefly, then project fused embeddings to 2D with PCA and print the
//! class centroids in the plane.

use vatcmr::dataset::{build_dataset, DatasetConfig, RenderShape, SplitCounts};
use vatcmr::encoders::Modality;
use vatcmr::experiments::{project_embeddings, Pca};
use vatcmr::model::Space;
use vatcmr::training::{train, TrainConfig};

fn main() -> vatcmr::Result<()> {
    let data = build_dataset(&DatasetConfig {
        num_classes: 4,
        counts: SplitCounts {
            train: 80,
            val: 20,
            test: 40,
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
        ce_epochs: 10,
        triplet_epochs: 10,
        ..TrainConfig::default()
    };
    cfg.model.embed_dim = 16;
    let model = train(&data, &cfg)?.model;

    let space = Space::Fused(Modality::Vision, Modality::Touch);
    let embeddings = data
        .test
        .iter()
        .map(|s| Ok((model.represent(s, space)?, s.class())))
        .collect::<vatcmr::Result<Vec<_>>>()?;
    let (points, projection) = project_embeddings(&embeddings, &Pca)?;
    println!(
        "{space}: {:.1}% of variance in two components",
        100.0 * projection.retained_fraction()
    );
    for class in 0..data.num_classes() {
        let mine: Vec<[f64; 2]> = points.iter().filter(|(_, l)| *l == class).map(|(p, _)| *p).collect();
        let n = mine.len() as f64;
        let cx = mine.iter().map(|p| p[0]).sum::<f64>() / n;
        let cy = mine.iter().map(|p| p[1]).sum::<f64>() / n;
        println!(
            "class {class}: centroid ({cx:+.3}, {cy:+.3}) over {} points",
            mine.len()
        );
    }
    Ok(())
}
