//! Helpers shared by the integration tests.
#![allow(dead_code)]

pub mod gradcheck;

use vatcmr::dataset::{build_dataset, DatasetConfig, DatasetSplits, RenderShape, SplitCounts};
use vatcmr::encoders::{AudioEncoderConfig, ImageEncoderConfig};
use vatcmr::fusion::FusionConfig;
use vatcmr::model::ModelConfig;
use vatcmr::nn::Parameters;
use vatcmr::training::TrainConfig;

pub const FD_STEP: f64 = 1e-5;

/// Relative error with a floor on the denominator so that two tiny
/// gradients are not compared on relative terms.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Central differences of `loss` for every parameter of `model`, compared
/// with `analytic`. Returns the worst relative error and its parameter name.
pub fn check_params<P: Parameters + Clone>(model: &P, analytic: &P, loss: impl Fn(&P) -> f64) -> (f64, String) {
    let names: Vec<(String, usize)> = model
        .named_params()
        .into_iter()
        .map(|(n, p)| (n, p.value.len()))
        .collect();
    let grads = analytic.named_params();
    let mut worst = (0.0, String::new());
    for (k, (name, len)) in names.iter().enumerate() {
        for i in 0..*len {
            let mut plus = model.clone();
            plus.named_params_mut()[k].1.value[i] += FD_STEP;
            let mut minus = model.clone();
            minus.named_params_mut()[k].1.value[i] -= FD_STEP;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * FD_STEP);
            let err = rel_error(grads[k].1.value[i], numeric);
            if err > worst.0 {
                worst = (err, format!("{name}[{i}]"));
            }
        }
    }
    worst
}

/// Central differences of `loss` with respect to the vector `x`.
pub fn check_input(x: &[f64], analytic: &[f64], loss: impl Fn(&[f64]) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let mut plus = x.to_vec();
        plus[i] += FD_STEP;
        let mut minus = x.to_vec();
        minus[i] -= FD_STEP;
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * FD_STEP);
        worst = worst.max(rel_error(analytic[i], numeric));
    }
    worst
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// 16x16 images, 256-sample audio.
pub fn tiny_shape() -> RenderShape {
    RenderShape {
        height: 16,
        width: 16,
        audio_len: 256,
        sample_rate: 4096,
    }
}

pub fn tiny_data(num_classes: usize, train: usize, seed: u64) -> DatasetSplits {
    build_dataset(&DatasetConfig {
        num_classes,
        counts: SplitCounts {
            train,
            val: 5 * num_classes,
            test: 5 * num_classes,
        },
        seed,
        shape: tiny_shape(),
        ..DatasetConfig::default()
    })
    .expect("tiny dataset")
}

pub fn tiny_model_config() -> ModelConfig {
    ModelConfig {
        embed_dim: 8,
        image: ImageEncoderConfig {
            channels: vec![4, 4, 4, 4],
            ..Default::default()
        },
        audio: AudioEncoderConfig {
            channels: [4, 4, 4],
            kernels: [8, 4, 4],
            strides: [4, 2, 2],
            ..Default::default()
        },
        fusion: FusionConfig {
            tokens: 2,
            heads: 2,
            head_dim: None,
        },
        attention: true,
    }
}

pub fn tiny_train_config(ce_epochs: usize, triplet_epochs: usize) -> TrainConfig {
    TrainConfig {
        ce_epochs,
        triplet_epochs,
        model: tiny_model_config(),
        ..TrainConfig::default()
    }
}

/// MAP by direct enumeration: the rank of each relevant entry is one plus the
/// number of entries strictly ahead of it under (distance, id) order.
pub fn map_oracle(queries: &[(Vec<f64>, usize)], entries: &[(Vec<f64>, usize, u64)]) -> f64 {
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let mut total = 0.0;
    for (q, label) in queries {
        let d: Vec<f64> = entries.iter().map(|e| dist(q, &e.0)).collect();
        let ahead = |i: usize, j: usize| d[j] < d[i] || (d[j] == d[i] && entries[j].2 < entries[i].2);
        let relevant: Vec<usize> = (0..entries.len()).filter(|&i| entries[i].1 == *label).collect();
        let mut ap = 0.0;
        for &i in &relevant {
            let rank = 1 + (0..entries.len()).filter(|&j| ahead(i, j)).count();
            let hits = 1 + relevant.iter().filter(|&&j| ahead(i, j)).count();
            ap += hits as f64 / rank as f64;
        }
        total += ap / relevant.len() as f64;
    }
    total / queries.len() as f64
}
