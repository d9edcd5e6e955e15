//! Cross-entropy pre-training through the dominant pathway.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{cross_entropy_with_grad, init_model, Dominant, MetricsRow, Stage1Scope, StageOutcome, TrainConfig};
use crate::dataset::{mix_seed, DatasetSplits, MultimodalSample};
use crate::encoders::Modality;
use crate::error::{invalid, Error, Result};
use crate::model::{ModelState, PerModality, StageTag};
use crate::nn::{Adam, Parameters};

/// Logits of the dominant pathway from precomputed embeddings.
pub(crate) fn dominant_logits(model: &ModelState, embeddings: &PerModality, dominant: Dominant) -> Result<Vec<f64>> {
    let get = |m: Modality| {
        embeddings
            .get(m)
            .ok_or_else(|| invalid(format!("{m} embedding missing")))
    };
    match dominant.modality() {
        Some(m) => crate::encoders::classify(get(m)?, model.heads.for_modality(m)),
        None => {
            let joint = [get(Modality::Vision)?, get(Modality::Audio)?, get(Modality::Touch)?].concat();
            crate::encoders::classify(&joint, &model.heads.joint)
        }
    }
}

/// Dominant-pathway logits for each sample of a batch.
pub fn select_dominant_features(
    batch: &[MultimodalSample],
    model: &ModelState,
    dominant: Dominant,
) -> Result<Vec<Vec<f64>>> {
    batch
        .par_iter()
        .map(|s| dominant_logits(model, &model.embed_many(s, &dominant.modalities())?, dominant))
        .collect()
}

/// Classification accuracy of the dominant pathway.
pub(crate) fn accuracy(model: &ModelState, samples: &[MultimodalSample], dominant: Dominant) -> Result<f64> {
    let logits = select_dominant_features(samples, model, dominant)?;
    let correct = logits
        .iter()
        .zip(samples)
        .filter(|(z, s)| argmax(z) == s.class())
        .count();
    Ok(correct as f64 / samples.len().max(1) as f64)
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |best, (i, &x)| if x > best.1 { (i, x) } else { best },
        )
        .0
}

/// Parameter-name prefixes updated by stage 1.
pub(crate) fn trainable_prefixes(dominant: Dominant, scope: Stage1Scope) -> Vec<String> {
    let branches: Vec<Modality> = match (dominant.modality(), scope) {
        (Some(m), Stage1Scope::DominantOnly) => vec![m],
        _ => Modality::ALL.to_vec(),
    };
    let mut prefixes: Vec<String> = branches.iter().map(|m| format!("{m}.")).collect();
    match (dominant, scope) {
        (Dominant::Joint, _) => prefixes.push("heads.joint.".into()),
        (_, Stage1Scope::DominantOnly) => prefixes.extend(branches.iter().map(|m| format!("heads.{m}."))),
        (_, Stage1Scope::AllBranches) => prefixes.extend(Modality::ALL.iter().map(|m| format!("heads.{m}."))),
    }
    prefixes
}

/// Loss of one sample; parameter gradients are accumulated into `grads`.
fn sample_loss(
    model: &ModelState,
    sample: &MultimodalSample,
    dominant: Dominant,
    scope: Stage1Scope,
    grads: &mut ModelState,
) -> Result<f64> {
    let class = sample.class();
    let mut d_emb = PerModality::default();
    let loss;
    let outputs;
    match (dominant.modality(), scope) {
        (Some(m), Stage1Scope::DominantOnly) => {
            outputs = model.forward_branches(sample, &[m])?;
            let e = outputs.embedding(m);
            let head = model.heads.for_modality(m);
            let (l, dl) = cross_entropy_with_grad(&head.forward(e), class);
            d_emb.add(m, &head.backward(e, &dl, grads.heads.for_modality_mut(m)));
            loss = l;
        }
        (Some(_), Stage1Scope::AllBranches) => {
            outputs = model.forward_branches(sample, &Modality::ALL)?;
            let mut total = 0.0;
            for m in Modality::ALL {
                let e = outputs.embedding(m);
                let head = model.heads.for_modality(m);
                let (l, mut dl) = cross_entropy_with_grad(&head.forward(e), class);
                dl.iter_mut().for_each(|g| *g /= 3.0);
                d_emb.add(m, &head.backward(e, &dl, grads.heads.for_modality_mut(m)));
                total += l / 3.0;
            }
            loss = total;
        }
        (None, _) => {
            outputs = model.forward_branches(sample, &Modality::ALL)?;
            let joint = [
                outputs.embedding(Modality::Vision),
                outputs.embedding(Modality::Audio),
                outputs.embedding(Modality::Touch),
            ]
            .concat();
            let (l, dl) = cross_entropy_with_grad(&model.heads.joint.forward(&joint), class);
            let dj = model.heads.joint.backward(&joint, &dl, &mut grads.heads.joint);
            let d = model.embed_dim();
            d_emb.add(Modality::Vision, &dj[..d]);
            d_emb.add(Modality::Audio, &dj[d..2 * d]);
            d_emb.add(Modality::Touch, &dj[2 * d..]);
            loss = l;
        }
    }
    model.backward_branches(&outputs, &d_emb, grads);
    Ok(loss)
}

/// Initializes a model from `config.seed` and runs stage 1.
pub fn train_stage1(data: &DatasetSplits, config: &TrainConfig) -> Result<StageOutcome> {
    train_stage1_from(init_model(data, config)?, data, config)
}

pub fn train_stage1_from(mut model: ModelState, data: &DatasetSplits, config: &TrainConfig) -> Result<StageOutcome> {
    config.validate()?;
    if data.train.is_empty() {
        return Err(invalid("training split is empty"));
    }
    let prefixes = trainable_prefixes(config.dominant, config.stage1_scope);
    let mut optimizer = Adam::for_params(&model.select_params(&prefixes), config.ce_learning_rate, config.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 0x5374_6167_6531));
    let zero = model.zeros_like();
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut log = Vec::with_capacity(config.ce_epochs);

    for epoch in 1..=config.ce_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_no, batch) in order.chunks(config.batch_size).enumerate() {
            let per_sample = batch
                .par_iter()
                .map(|&i| {
                    let mut g = zero.clone();
                    let l = sample_loss(&model, &data.train[i], config.dominant, config.stage1_scope, &mut g)?;
                    Ok((l, g))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut grads = zero.clone();
            let mut batch_loss = 0.0;
            for (l, g) in &per_sample {
                batch_loss += l;
                grads.accumulate(g);
            }
            let n = batch.len() as f64;
            batch_loss /= n;
            if !batch_loss.is_finite() {
                return Err(Error::NonFinite {
                    stage: "stage1",
                    epoch,
                    batch: batch_no,
                    what: "cross-entropy loss".into(),
                });
            }
            grads.scale(1.0 / n);
            optimizer.step_params(model.select_params_mut(&prefixes), grads.select_params(&prefixes));
            if let Some(name) = model.first_non_finite() {
                return Err(Error::NonFinite {
                    stage: "stage1",
                    epoch,
                    batch: batch_no,
                    what: format!("parameter {name}"),
                });
            }
            epoch_loss += batch_loss * n;
        }
        let val_accuracy = if data.val.is_empty() {
            None
        } else {
            Some(accuracy(&model, &data.val, config.dominant)?)
        };
        let train_loss = epoch_loss / data.train.len() as f64;
        log::info!("stage 1 epoch {epoch}: loss {train_loss:.4} val acc {val_accuracy:?}");
        log.push(MetricsRow {
            stage: 1,
            epoch,
            train_loss: Some(train_loss),
            val_accuracy,
            val_map: None,
        });
    }
    model.stage = StageTag::Stage1;
    Ok(StageOutcome {
        model,
        log,
        skipped_batches: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefixes_follow_scope() {
        assert_eq!(
            trainable_prefixes(Dominant::Audio, Stage1Scope::DominantOnly),
            vec!["audio.".to_string(), "heads.audio.".to_string()]
        );
        let joint = trainable_prefixes(Dominant::Joint, Stage1Scope::DominantOnly);
        assert_eq!(joint.len(), 4);
        assert!(joint.contains(&"heads.joint.".to_string()));
        assert_eq!(trainable_prefixes(Dominant::Touch, Stage1Scope::AllBranches).len(), 6);
    }

    #[test]
    fn argmax_takes_first_maximum() {
        assert_eq!(argmax(&[0.1, 0.5, 0.5, -1.0]), 1);
    }
}
