//! Triplet alignment of the retrieval representation with the query branch.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::stage1::accuracy;
use super::{triplet_loss_with_grad, MetricsRow, StageOutcome, TrainConfig};
use crate::dataset::{mix_seed, DatasetSplits, MultimodalSample};
use crate::encoders::Modality;
use crate::error::{invalid, Error, Result};
use crate::model::{ModelState, PerModality, StageTag};
use crate::nn::{Adam, Parameters};
use crate::retrieval::{mean_average_precision, IndexEntry, RetrievalIndex};

/// Batch positions of an anchor and its negative. The positive is the
/// anchor's own query-modality view.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: usize,
    pub negative: usize,
}

/// Materialized `(F, P, N)` vectors with the labels they were drawn from.
#[derive(Clone, Debug, PartialEq)]
pub struct TripletVectors {
    pub anchor: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
    pub anchor_label: usize,
    pub positive_label: usize,
    pub negative_label: usize,
}

/// One triplet per batch position with a uniformly drawn different-class
/// negative, or `None` when the batch holds a single class.
pub fn choose_triplets(labels: &[usize], rng: &mut impl Rng) -> Option<Vec<Triplet>> {
    let mut out = Vec::with_capacity(labels.len());
    for (a, &la) in labels.iter().enumerate() {
        let candidates: Vec<usize> = (0..labels.len()).filter(|&j| labels[j] != la).collect();
        let &negative = candidates.choose(rng)?;
        out.push(Triplet { anchor: a, negative });
    }
    Some(out)
}

/// Resolves the batch at `batch_idx` into triplets. A single-class batch is
/// replaced once by a random draw from `pool`; if that fails too the batch is
/// skipped with a warning and `Ok(None)` is returned.
pub fn sample_triplet_batch(
    pool: &[MultimodalSample],
    batch_idx: &[usize],
    model: &ModelState,
    config: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<Option<Vec<TripletVectors>>> {
    let Some((batch, triplets)) = resolve_batch(pool, batch_idx, rng) else {
        return Ok(None);
    };
    let reps = batch
        .par_iter()
        .map(|&i| {
            let s = &pool[i];
            let e = model.embed_many(s, &[config.query.modalities(), config.retrieval.modalities()].concat())?;
            Ok((
                model.represent_from(&e, config.retrieval)?,
                model.represent_from(&e, config.query)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Some(
        triplets
            .iter()
            .map(|t| TripletVectors {
                anchor: reps[t.anchor].0.clone(),
                positive: reps[t.anchor].1.clone(),
                negative: reps[t.negative].1.clone(),
                anchor_label: pool[batch[t.anchor]].class(),
                positive_label: pool[batch[t.anchor]].class(),
                negative_label: pool[batch[t.negative]].class(),
            })
            .collect(),
    ))
}

fn resolve_batch(
    pool: &[MultimodalSample],
    batch_idx: &[usize],
    rng: &mut impl Rng,
) -> Option<(Vec<usize>, Vec<Triplet>)> {
    let labels = |b: &[usize]| b.iter().map(|&i| pool[i].class()).collect::<Vec<_>>();
    if let Some(t) = choose_triplets(&labels(batch_idx), rng) {
        return Some((batch_idx.to_vec(), t));
    }
    let redraw = index::sample(rng, pool.len(), batch_idx.len().min(pool.len())).into_vec();
    if let Some(t) = choose_triplets(&labels(&redraw), rng) {
        return Some((redraw, t));
    }
    log::warn!("skipping single-class triplet batch of {} samples", batch_idx.len());
    None
}

/// Validation MAP: queries in the query space against the val split indexed
/// in the retrieval space.
pub(crate) fn validation_map(model: &ModelState, samples: &[MultimodalSample], config: &TrainConfig) -> Result<f64> {
    let mut which = config.query.modalities();
    which.extend(config.retrieval.modalities());
    let reps = samples
        .par_iter()
        .map(|s| {
            let e = model.embed_many(s, &which)?;
            Ok((
                model.represent_from(&e, config.query)?,
                model.represent_from(&e, config.retrieval)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let entries = reps
        .iter()
        .zip(samples)
        .map(|((_, r), s)| IndexEntry {
            vector: r.clone(),
            label: s.class(),
            id: s.id,
        })
        .collect();
    let index = RetrievalIndex::new(entries, config.retrieval)?;
    let queries: Vec<(Vec<f64>, usize)> = reps
        .into_iter()
        .zip(samples)
        .map(|((q, _), s)| (q, s.class()))
        .collect();
    mean_average_precision(&queries, &index)
}

fn validation_row(
    model: &ModelState,
    data: &DatasetSplits,
    config: &TrainConfig,
    epoch: usize,
    loss: Option<f64>,
) -> Result<MetricsRow> {
    let (val_accuracy, val_map) = if data.val.is_empty() {
        (None, None)
    } else {
        (
            Some(accuracy(model, &data.val, config.dominant)?),
            Some(validation_map(model, &data.val, config)?),
        )
    };
    Ok(MetricsRow {
        stage: 2,
        epoch,
        train_loss: loss,
        val_accuracy,
        val_map,
    })
}

/// Loss of one triplet batch; parameter gradients go into `grads`, summed
/// over triplets.
fn batch_loss(
    model: &ModelState,
    pool: &[MultimodalSample],
    batch: &[usize],
    triplets: &[Triplet],
    config: &TrainConfig,
    zero: &ModelState,
) -> Result<(f64, ModelState)> {
    let mut which: Vec<Modality> = config.query.modalities();
    which.extend(config.retrieval.modalities());
    let outputs = batch
        .par_iter()
        .map(|&i| model.forward_branches(&pool[i], &which))
        .collect::<Result<Vec<_>>>()?;
    let reps: Vec<_> = outputs
        .par_iter()
        .map(|o| {
            (
                model.space_forward(o, config.retrieval),
                model.space_forward(o, config.query),
            )
        })
        .collect();

    // Gradients w.r.t. each sample's retrieval and query representation.
    let mut d_retrieval = vec![vec![0.0; reps[0].0 .0.len()]; batch.len()];
    let mut d_query = vec![vec![0.0; reps[0].1 .0.len()]; batch.len()];
    let mut total = 0.0;
    for t in triplets {
        let g = triplet_loss_with_grad(
            &reps[t.anchor].0 .0,
            &reps[t.anchor].1 .0,
            &reps[t.negative].1 .0,
            config.margin,
        )?;
        total += g.loss;
        add(&mut d_retrieval[t.anchor], &g.d_anchor);
        add(&mut d_query[t.anchor], &g.d_positive);
        add(&mut d_query[t.negative], &g.d_negative);
    }

    let per_sample = (0..batch.len())
        .into_par_iter()
        .map(|k| {
            let mut g = zero.clone();
            let mut d_emb = PerModality::default();
            let ((_, rc), (_, qc)) = &reps[k];
            model.space_backward(config.retrieval, rc.as_ref(), &d_retrieval[k], &mut g, &mut d_emb);
            model.space_backward(config.query, qc.as_ref(), &d_query[k], &mut g, &mut d_emb);
            model.backward_branches(&outputs[k], &d_emb, &mut g);
            g
        })
        .collect::<Vec<_>>();
    let mut grads = zero.clone();
    for g in &per_sample {
        grads.accumulate(g);
    }
    Ok((total, grads))
}

fn add(acc: &mut [f64], d: &[f64]) {
    acc.iter_mut().zip(d).for_each(|(a, b)| *a += b);
}

/// Runs stage 2 on a stage-1 model. The log starts with an epoch-0 row
/// holding the post-stage-1 validation metrics.
pub fn train_stage2(mut model: ModelState, data: &DatasetSplits, config: &TrainConfig) -> Result<StageOutcome> {
    config.validate()?;
    if data.train.len() < 2 {
        return Err(invalid("training split needs at least 2 samples"));
    }
    let mut optimizer = Adam::new(&model, config.triplet_learning_rate, config.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 0x5374_6167_6532));
    let zero = model.zeros_like();
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut log = vec![validation_row(&model, data, config, 0, None)?];
    let mut skipped = 0;

    for epoch in 1..=config.triplet_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut count = 0usize;
        for (batch_no, chunk) in order.chunks(config.batch_size).enumerate() {
            let Some((batch, triplets)) = resolve_batch(&data.train, chunk, &mut rng) else {
                skipped += 1;
                continue;
            };
            let (loss, mut grads) = batch_loss(&model, &data.train, &batch, &triplets, config, &zero)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    stage: "stage2",
                    epoch,
                    batch: batch_no,
                    what: "triplet loss".into(),
                });
            }
            grads.scale(1.0 / triplets.len() as f64);
            optimizer.step(&mut model, &grads);
            if let Some(name) = model.first_non_finite() {
                return Err(Error::NonFinite {
                    stage: "stage2",
                    epoch,
                    batch: batch_no,
                    what: format!("parameter {name}"),
                });
            }
            epoch_loss += loss;
            count += triplets.len();
        }
        let train_loss = (count > 0).then(|| epoch_loss / count as f64);
        let row = validation_row(&model, data, config, epoch, train_loss)?;
        log::info!("stage 2 epoch {epoch}: loss {train_loss:?} val map {:?}", row.val_map);
        log.push(row);
    }
    model.stage = StageTag::Stage2;
    Ok(StageOutcome {
        model,
        log,
        skipped_batches: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_classes_give_one_triplet_each() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let labels = [0, 1, 2, 3, 4];
        let t = choose_triplets(&labels, &mut rng).unwrap();
        assert_eq!(t.len(), 5);
        for (k, tr) in t.iter().enumerate() {
            assert_eq!(tr.anchor, k);
            assert_ne!(labels[tr.negative], labels[tr.anchor]);
        }
    }

    #[test]
    fn single_class_batch_has_no_triplets() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(choose_triplets(&[2, 2, 2], &mut rng).is_none());
    }

    #[test]
    fn negatives_are_uniform_over_other_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let labels = [0, 1, 1, 2];
        let mut hits = [0usize; 4];
        for _ in 0..3000 {
            hits[choose_triplets(&labels, &mut rng).unwrap()[0].negative] += 1;
        }
        assert_eq!(hits[0], 0);
        for &h in &hits[1..] {
            assert!((900..1100).contains(&h), "{hits:?}");
        }
    }
}
