//! Euclidean ranking over a labeled index and mean average precision.

use rayon::prelude::*;

use crate::dataset::MultimodalSample;
use crate::error::{invalid, Error, Result};
use crate::model::{ModelState, Space};

pub fn euclidean_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(invalid(format!("vectors of length {} and {}", x.len(), y.len())));
    }
    Ok(squared_distance(x, y).sqrt())
}

fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndexEntry {
    pub vector: Vec<f64>,
    pub label: usize,
    pub id: u64,
}

/// Labeled vectors of one retrieval space.
#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalIndex {
    entries: Vec<IndexEntry>,
    space: Space,
    dim: usize,
}

impl RetrievalIndex {
    pub fn new(entries: Vec<IndexEntry>, space: Space) -> Result<Self> {
        let dim = entries
            .first()
            .map(|e| e.vector.len())
            .ok_or_else(|| invalid("retrieval index must be nonempty"))?;
        if entries.iter().any(|e| e.vector.len() != dim) {
            return Err(invalid("index vectors must share one length"));
        }
        let mut ids: Vec<u64> = entries.iter().map(|e| e.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("index ids must be unique"));
        }
        Ok(Self { entries, space, dim })
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One index entry per sample, represented in `space`.
pub fn build_index(model: &ModelState, samples: &[MultimodalSample], space: Space) -> Result<RetrievalIndex> {
    if samples.is_empty() {
        return Err(invalid("cannot build an index from an empty split"));
    }
    let entries = samples
        .par_iter()
        .map(|s| {
            Ok(IndexEntry {
                vector: model.represent(s, space)?,
                label: s.class(),
                id: s.id,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    RetrievalIndex::new(entries, space)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankedItem {
    pub id: u64,
    pub distance: f64,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankedResult {
    pub items: Vec<RankedItem>,
    pub query_label: Option<usize>,
}

impl RankedResult {
    pub fn labels(&self) -> Vec<usize> {
        self.items.iter().map(|i| i.label).collect()
    }
}

/// Full ordering by ascending distance, ties broken by ascending id.
pub fn rank(query: &[f64], index: &RetrievalIndex) -> Result<RankedResult> {
    if query.len() != index.dim {
        return Err(invalid(format!(
            "query has dimension {}, index has {}",
            query.len(),
            index.dim
        )));
    }
    let mut items: Vec<RankedItem> = index
        .entries
        .iter()
        .map(|e| RankedItem {
            id: e.id,
            distance: squared_distance(query, &e.vector).sqrt(),
            label: e.label,
        })
        .collect();
    items.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.id.cmp(&b.id)));
    Ok(RankedResult {
        items,
        query_label: None,
    })
}

/// `(1/R) Σ precision@k` over the ranks `k` holding a relevant item.
pub fn average_precision(ranked_labels: &[usize], query_label: usize) -> Result<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &label) in ranked_labels.iter().enumerate() {
        if label == query_label {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    if hits == 0 {
        return Err(Error::UndefinedAveragePrecision(query_label));
    }
    Ok(sum / hits as f64)
}

/// Arithmetic mean of per-query average precision.
pub fn mean_average_precision(queries: &[(Vec<f64>, usize)], index: &RetrievalIndex) -> Result<f64> {
    if queries.is_empty() {
        return Err(invalid("no queries"));
    }
    let aps = queries
        .par_iter()
        .map(|(q, label)| average_precision(&rank(q, index)?.labels(), *label))
        .collect::<Result<Vec<f64>>>()?;
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

/// MAP of `query`-space representations of `samples` against an index of
/// their `retrieval`-space representations.
pub fn evaluate(model: &ModelState, samples: &[MultimodalSample], query: Space, retrieval: Space) -> Result<f64> {
    let index = build_index(model, samples, retrieval)?;
    let queries = samples
        .par_iter()
        .map(|s| Ok((model.represent(s, query)?, s.class())))
        .collect::<Result<Vec<_>>>()?;
    mean_average_precision(&queries, &index)
}
