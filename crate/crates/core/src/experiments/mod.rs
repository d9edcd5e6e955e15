//! Ablation grids, embedding projections and learning curves.

mod curve;
mod projection;

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::save_checkpoint;
use crate::dataset::DatasetSplits;
use crate::encoders::Modality;
use crate::error::{invalid, Result};
use crate::model::Space;
use crate::retrieval::evaluate;
use crate::training::{train, write_metrics, Dominant, MetricsRow, TrainConfig};

pub use curve::{curve_points, export_curve, write_curve, CurvePoint, CURVE_HEADER};
pub use projection::{project_embeddings, Pca, Projection, Projector};

pub const REPORT_HEADER: &str = "query,space,dominant,attention,seed,status,map";
/// Leading comment of every grid report.
pub const REPORT_NOTE: &str =
    "# single-modality retrieval spaces are evaluated with the model trained for that cell, not a separately trained model";

/// One ablation configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub query: Space,
    pub space: Space,
    pub dominant: Dominant,
    pub attention: bool,
    #[serde(default)]
    pub seed: u64,
}

impl Cell {
    /// Directory name unique to this cell.
    pub fn key(&self) -> String {
        format!(
            "q-{}_r-{}_d-{}_att-{}_s-{}",
            self.query,
            self.space,
            self.dominant.name(),
            if self.attention { "on" } else { "off" },
            self.seed
        )
    }

    /// `base` with this cell's settings applied.
    pub fn config(&self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        cfg.query = self.query;
        cfg.retrieval = self.space;
        cfg.dominant = self.dominant;
        cfg.model.attention = self.attention;
        cfg.seed = self.seed;
        cfg
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    #[serde(default)]
    pub base: TrainConfig,
    pub cells: Vec<Cell>,
}

/// A grid file is either a bare list of cells or `{ "base": ..., "cells": [...] }`.
#[derive(Deserialize)]
#[serde(untagged)]
enum GridFile {
    Cells(Vec<Cell>),
    Full(ExperimentGrid),
}

impl ExperimentGrid {
    pub fn new(base: TrainConfig, cells: Vec<Cell>) -> Result<Self> {
        let grid = Self { base, cells };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(invalid("experiment grid has no cells"));
        }
        let mut seen = HashSet::new();
        for cell in &self.cells {
            if !seen.insert(cell) {
                return Err(invalid(format!("duplicate grid cell {}", cell.key())));
            }
            cell.config(&self.base).validate()?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let grid = match serde_json::from_str::<GridFile>(text)? {
            GridFile::Cells(cells) => Self {
                base: TrainConfig::default(),
                cells,
            },
            GridFile::Full(g) => g,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// The same cells repeated for every seed in `seeds`.
    pub fn with_seeds(&self, seeds: &[u64]) -> Self {
        let cells = seeds
            .iter()
            .flat_map(|&s| self.cells.iter().map(move |c| Cell { seed: s, ..*c }))
            .collect();
        Self {
            base: self.base.clone(),
            cells,
        }
    }
}

fn others(query: Modality) -> (Modality, Modality) {
    match query {
        Modality::Audio => (Modality::Vision, Modality::Touch),
        Modality::Vision => (Modality::Touch, Modality::Audio),
        Modality::Touch => (Modality::Vision, Modality::Audio),
    }
}

/// Structure ablation: {dominant on, off} x {attention on, off} x three
/// query modalities. "Dominant off" trains stage 1 through the joint head.
pub fn structure_ablation_cells(seed: u64) -> Vec<Cell> {
    let mut cells = Vec::with_capacity(12);
    for (dominant_on, attention) in [(true, true), (true, false), (false, true), (false, false)] {
        for query in [Modality::Audio, Modality::Vision, Modality::Touch] {
            let (a, b) = others(query);
            let dominant = match (dominant_on, query) {
                (false, _) => Dominant::Joint,
                (true, Modality::Audio) => Dominant::Audio,
                (true, Modality::Vision) => Dominant::Touch,
                (true, Modality::Touch) => Dominant::Vision,
            };
            cells.push(Cell {
                query: Space::Single(query),
                space: Space::Fused(a, b),
                dominant,
                attention,
                seed,
            });
        }
    }
    cells
}

/// Dominant-modality study: six query/retrieval pairings x four dominant tags.
pub fn dominant_modality_cells(seed: u64) -> Vec<Cell> {
    use Modality::{Audio, Touch, Vision};
    let pairs = [
        (Space::Single(Audio), Space::Fused(Vision, Touch)),
        (Space::Single(Touch), Space::Fused(Vision, Audio)),
        (Space::Single(Vision), Space::Fused(Touch, Audio)),
        (Space::Fused(Vision, Touch), Space::Single(Audio)),
        (Space::Fused(Vision, Audio), Space::Single(Touch)),
        (Space::Fused(Touch, Audio), Space::Single(Vision)),
    ];
    pairs
        .iter()
        .flat_map(|&(query, space)| {
            Dominant::ALL.into_iter().map(move |dominant| Cell {
                query,
                space,
                dominant,
                attention: true,
                seed,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellOutcome {
    pub map: f64,
    pub log: Vec<MetricsRow>,
    pub checkpoint: PathBuf,
}

/// Trains and evaluates one cell, writing `checkpoint/`, `metrics.csv` and
/// `result.json` under `out_dir/<cell key>`. MAP is measured on the test split.
pub fn run_cell(
    cell: &Cell,
    base: &TrainConfig,
    data: &DatasetSplits,
    out_dir: impl AsRef<Path>,
) -> Result<CellOutcome> {
    let cfg = cell.config(base);
    cfg.validate()?;
    let dir = out_dir.as_ref().join(cell.key());
    fs::create_dir_all(&dir)?;
    let outcome = train(data, &cfg)?;
    let map = evaluate(&outcome.model, &data.test, cfg.query, cfg.retrieval)?;
    let checkpoint = dir.join("checkpoint");
    save_checkpoint(&outcome.model, &cfg, &checkpoint)?;
    write_metrics(&outcome.log, dir.join("metrics.csv"))?;
    let result = serde_json::json!({
        "cell": cell,
        "map": map,
        "num_queries": data.test.len(),
        "skipped_batches": outcome.skipped_batches,
    });
    fs::write(dir.join("result.json"), serde_json::to_string_pretty(&result)?)?;
    Ok(CellOutcome {
        map,
        log: outcome.log,
        checkpoint,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub cell: Cell,
    /// `Err` holds the failure message.
    pub map: std::result::Result<f64, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridReport {
    pub rows: Vec<ReportRow>,
}

impl GridReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.map.is_err()).count()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{REPORT_NOTE}\n{REPORT_HEADER}\n");
        for r in &self.rows {
            let c = &r.cell;
            let (status, map) = match &r.map {
                Ok(m) => ("ok", m.to_string()),
                Err(_) => ("failed", String::new()),
            };
            writeln!(
                s,
                "{},{},{},{},{},{status},{map}",
                c.query,
                c.space,
                c.dominant.name(),
                c.attention,
                c.seed
            )
            .expect("writing to a String");
        }
        s
    }
}

/// Runs every cell in order; failures are recorded and the grid continues.
/// Writes `report.csv` into `out_dir`.
pub fn run_grid(grid: &ExperimentGrid, data: &DatasetSplits, out_dir: impl AsRef<Path>) -> Result<GridReport> {
    grid.validate()?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir)?;
    let rows = grid
        .cells
        .iter()
        .map(|cell| {
            let map = run_cell(cell, &grid.base, data, out_dir).map(|o| o.map).map_err(|e| {
                log::error!("cell {} failed: {e}", cell.key());
                e.to_string()
            });
            ReportRow { cell: *cell, map }
        })
        .collect();
    let report = GridReport { rows };
    fs::write(out_dir.join("report.csv"), report.to_csv())?;
    Ok(report)
}
