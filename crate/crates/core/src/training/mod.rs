//! Two-stage optimization: dominant-modality cross-entropy, then triplet
//! alignment of the fused retrieval representation with the query branch.

mod losses;
mod metrics;
mod stage1;
mod stage2;

use serde::{Deserialize, Serialize};

use crate::dataset::DatasetSplits;
use crate::encoders::Modality;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelState, Space};
use crate::nn::AdamConfig;

pub use losses::{cross_entropy, cross_entropy_with_grad, softmax, triplet_loss, triplet_loss_with_grad, TripletGrad};
pub use metrics::{read_metrics, write_metrics, MetricsRow};
pub use stage1::{select_dominant_features, train_stage1, train_stage1_from};
pub use stage2::{choose_triplets, sample_triplet_batch, train_stage2, Triplet, TripletVectors};

/// Which pathway drives the cross-entropy stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dominant {
    Audio,
    Vision,
    #[serde(alias = "tactile")]
    Touch,
    /// All three embeddings concatenated through a `3d -> C` head.
    Joint,
}

impl Dominant {
    pub const ALL: [Dominant; 4] = [Dominant::Audio, Dominant::Vision, Dominant::Touch, Dominant::Joint];

    pub fn modality(self) -> Option<Modality> {
        match self {
            Dominant::Audio => Some(Modality::Audio),
            Dominant::Vision => Some(Modality::Vision),
            Dominant::Touch => Some(Modality::Touch),
            Dominant::Joint => None,
        }
    }

    pub fn modalities(self) -> Vec<Modality> {
        self.modality().map_or_else(|| Modality::ALL.to_vec(), |m| vec![m])
    }

    pub fn name(self) -> &'static str {
        match self {
            Dominant::Audio => "audio",
            Dominant::Vision => "vision",
            Dominant::Touch => "touch",
            Dominant::Joint => "joint",
        }
    }
}

impl From<Modality> for Dominant {
    fn from(m: Modality) -> Self {
        match m {
            Modality::Audio => Dominant::Audio,
            Modality::Vision => Dominant::Vision,
            Modality::Touch => Dominant::Touch,
        }
    }
}

impl std::str::FromStr for Dominant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "joint" => Ok(Dominant::Joint),
            other => other
                .parse::<Modality>()
                .map(Dominant::from)
                .map_err(|_| Error::Config(format!("unknown dominant tag {s:?}"))),
        }
    }
}

/// Which parameters the cross-entropy stage updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage1Scope {
    /// Only the dominant branch (or all three for `joint`) and its head.
    DominantOnly,
    /// Every branch with its own head; the dominant head is still reported.
    AllBranches,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub ce_epochs: usize,
    pub triplet_epochs: usize,
    pub ce_learning_rate: f64,
    pub triplet_learning_rate: f64,
    pub margin: f64,
    pub adam: AdamConfig,
    pub dominant: Dominant,
    pub query: Space,
    pub retrieval: Space,
    pub stage1_scope: Stage1Scope,
    pub seed: u64,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 5,
            ce_epochs: 50,
            triplet_epochs: 50,
            ce_learning_rate: 1e-3,
            triplet_learning_rate: 1e-4,
            margin: 0.5,
            adam: AdamConfig::default(),
            dominant: Dominant::Audio,
            query: Space::Single(Modality::Audio),
            retrieval: Space::Fused(Modality::Vision, Modality::Touch),
            stage1_scope: Stage1Scope::DominantOnly,
            seed: 0,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(Error::Config(format!("margin must be > 0, got {}", self.margin)));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch size must be >= 2 so a negative exists".into()));
        }
        if !(self.ce_learning_rate >= 0.0) || !(self.triplet_learning_rate >= 0.0) {
            return Err(Error::Config("learning rates must be >= 0".into()));
        }
        if self.query.modalities().iter().any(|&m| self.retrieval.contains(m)) {
            return Err(Error::Config(format!(
                "query space {} and retrieval space {} share a modality",
                self.query, self.retrieval
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Branches needed to evaluate both spaces.
    pub fn retrieval_modalities(&self) -> Vec<Modality> {
        let mut m = self.query.modalities();
        m.extend(self.retrieval.modalities());
        m
    }
}

/// A trained model with its training history.
#[derive(Clone, Debug)]
pub struct StageOutcome {
    pub model: ModelState,
    pub log: Vec<MetricsRow>,
    pub skipped_batches: usize,
}

pub fn init_model(data: &DatasetSplits, config: &TrainConfig) -> Result<ModelState> {
    ModelState::new(&config.model, data.shape(), data.num_classes(), config.seed)
}

/// Stage 1 followed by stage 2, with the logs concatenated.
pub fn train(data: &DatasetSplits, config: &TrainConfig) -> Result<StageOutcome> {
    let first = train_stage1(data, config)?;
    let second = train_stage2(first.model, data, config)?;
    let mut log = first.log;
    log.extend(second.log);
    Ok(StageOutcome {
        model: second.model,
        log,
        skipped_batches: first.skipped_batches + second.skipped_batches,
    })
}
