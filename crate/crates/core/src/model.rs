//! The full three-branch model and the retrieval spaces built from it.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{mix_seed, MultimodalSample, RenderShape};
use crate::encoders::{
    AudioCache, AudioEncoder, AudioEncoderConfig, Encoder, ImageCache, ImageEncoder, ImageEncoderConfig, Modality,
};
use crate::error::{Error, Result};
use crate::fusion::{Fusion, FusionCache, FusionConfig};
use crate::nn::{join, Linear, Param, Parameters};

/// A representation space: one branch's embeddings or a fused pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Space {
    Single(Modality),
    Fused(Modality, Modality),
}

impl Space {
    pub fn modalities(self) -> Vec<Modality> {
        match self {
            Space::Single(m) => vec![m],
            Space::Fused(a, b) => vec![a, b],
        }
    }

    pub fn contains(self, m: Modality) -> bool {
        self.modalities().contains(&m)
    }

    pub fn is_fused(self) -> bool {
        matches!(self, Space::Fused(..))
    }
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Space::Single(m) => write!(f, "{m}"),
            Space::Fused(a, b) => write!(f, "{a}+{b}"),
        }
    }
}

impl FromStr for Space {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('+') {
            None => Ok(Space::Single(s.parse()?)),
            Some((a, b)) => {
                let (a, b): (Modality, Modality) = (a.parse()?, b.parse()?);
                if a == b {
                    return Err(Error::Config(format!("fused space {s:?} repeats a modality")));
                }
                Ok(Space::Fused(a, b))
            }
        }
    }
}

impl TryFrom<String> for Space {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Space> for String {
    fn from(s: Space) -> String {
        s.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub image: ImageEncoderConfig,
    pub audio: AudioEncoderConfig,
    pub fusion: FusionConfig,
    /// Attention fusion when true, concatenation + affine map otherwise.
    pub attention: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 128,
            image: ImageEncoderConfig::default(),
            audio: AudioEncoderConfig::default(),
            fusion: FusionConfig::default(),
            attention: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageTag {
    Initialized,
    Stage1,
    Stage2,
}

/// Classifier heads: one per branch plus the joint `3d -> C` head.
#[derive(Clone, Debug, PartialEq)]
pub struct Heads {
    pub vision: Linear,
    pub audio: Linear,
    pub touch: Linear,
    pub joint: Linear,
}

impl Heads {
    pub fn for_modality(&self, m: Modality) -> &Linear {
        match m {
            Modality::Vision => &self.vision,
            Modality::Audio => &self.audio,
            Modality::Touch => &self.touch,
        }
    }

    pub fn for_modality_mut(&mut self, m: Modality) -> &mut Linear {
        match m {
            Modality::Vision => &mut self.vision,
            Modality::Audio => &mut self.audio,
            Modality::Touch => &mut self.touch,
        }
    }
}

impl Parameters for Heads {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        self.vision.visit(&join(prefix, "vision"), f);
        self.audio.visit(&join(prefix, "audio"), f);
        self.touch.visit(&join(prefix, "touch"), f);
        self.joint.visit(&join(prefix, "joint"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Param)) {
        self.vision.visit_mut(&join(prefix, "vision"), f);
        self.audio.visit_mut(&join(prefix, "audio"), f);
        self.touch.visit_mut(&join(prefix, "touch"), f);
        self.joint.visit_mut(&join(prefix, "joint"), f);
    }
}

/// All trainable state: three disjoint branches, heads and the fusion block.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub vision: ImageEncoder,
    pub audio: AudioEncoder,
    pub touch: ImageEncoder,
    pub heads: Heads,
    pub fusion: Fusion,
    pub stage: StageTag,
    pub num_classes: usize,
    pub shape: RenderShape,
}

impl ModelState {
    /// Seeded initialization; identical arguments give identical parameters.
    pub fn new(config: &ModelConfig, shape: RenderShape, num_classes: usize, seed: u64) -> Result<Self> {
        let d = config.embed_dim;
        if num_classes < 2 {
            return Err(Error::Config("need at least 2 classes".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x006d_6f64_656c));
        let vision = ImageEncoder::new(Modality::Vision, shape.height, shape.width, d, &config.image, &mut rng)?;
        let audio = AudioEncoder::new(shape.audio_len, d, &config.audio, &mut rng)?;
        let touch = ImageEncoder::new(Modality::Touch, shape.height, shape.width, d, &config.image, &mut rng)?;
        let heads = Heads {
            vision: Linear::new(d, num_classes, 1.0, &mut rng),
            audio: Linear::new(d, num_classes, 1.0, &mut rng),
            touch: Linear::new(d, num_classes, 1.0, &mut rng),
            joint: Linear::new(3 * d, num_classes, 1.0, &mut rng),
        };
        let fusion = if config.attention {
            Fusion::attention(d, &config.fusion, &mut rng)?
        } else {
            Fusion::concat(d, &mut rng)
        };
        Ok(Self {
            vision,
            audio,
            touch,
            heads,
            fusion,
            stage: StageTag::Initialized,
            num_classes,
            shape,
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.audio.embed_dim()
    }

    pub fn embed(&self, sample: &MultimodalSample, m: Modality) -> Result<Vec<f64>> {
        Ok(match m {
            Modality::Vision => self.vision.encode(&sample.visual)?.values,
            Modality::Audio => self.audio.encode(&sample.audio)?.values,
            Modality::Touch => self.touch.encode(&sample.tactile)?.values,
        })
    }

    /// Representation of `sample` in `space`.
    pub fn represent(&self, sample: &MultimodalSample, space: Space) -> Result<Vec<f64>> {
        match space {
            Space::Single(m) => self.embed(sample, m),
            Space::Fused(a, b) => Ok(self
                .fusion
                .fuse(&self.embed(sample, a)?, &self.embed(sample, b)?)?
                .values),
        }
    }

    /// Embeddings of the requested branches (no caches).
    pub fn embed_many(&self, sample: &MultimodalSample, which: &[Modality]) -> Result<PerModality> {
        let mut out = PerModality::default();
        for &m in which {
            if out.get(m).is_none() {
                out.set(m, self.embed(sample, m)?);
            }
        }
        Ok(out)
    }

    /// Space representation from precomputed embeddings.
    pub fn represent_from(&self, embeddings: &PerModality, space: Space) -> Result<Vec<f64>> {
        let get = |m: Modality| {
            embeddings
                .get(m)
                .ok_or_else(|| Error::InvalidArgument(format!("{m} embedding missing")))
        };
        match space {
            Space::Single(m) => Ok(get(m)?.to_vec()),
            Space::Fused(a, b) => Ok(self.fusion.fuse(get(a)?, get(b)?)?.values),
        }
    }

    /// Forward pass of the requested branches, keeping caches for backprop.
    pub fn forward_branches(&self, sample: &MultimodalSample, which: &[Modality]) -> Result<BranchOutputs> {
        let mut out = BranchOutputs::default();
        for &m in which {
            match m {
                Modality::Vision if out.vision.is_none() => {
                    out.vision = Some(self.vision.forward_cached(&sample.visual)?)
                }
                Modality::Audio if out.audio.is_none() => out.audio = Some(self.audio.forward_cached(&sample.audio)?),
                Modality::Touch if out.touch.is_none() => out.touch = Some(self.touch.forward_cached(&sample.tactile)?),
                _ => {}
            }
        }
        Ok(out)
    }

    pub fn space_forward(&self, outputs: &BranchOutputs, space: Space) -> (Vec<f64>, Option<FusionCache>) {
        match space {
            Space::Single(m) => (outputs.embedding(m).to_vec(), None),
            Space::Fused(a, b) => {
                let (f, cache) = self.fusion.forward(outputs.embedding(a), outputs.embedding(b));
                (f, Some(cache))
            }
        }
    }

    /// Backpropagates `d_rep` through the space's fusion (if any) into the
    /// per-branch embedding gradients in `d_emb`.
    pub fn space_backward(
        &self,
        space: Space,
        cache: Option<&FusionCache>,
        d_rep: &[f64],
        grads: &mut ModelState,
        d_emb: &mut PerModality,
    ) {
        match space {
            Space::Single(m) => d_emb.add(m, d_rep),
            Space::Fused(a, b) => {
                let cache = cache.expect("fused space needs a fusion cache");
                let (da, db) = self.fusion.backward(cache, d_rep, &mut grads.fusion);
                d_emb.add(a, &da);
                d_emb.add(b, &db);
            }
        }
    }

    pub fn backward_branches(&self, outputs: &BranchOutputs, d_emb: &PerModality, grads: &mut ModelState) {
        if let (Some((_, c)), Some(d)) = (&outputs.vision, &d_emb.vision) {
            self.vision.backward(c, d, &mut grads.vision);
        }
        if let (Some((_, c)), Some(d)) = (&outputs.audio, &d_emb.audio) {
            self.audio.backward(c, d, &mut grads.audio);
        }
        if let (Some((_, c)), Some(d)) = (&outputs.touch, &d_emb.touch) {
            self.touch.backward(c, d, &mut grads.touch);
        }
    }

    /// Mutable references to the parameters whose names start with any of `prefixes`.
    pub fn select_params_mut(&mut self, prefixes: &[String]) -> Vec<&mut Param> {
        self.named_params_mut()
            .into_iter()
            .filter(|(n, _)| prefixes.iter().any(|p| n.starts_with(p.as_str())))
            .map(|(_, p)| p)
            .collect()
    }

    pub fn select_params(&self, prefixes: &[String]) -> Vec<&Param> {
        self.named_params()
            .into_iter()
            .filter(|(n, _)| prefixes.iter().any(|p| n.starts_with(p.as_str())))
            .map(|(_, p)| p)
            .collect()
    }
}

impl Parameters for ModelState {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        self.vision.visit(&join(prefix, "vision"), f);
        self.audio.visit(&join(prefix, "audio"), f);
        self.touch.visit(&join(prefix, "touch"), f);
        self.heads.visit(&join(prefix, "heads"), f);
        self.fusion.visit(&join(prefix, "fusion"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Param)) {
        self.vision.visit_mut(&join(prefix, "vision"), f);
        self.audio.visit_mut(&join(prefix, "audio"), f);
        self.touch.visit_mut(&join(prefix, "touch"), f);
        self.heads.visit_mut(&join(prefix, "heads"), f);
        self.fusion.visit_mut(&join(prefix, "fusion"), f);
    }
}

/// Cached branch outputs for one sample.
#[derive(Default)]
pub struct BranchOutputs {
    pub vision: Option<(Vec<f64>, ImageCache)>,
    pub audio: Option<(Vec<f64>, AudioCache)>,
    pub touch: Option<(Vec<f64>, ImageCache)>,
}

impl BranchOutputs {
    pub fn embedding(&self, m: Modality) -> &[f64] {
        let e = match m {
            Modality::Vision => self.vision.as_ref().map(|x| &x.0),
            Modality::Audio => self.audio.as_ref().map(|x| &x.0),
            Modality::Touch => self.touch.as_ref().map(|x| &x.0),
        };
        e.unwrap_or_else(|| panic!("{m} branch was not evaluated"))
    }
}

/// One optional vector per branch: embeddings, or their gradients.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PerModality {
    pub vision: Option<Vec<f64>>,
    pub audio: Option<Vec<f64>>,
    pub touch: Option<Vec<f64>>,
}

impl PerModality {
    pub fn get(&self, m: Modality) -> Option<&[f64]> {
        match m {
            Modality::Vision => self.vision.as_deref(),
            Modality::Audio => self.audio.as_deref(),
            Modality::Touch => self.touch.as_deref(),
        }
    }

    pub fn set(&mut self, m: Modality, v: Vec<f64>) {
        match m {
            Modality::Vision => self.vision = Some(v),
            Modality::Audio => self.audio = Some(v),
            Modality::Touch => self.touch = Some(v),
        }
    }

    pub fn add(&mut self, m: Modality, d: &[f64]) {
        let slot = match m {
            Modality::Vision => &mut self.vision,
            Modality::Audio => &mut self.audio,
            Modality::Touch => &mut self.touch,
        };
        match slot {
            Some(acc) => acc.iter_mut().zip(d).for_each(|(a, b)| *a += b),
            None => *slot = Some(d.to_vec()),
        }
    }
}
