//! Seeded synthetic generation of paired vision/audio/touch samples.

mod render;
mod spectrum;
mod storage;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use render::{
    generate_object_bank, render_audio, render_tactile, render_visual, AudioParams, ObjectSpec, RenderShape,
    TactileParams, VisualParams,
};
pub use spectrum::{magnitude_spectrum, spectrogram};
pub use storage::{load_dataset, save_dataset};

pub const RENDERER_VERSION: &str = "vatcmr-synth/1";

/// Class label of a sample, stored as an index into `num_classes`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OneHot {
    pub class: usize,
    pub num_classes: usize,
}

impl OneHot {
    pub fn new(class: usize, num_classes: usize) -> Result<Self> {
        if class >= num_classes {
            return Err(invalid(format!("class {class} out of range for {num_classes} classes")));
        }
        Ok(Self { class, num_classes })
    }

    pub fn to_vec(self) -> Vec<f64> {
        let mut v = vec![0.0; self.num_classes];
        v[self.class] = 1.0;
        v
    }
}

/// One object instance observed in all three modalities.
#[derive(Clone, Debug, PartialEq)]
pub struct MultimodalSample {
    pub id: u64,
    /// `[H, W, 3]` row-major.
    pub visual: Vec<f32>,
    /// `[L]` time-domain signal.
    pub audio: Vec<f32>,
    /// `[H, W, 3]` row-major.
    pub tactile: Vec<f32>,
    pub label: OneHot,
}

impl MultimodalSample {
    pub fn class(&self) -> usize {
        self.label.class
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Ranges the per-sample rendering parameters are drawn from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingRanges {
    pub camera_radius: (f64, f64),
    pub light_radius: (f64, f64),
    /// Minimum z component of the unit light direction.
    pub light_min_elevation: f64,
    pub force_magnitude: (f64, f64),
    pub displacement: (f64, f64),
}

impl Default for SamplingRanges {
    fn default() -> Self {
        Self {
            camera_radius: (2.0, 4.0),
            light_radius: (1.0, 3.0),
            light_min_elevation: 0.3,
            force_magnitude: (0.5, 2.0),
            displacement: (0.2, 1.5),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub num_classes: usize,
    pub counts: SplitCounts,
    pub shape: RenderShape,
    pub sampling: SamplingRanges,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplits {
    pub train: Vec<MultimodalSample>,
    pub val: Vec<MultimodalSample>,
    pub test: Vec<MultimodalSample>,
    pub manifest: Manifest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl DatasetSplits {
    pub fn split(&self, split: Split) -> &[MultimodalSample] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.manifest.num_classes
    }

    pub fn shape(&self) -> RenderShape {
        self.manifest.shape
    }
}

/// Everything needed to generate a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub num_classes: usize,
    pub counts: SplitCounts,
    pub seed: u64,
    pub shape: RenderShape,
    pub sampling: SamplingRanges,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            num_classes: 5,
            counts: SplitCounts {
                train: 500,
                val: 100,
                test: 100,
            },
            seed: 0,
            shape: RenderShape::default(),
            sampling: SamplingRanges::default(),
        }
    }
}

impl DatasetConfig {
    /// 20 objects with 25,500 / 4,500 / 4,500 samples.
    pub fn paper_scale(seed: u64) -> Self {
        Self {
            num_classes: 20,
            counts: SplitCounts {
                train: 25_500,
                val: 4_500,
                test: 4_500,
            },
            seed,
            ..Self::default()
        }
    }
}

/// The three parameter records drawn for one sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleParams {
    pub visual: VisualParams,
    pub audio: AudioParams,
    pub tactile: TactileParams,
}

fn unit_vector(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        if n2 > 1e-4 && n2 <= 1.0 {
            let n = n2.sqrt();
            return v.map(|x| x / n);
        }
    }
}

pub fn sample_params(ranges: &SamplingRanges, rng: &mut impl Rng) -> SampleParams {
    let camera_r = rng.gen_range(ranges.camera_radius.0..ranges.camera_radius.1);
    let camera = unit_vector(rng).map(|x| x * camera_r);
    let light_dir = loop {
        let d = unit_vector(rng);
        if d[2] >= ranges.light_min_elevation {
            break d;
        }
    };
    let light_r = rng.gen_range(ranges.light_radius.0..ranges.light_radius.1);
    let force_mag = rng.gen_range(ranges.force_magnitude.0..ranges.force_magnitude.1);
    let audio = AudioParams {
        contact_point: unit_vector(rng),
        force: unit_vector(rng).map(|x| x * force_mag),
    };
    let tactile = TactileParams {
        contact_point: unit_vector(rng),
        theta: rng.gen_range(0.0..std::f64::consts::TAU),
        phi: rng.gen_range(0.0..=std::f64::consts::PI),
        displacement: rng.gen_range(ranges.displacement.0..ranges.displacement.1),
    };
    SampleParams {
        visual: VisualParams {
            camera,
            light: light_dir.map(|x| x * light_r),
        },
        audio,
        tactile,
    }
}

/// SplitMix64 finalizer; used to give each sample an independent stream.
pub(crate) fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Renders all three modalities of one object from a single parameter draw.
pub fn render_sample(
    id: u64,
    spec: &ObjectSpec,
    num_classes: usize,
    params: &SampleParams,
    shape: RenderShape,
) -> Result<MultimodalSample> {
    Ok(MultimodalSample {
        id,
        visual: render_visual(spec, &params.visual, shape)?,
        audio: render_audio(spec, &params.audio, shape)?,
        tactile: render_tactile(spec, &params.tactile, shape)?,
        label: OneHot::new(spec.class_id, num_classes)?,
    })
}

pub fn build_dataset(config: &DatasetConfig) -> Result<DatasetSplits> {
    let c = config.num_classes;
    let counts = config.counts;
    if counts.train < c || counts.val < c || counts.test < c {
        return Err(invalid(format!(
            "every split needs at least {c} samples, got {counts:?}"
        )));
    }
    if config.shape.height == 0 || config.shape.width == 0 || config.shape.audio_len == 0 {
        return Err(invalid("render shape must be nonzero"));
    }
    let bank = generate_object_bank(c, config.seed)?;
    let render_split = |first_id: u64, n: usize| -> Result<Vec<MultimodalSample>> {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let id = first_id + i as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, id));
                let params = sample_params(&config.sampling, &mut rng);
                render_sample(id, &bank[i % c], c, &params, config.shape)
            })
            .collect()
    };
    let train = render_split(0, counts.train)?;
    let val = render_split(counts.train as u64, counts.val)?;
    let test = render_split((counts.train + counts.val) as u64, counts.test)?;
    Ok(DatasetSplits {
        train,
        val,
        test,
        manifest: Manifest {
            version: RENDERER_VERSION.to_string(),
            seed: config.seed,
            num_classes: c,
            counts,
            shape: config.shape,
            sampling: config.sampling.clone(),
        },
    })
}
