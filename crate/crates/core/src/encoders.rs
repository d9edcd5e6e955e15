//! The three disjoint modality branches.
//!
//! Vision and touch share an architecture family ([`ImageEncoder`]) but never
//! parameters; audio uses a 1D convolutional stack ([`AudioEncoder`]). Any
//! other backbone (for example a large pretrained image network) can be
//! slotted in by implementing [`Encoder`].

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::nn::{
    global_average_pool, global_average_pool_backward, join, relu_backward_in_place, relu_in_place, Conv1d, Conv2d,
    Linear, Param, Parameters,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Vision,
    Audio,
    #[serde(alias = "tactile")]
    Touch,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Vision, Modality::Audio, Modality::Touch];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Vision => "vision",
            Modality::Audio => "audio",
            Modality::Touch => "touch",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "vision" | "visual" => Ok(Modality::Vision),
            "audio" => Ok(Modality::Audio),
            "touch" | "tactile" => Ok(Modality::Touch),
            other => Err(Error::Config(format!("unknown modality {other:?}"))),
        }
    }
}

/// Output of one encoder branch.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    pub values: Vec<f64>,
    pub modality: Modality,
}

impl Embedding {
    pub fn new(values: Vec<f64>, modality: Modality) -> Self {
        Self { values, modality }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImageEncoderConfig {
    /// Output channels of each stride-2 conv block.
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// Standardize each input image before the conv stack.
    pub input_norm: bool,
    /// Scale each output embedding to unit Euclidean norm.
    pub output_norm: bool,
}

impl Default for ImageEncoderConfig {
    fn default() -> Self {
        Self {
            channels: vec![8, 16, 16, 32],
            kernel: 3,
            stride: 2,
            padding: 1,
            input_norm: false,
            output_norm: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AudioEncoderConfig {
    pub channels: [usize; 3],
    pub kernels: [usize; 3],
    pub strides: [usize; 3],
    pub input_norm: bool,
    pub output_norm: bool,
}

impl Default for AudioEncoderConfig {
    fn default() -> Self {
        Self {
            channels: [8, 16, 32],
            kernels: [16, 8, 4],
            strides: [4, 4, 2],
            input_norm: false,
            output_norm: true,
        }
    }
}

/// A trainable branch mapping one modality's raw input to an embedding.
pub trait Encoder: Parameters + Clone + Send + Sync {
    type Cache: Send;

    fn modality(&self) -> Modality;
    fn embed_dim(&self) -> usize;
    fn input_len(&self) -> usize;
    fn forward_cached(&self, input: &[f32]) -> Result<(Vec<f64>, Self::Cache)>;
    /// Accumulates parameter gradients for `d_out = dL/d(embedding)`.
    fn backward(&self, cache: &Self::Cache, d_out: &[f64], grad: &mut Self);

    fn encode(&self, input: &[f32]) -> Result<Embedding> {
        let (values, _) = self.forward_cached(input)?;
        Ok(Embedding::new(values, self.modality()))
    }
}

fn standardize(x: &mut [f64]) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let inv = 1.0 / var.sqrt().max(1e-6);
    x.iter_mut().for_each(|v| *v = (*v - mean) * inv);
}

const NORM_EPS: f64 = 1e-6;

/// Optionally maps `y` to `y / sqrt(‖y‖² + ε²)`, keeping what the backward
/// pass needs. The ε keeps the map smooth through `y = 0`.
fn finish(y: Vec<f64>, normalize: bool) -> (Vec<f64>, Option<(Vec<f64>, f64)>) {
    if !normalize {
        return (y, None);
    }
    let norm = (y.iter().map(|v| v * v).sum::<f64>() + NORM_EPS * NORM_EPS).sqrt();
    let e: Vec<f64> = y.iter().map(|v| v / norm).collect();
    (e.clone(), Some((e, norm)))
}

/// `dL/dy = (g - e (e·g)) / s` for `e = y / s`.
fn unnormalize_grad(norm: &Option<(Vec<f64>, f64)>, g: &[f64]) -> Vec<f64> {
    match norm {
        None => g.to_vec(),
        Some((e, n)) => {
            let dot: f64 = e.iter().zip(g).map(|(a, b)| a * b).sum();
            e.iter().zip(g).map(|(ei, gi)| (gi - ei * dot) / n).collect()
        }
    }
}

/// Strided conv blocks, global average pooling, affine map to `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageEncoder {
    pub modality: Modality,
    pub height: usize,
    pub width: usize,
    pub input_norm: bool,
    pub output_norm: bool,
    pub convs: Vec<Conv2d>,
    pub proj: Linear,
}

#[derive(Debug)]
pub struct ImageCache {
    /// Input of each conv layer with its spatial size, plus the final activation.
    activations: Vec<(Vec<f64>, usize, usize)>,
    pooled: Vec<f64>,
    norm: Option<(Vec<f64>, f64)>,
}

impl ImageEncoder {
    pub fn new(
        modality: Modality,
        height: usize,
        width: usize,
        embed_dim: usize,
        config: &ImageEncoderConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if config.channels.is_empty() || embed_dim == 0 {
            return Err(Error::Config("image encoder needs >= 1 conv block and d >= 1".into()));
        }
        let mut convs = Vec::with_capacity(config.channels.len());
        let (mut h, mut w, mut c_in) = (height, width, 3);
        for &c_out in &config.channels {
            let conv = Conv2d::new(c_in, c_out, config.kernel, config.stride, config.padding, rng);
            (h, w) = conv
                .output_hw(h, w)
                .ok_or_else(|| Error::Config(format!("image {height}x{width} too small for conv stack")))?;
            convs.push(conv);
            c_in = c_out;
        }
        Ok(Self {
            modality,
            height,
            width,
            input_norm: config.input_norm,
            output_norm: config.output_norm,
            convs,
            proj: Linear::new(c_in, embed_dim, 1.0, rng),
        })
    }
}

impl Encoder for ImageEncoder {
    type Cache = ImageCache;

    fn modality(&self) -> Modality {
        self.modality
    }

    fn embed_dim(&self) -> usize {
        self.proj.output_dim()
    }

    fn input_len(&self) -> usize {
        self.height * self.width * 3
    }

    fn forward_cached(&self, image: &[f32]) -> Result<(Vec<f64>, ImageCache)> {
        let (h, w) = (self.height, self.width);
        if image.len() != h * w * 3 {
            return Err(invalid(format!(
                "{} encoder expects a {h}x{w}x3 image ({} values), got {}",
                self.modality,
                h * w * 3,
                image.len()
            )));
        }
        // HWC -> CHW
        let mut x = vec![0.0; 3 * h * w];
        for (p, px) in image.chunks_exact(3).enumerate() {
            for c in 0..3 {
                x[c * h * w + p] = px[c] as f64;
            }
        }
        if self.input_norm {
            standardize(&mut x);
        }
        let mut activations = Vec::with_capacity(self.convs.len() + 1);
        let (mut ch, mut cw) = (h, w);
        for conv in &self.convs {
            let (mut y, oh, ow) = conv.forward(&x, ch, cw);
            relu_in_place(&mut y);
            activations.push((std::mem::replace(&mut x, y), ch, cw));
            (ch, cw) = (oh, ow);
        }
        let channels = self.proj.input_dim();
        let pooled = global_average_pool(&x, channels, ch * cw);
        activations.push((x, ch, cw));
        let (out, norm) = finish(self.proj.forward(&pooled), self.output_norm);
        Ok((
            out,
            ImageCache {
                activations,
                pooled,
                norm,
            },
        ))
    }

    fn backward(&self, cache: &ImageCache, d_out: &[f64], grad: &mut Self) {
        let d_out = unnormalize_grad(&cache.norm, d_out);
        let d_pool = self.proj.backward(&cache.pooled, &d_out, &mut grad.proj);
        let (last, lh, lw) = cache.activations.last().expect("cache has final activation");
        let mut d = global_average_pool_backward(&d_pool, lh * lw);
        relu_backward_in_place(last, &mut d);
        for (i, conv) in self.convs.iter().enumerate().rev() {
            let (input, ih, iw) = &cache.activations[i];
            d = conv.backward(input, *ih, *iw, &d, &mut grad.convs[i]);
            if i > 0 {
                relu_backward_in_place(input, &mut d);
            }
        }
    }
}

impl Parameters for ImageEncoder {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        self.convs.visit(&join(prefix, "conv"), f);
        self.proj.visit(&join(prefix, "proj"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Param)) {
        self.convs.visit_mut(&join(prefix, "conv"), f);
        self.proj.visit_mut(&join(prefix, "proj"), f);
    }
}

/// Three strided 1D convolutions, global average pooling, affine map to `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioEncoder {
    pub length: usize,
    pub input_norm: bool,
    pub output_norm: bool,
    pub convs: Vec<Conv1d>,
    pub proj: Linear,
}

#[derive(Debug)]
pub struct AudioCache {
    activations: Vec<(Vec<f64>, usize)>,
    pooled: Vec<f64>,
    norm: Option<(Vec<f64>, f64)>,
}

impl AudioEncoder {
    pub fn new(length: usize, embed_dim: usize, config: &AudioEncoderConfig, rng: &mut impl Rng) -> Result<Self> {
        if config.strides.iter().any(|&s| s < 2) {
            return Err(Error::Config("audio conv strides must be >= 2".into()));
        }
        if embed_dim == 0 {
            return Err(Error::Config("embedding dimension must be >= 1".into()));
        }
        let mut convs = Vec::with_capacity(3);
        let (mut len, mut c_in) = (length, 1);
        for i in 0..3 {
            let conv = Conv1d::new(c_in, config.channels[i], config.kernels[i], config.strides[i], rng);
            len = conv
                .output_len(len)
                .ok_or_else(|| Error::Config(format!("audio length {length} too short for conv stack")))?;
            convs.push(conv);
            c_in = config.channels[i];
        }
        Ok(Self {
            length,
            input_norm: config.input_norm,
            output_norm: config.output_norm,
            convs,
            proj: Linear::new(c_in, embed_dim, 1.0, rng),
        })
    }
}

impl Encoder for AudioEncoder {
    type Cache = AudioCache;

    fn modality(&self) -> Modality {
        Modality::Audio
    }

    fn embed_dim(&self) -> usize {
        self.proj.output_dim()
    }

    fn input_len(&self) -> usize {
        self.length
    }

    fn forward_cached(&self, signal: &[f32]) -> Result<(Vec<f64>, AudioCache)> {
        if signal.len() != self.length {
            return Err(invalid(format!(
                "audio encoder expects {} samples, got {}",
                self.length,
                signal.len()
            )));
        }
        let mut x: Vec<f64> = signal.iter().map(|&v| v as f64).collect();
        if self.input_norm {
            standardize(&mut x);
        }
        let mut len = self.length;
        let mut activations = Vec::with_capacity(4);
        for conv in &self.convs {
            let (mut y, out_len) = conv.forward(&x, len);
            relu_in_place(&mut y);
            activations.push((std::mem::replace(&mut x, y), len));
            len = out_len;
        }
        let pooled = global_average_pool(&x, self.proj.input_dim(), len);
        activations.push((x, len));
        let (out, norm) = finish(self.proj.forward(&pooled), self.output_norm);
        Ok((
            out,
            AudioCache {
                activations,
                pooled,
                norm,
            },
        ))
    }

    fn backward(&self, cache: &AudioCache, d_out: &[f64], grad: &mut Self) {
        let d_out = unnormalize_grad(&cache.norm, d_out);
        let d_pool = self.proj.backward(&cache.pooled, &d_out, &mut grad.proj);
        let (last, len) = cache.activations.last().expect("cache has final activation");
        let mut d = global_average_pool_backward(&d_pool, *len);
        relu_backward_in_place(last, &mut d);
        for (i, conv) in self.convs.iter().enumerate().rev() {
            let (input, in_len) = &cache.activations[i];
            d = conv.backward(input, *in_len, &d, &mut grad.convs[i]);
            if i > 0 {
                relu_backward_in_place(input, &mut d);
            }
        }
    }
}

impl Parameters for AudioEncoder {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        self.convs.visit(&join(prefix, "conv"), f);
        self.proj.visit(&join(prefix, "proj"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Param)) {
        self.convs.visit_mut(&join(prefix, "conv"), f);
        self.proj.visit_mut(&join(prefix, "proj"), f);
    }
}

pub fn encode_visual(image: &[f32], params: &ImageEncoder) -> Result<Embedding> {
    if params.modality != Modality::Vision {
        return Err(invalid(format!("encode_visual given a {} encoder", params.modality)));
    }
    params.encode(image)
}

pub fn encode_tactile(image: &[f32], params: &ImageEncoder) -> Result<Embedding> {
    if params.modality != Modality::Touch {
        return Err(invalid(format!("encode_tactile given a {} encoder", params.modality)));
    }
    params.encode(image)
}

pub fn encode_audio(signal: &[f32], params: &AudioEncoder) -> Result<Embedding> {
    params.encode(signal)
}

/// Class logits `W e + b` from a classifier head.
pub fn classify(embedding: &[f64], head: &Linear) -> Result<Vec<f64>> {
    if embedding.len() != head.input_dim() {
        return Err(invalid(format!(
            "classifier head expects dimension {}, got {}",
            head.input_dim(),
            embedding.len()
        )));
    }
    Ok(head.forward(embedding))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    fn image_encoder(modality: Modality) -> ImageEncoder {
        ImageEncoder::new(modality, 16, 16, 8, &ImageEncoderConfig::default(), &mut rng()).unwrap()
    }

    fn audio_encoder() -> AudioEncoder {
        let cfg = AudioEncoderConfig {
            channels: [4, 4, 4],
            kernels: [4, 4, 2],
            strides: [2, 2, 2],
            ..Default::default()
        };
        AudioEncoder::new(64, 8, &cfg, &mut rng()).unwrap()
    }

    fn random_image(seed: u64) -> Vec<f32> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        (0..16 * 16 * 3).map(|_| r.gen::<f32>()).collect()
    }

    #[test]
    fn zero_image_through_zero_head_is_zero() {
        let mut enc = image_encoder(Modality::Vision);
        enc.proj = enc.proj.zeros_like();
        let e = encode_visual(&vec![0.0; 16 * 16 * 3], &enc).unwrap();
        assert_eq!(e.values, vec![0.0; 8]);
        assert_eq!(e.modality, Modality::Vision);
    }

    #[test]
    fn image_encoding_is_deterministic_and_sensitive() {
        for modality in [Modality::Vision, Modality::Touch] {
            let enc = image_encoder(modality);
            let img = random_image(1);
            let encode = if modality == Modality::Vision {
                encode_visual
            } else {
                encode_tactile
            };
            let a = encode(&img, &enc).unwrap();
            let b = encode(&img, &enc).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.dim(), 8);
            let mut other = img.clone();
            other[100] += 0.5;
            assert_ne!(encode(&other, &enc).unwrap(), a);
        }
    }

    #[test]
    fn wrong_shapes_are_rejected() {
        let enc = image_encoder(Modality::Vision);
        assert!(matches!(
            encode_visual(&[0.0; 10], &enc),
            Err(Error::InvalidArgument(_))
        ));
        assert!(encode_tactile(&random_image(0), &enc).is_err());
        let audio = audio_encoder();
        assert!(matches!(
            encode_audio(&[0.0; 63], &audio),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn zero_signal_with_zero_biases_is_zero() {
        let enc = audio_encoder();
        let e = encode_audio(&[0.0; 64], &enc).unwrap();
        assert_eq!(e.values, vec![0.0; 8]);
    }

    #[test]
    fn constant_and_tone_embed_differently() {
        let enc = audio_encoder();
        let tone: Vec<f32> = (0..64).map(|i| (i as f32 * 0.7).sin()).collect();
        let a = encode_audio(&tone, &enc).unwrap();
        assert_eq!(a, encode_audio(&tone, &enc).unwrap());
        assert_ne!(encode_audio(&[0.5; 64], &enc).unwrap(), a);
    }

    #[test]
    fn classify_edge_cases() {
        let mut head = Linear::new(3, 3, 1.0, &mut rng());
        head = head.zeros_like();
        assert_eq!(classify(&[1.0, 2.0, 3.0], &head).unwrap(), vec![0.0; 3]);
        head.weight.value = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        assert_eq!(classify(&[0.0, 1.0, 0.0], &head).unwrap(), vec![0.0, 1.0, 0.0]);
        assert!(classify(&[1.0, 2.0], &head).is_err());
    }

    #[test]
    fn too_small_inputs_are_config_errors() {
        let cfg = ImageEncoderConfig {
            kernel: 5,
            padding: 0,
            ..Default::default()
        };
        assert!(matches!(
            ImageEncoder::new(Modality::Vision, 8, 8, 4, &cfg, &mut rng()),
            Err(Error::Config(_))
        ));
        assert!(AudioEncoder::new(8, 4, &AudioEncoderConfig::default(), &mut rng()).is_err());
    }

    #[test]
    fn output_norm_gives_unit_embeddings() {
        let enc = image_encoder(Modality::Touch);
        let e = encode_tactile(&random_image(5), &enc).unwrap();
        let norm: f64 = e.values.iter().map(|v| v * v).sum::<f64>().sqrt();

        let mut raw = enc.clone();
        raw.output_norm = false;
        let r = encode_tactile(&random_image(5), &raw).unwrap();
        let rn: f64 = r.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        let s = (rn * rn + NORM_EPS * NORM_EPS).sqrt();
        assert!((norm - rn / s).abs() < 1e-12);
        assert!((norm - 1.0).abs() < 1e-6, "{norm}");
        for (a, b) in e.values.iter().zip(&r.values) {
            assert!((a - b / s).abs() < 1e-12);
        }
    }

    #[test]
    fn modality_parsing() {
        assert_eq!("Tactile".parse::<Modality>().unwrap(), Modality::Touch);
        assert!("smell".parse::<Modality>().is_err());
    }
}
