//! Minimal dense and convolutional layers with hand-written backward passes.
//!
//! Every layer works on single samples stored as flat, channel-major `f64`
//! slices. Gradients are stored in a value of the same type as the layer
//! (see [`Parameters::zeros_like`]), which keeps optimizer bookkeeping a
//! simple zip over named parameters.

mod adam;

pub use adam::{Adam, AdamConfig};

use rand::Rng;

/// A named tensor of trainable values.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
}

impl Param {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            value: vec![0.0; n],
        }
    }

    /// Uniform in `±gain·sqrt(3 / fan_in)`.
    pub fn uniform(shape: Vec<usize>, fan_in: usize, gain: f64, rng: &mut impl Rng) -> Self {
        let bound = gain * (3.0 / fan_in.max(1) as f64).sqrt();
        let n = shape.iter().product();
        Self {
            shape,
            value: (0..n).map(|_| rng.gen_range(-bound..=bound)).collect(),
        }
    }
}

/// Gain for rectified-linear layers (He initialization).
pub const RELU_GAIN: f64 = std::f64::consts::SQRT_2;

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Anything that owns trainable parameters.
pub trait Parameters {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param));
    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Param));

    fn named_params(&self) -> Vec<(String, &Param)> {
        let mut out = Vec::new();
        self.visit("", &mut |n, p| out.push((n, p)));
        out
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out = Vec::new();
        self.visit_mut("", &mut |n, p| out.push((n, p)));
        out
    }

    fn num_params(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.value.len()).sum()
    }

    fn zeros_like(&self) -> Self
    where
        Self: Clone,
    {
        let mut z = self.clone();
        z.visit_mut("", &mut |_, p| p.value.iter_mut().for_each(|v| *v = 0.0));
        z
    }

    /// Elementwise `self += other`; both must have the same structure.
    fn accumulate(&mut self, other: &Self) {
        let src = other.named_params();
        let mut i = 0;
        self.visit_mut("", &mut |_, p| {
            for (a, b) in p.value.iter_mut().zip(&src[i].1.value) {
                *a += b;
            }
            i += 1;
        });
    }

    fn scale(&mut self, factor: f64) {
        self.visit_mut("", &mut |_, p| p.value.iter_mut().for_each(|v| *v *= factor));
    }

    /// Name of the first parameter holding a NaN or infinity.
    fn first_non_finite(&self) -> Option<String> {
        self.named_params()
            .into_iter()
            .find(|(_, p)| p.value.iter().any(|v| !v.is_finite()))
            .map(|(n, _)| n)
    }
}

impl<T: Parameters> Parameters for Vec<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        for (i, item) in self.iter().enumerate() {
            item.visit(&join(prefix, &i.to_string()), f);
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Param)) {
        for (i, item) in self.iter_mut().enumerate() {
            item.visit_mut(&join(prefix, &i.to_string()), f);
        }
    }
}

/// `y = W x + b` with `W: [out, in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    pub fn new(input: usize, output: usize, gain: f64, rng: &mut impl Rng) -> Self {
        Self {
            weight: Param::uniform(vec![output, input], input, gain, rng),
            bias: Param::zeros(vec![output]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let n_in = self.input_dim();
        debug_assert_eq!(x.len(), n_in);
        self.weight
            .value
            .chunks_exact(n_in)
            .zip(&self.bias.value)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Linear) -> Vec<f64> {
        let n_in = self.input_dim();
        let mut dx = vec![0.0; n_in];
        for (o, &g) in dy.iter().enumerate() {
            grad.bias.value[o] += g;
            let row = &self.weight.value[o * n_in..(o + 1) * n_in];
            let grow = &mut grad.weight.value[o * n_in..(o + 1) * n_in];
            for i in 0..n_in {
                grow[i] += g * x[i];
                dx[i] += g * row[i];
            }
        }
        dx
    }
}

impl Parameters for Linear {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Param)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

/// Valid (unpadded) 1D convolution, weight `[out, in, k]`, input `[in, len]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d {
    pub weight: Param,
    pub bias: Param,
    pub stride: usize,
}

impl Conv1d {
    pub fn new(input: usize, output: usize, kernel: usize, stride: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: Param::uniform(vec![output, input, kernel], input * kernel, RELU_GAIN, rng),
            bias: Param::zeros(vec![output]),
            stride,
        }
    }

    fn dims(&self) -> (usize, usize, usize) {
        (self.weight.shape[0], self.weight.shape[1], self.weight.shape[2])
    }

    pub fn output_len(&self, len: usize) -> Option<usize> {
        let k = self.weight.shape[2];
        (len >= k && self.stride > 0).then(|| (len - k) / self.stride + 1)
    }

    pub fn forward(&self, x: &[f64], len: usize) -> (Vec<f64>, usize) {
        let (n_out, n_in, k) = self.dims();
        let out_len = self.output_len(len).expect("input shorter than kernel");
        let s = self.stride;
        let mut out = vec![0.0; n_out * out_len];
        for oc in 0..n_out {
            let y = &mut out[oc * out_len..(oc + 1) * out_len];
            y.iter_mut().for_each(|v| *v = self.bias.value[oc]);
            for ic in 0..n_in {
                let xin = &x[ic * len..(ic + 1) * len];
                let w = &self.weight.value[(oc * n_in + ic) * k..(oc * n_in + ic + 1) * k];
                for (t, yv) in y.iter_mut().enumerate() {
                    let window = &xin[t * s..t * s + k];
                    *yv += w.iter().zip(window).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
        (out, out_len)
    }

    pub fn backward(&self, x: &[f64], len: usize, dy: &[f64], grad: &mut Conv1d) -> Vec<f64> {
        let (n_out, n_in, k) = self.dims();
        let out_len = dy.len() / n_out;
        let s = self.stride;
        let mut dx = vec![0.0; n_in * len];
        for oc in 0..n_out {
            let g = &dy[oc * out_len..(oc + 1) * out_len];
            grad.bias.value[oc] += g.iter().sum::<f64>();
            for ic in 0..n_in {
                let base = (oc * n_in + ic) * k;
                let xin = &x[ic * len..(ic + 1) * len];
                let dxin = &mut dx[ic * len..(ic + 1) * len];
                let w = &self.weight.value[base..base + k];
                let gw = &mut grad.weight.value[base..base + k];
                for (t, &gv) in g.iter().enumerate() {
                    if gv == 0.0 {
                        continue;
                    }
                    let off = t * s;
                    for j in 0..k {
                        gw[j] += gv * xin[off + j];
                        dxin[off + j] += gv * w[j];
                    }
                }
            }
        }
        dx
    }
}

impl Parameters for Conv1d {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Param)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

/// Square-kernel 2D convolution with zero padding, weight `[out, in, k, k]`,
/// input `[in, h, w]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    pub stride: usize,
    pub padding: usize,
}

/// Output positions `o` whose input tap `o*s + tap - pad` lands in `[0, n)`.
fn valid_range(n_out: usize, n_in: usize, s: usize, tap: usize, pad: usize) -> std::ops::Range<usize> {
    let lo = if tap >= pad { 0 } else { (pad - tap).div_ceil(s) };
    // largest o with o*s + tap - pad <= n_in - 1
    let hi = if n_in + pad > tap {
        ((n_in - 1 + pad - tap) / s + 1).min(n_out)
    } else {
        0
    };
    lo..hi.max(lo)
}

impl Conv2d {
    pub fn new(input: usize, output: usize, kernel: usize, stride: usize, padding: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: Param::uniform(
                vec![output, input, kernel, kernel],
                input * kernel * kernel,
                RELU_GAIN,
                rng,
            ),
            bias: Param::zeros(vec![output]),
            stride,
            padding,
        }
    }

    fn dims(&self) -> (usize, usize, usize) {
        (self.weight.shape[0], self.weight.shape[1], self.weight.shape[2])
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let k = self.weight.shape[2];
        let p = self.padding;
        if h + 2 * p < k || w + 2 * p < k || self.stride == 0 {
            return None;
        }
        Some(((h + 2 * p - k) / self.stride + 1, (w + 2 * p - k) / self.stride + 1))
    }

    pub fn forward(&self, x: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
        let (n_out, n_in, k) = self.dims();
        let (oh, ow) = self.output_hw(h, w).expect("input smaller than kernel");
        let (s, p) = (self.stride, self.padding);
        let mut out = vec![0.0; n_out * oh * ow];
        for oc in 0..n_out {
            let y = &mut out[oc * oh * ow..(oc + 1) * oh * ow];
            y.iter_mut().for_each(|v| *v = self.bias.value[oc]);
            for ic in 0..n_in {
                let xin = &x[ic * h * w..(ic + 1) * h * w];
                for ky in 0..k {
                    let rows = valid_range(oh, h, s, ky, p);
                    for kx in 0..k {
                        let wv = self.weight.value[((oc * n_in + ic) * k + ky) * k + kx];
                        let cols = valid_range(ow, w, s, kx, p);
                        for oy in rows.clone() {
                            let iy = oy * s + ky - p;
                            let xrow = &xin[iy * w..(iy + 1) * w];
                            let yrow = &mut y[oy * ow..(oy + 1) * ow];
                            for ox in cols.clone() {
                                yrow[ox] += wv * xrow[ox * s + kx - p];
                            }
                        }
                    }
                }
            }
        }
        (out, oh, ow)
    }

    pub fn backward(&self, x: &[f64], h: usize, w: usize, dy: &[f64], grad: &mut Conv2d) -> Vec<f64> {
        let (n_out, n_in, k) = self.dims();
        let (oh, ow) = self.output_hw(h, w).expect("input smaller than kernel");
        let (s, p) = (self.stride, self.padding);
        let mut dx = vec![0.0; n_in * h * w];
        for oc in 0..n_out {
            let g = &dy[oc * oh * ow..(oc + 1) * oh * ow];
            grad.bias.value[oc] += g.iter().sum::<f64>();
            for ic in 0..n_in {
                let xin = &x[ic * h * w..(ic + 1) * h * w];
                let dxin = &mut dx[ic * h * w..(ic + 1) * h * w];
                for ky in 0..k {
                    let rows = valid_range(oh, h, s, ky, p);
                    for kx in 0..k {
                        let idx = ((oc * n_in + ic) * k + ky) * k + kx;
                        let wv = self.weight.value[idx];
                        let cols = valid_range(ow, w, s, kx, p);
                        let mut gw = 0.0;
                        for oy in rows.clone() {
                            let iy = oy * s + ky - p;
                            let grow = &g[oy * ow..(oy + 1) * ow];
                            let xrow = &xin[iy * w..(iy + 1) * w];
                            let dxrow = &mut dxin[iy * w..(iy + 1) * w];
                            for ox in cols.clone() {
                                let ix = ox * s + kx - p;
                                gw += grow[ox] * xrow[ix];
                                dxrow[ix] += grow[ox] * wv;
                            }
                        }
                        grad.weight.value[idx] += gw;
                    }
                }
            }
        }
        dx
    }
}

impl Parameters for Conv2d {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Param)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

pub fn relu_in_place(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Masks `grad` where the (post-activation) output was not positive.
pub fn relu_backward_in_place(activated: &[f64], grad: &mut [f64]) {
    for (g, &a) in grad.iter_mut().zip(activated) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Mean over the trailing `spatial` positions of each of `channels` rows.
pub fn global_average_pool(x: &[f64], channels: usize, spatial: usize) -> Vec<f64> {
    (0..channels)
        .map(|c| x[c * spatial..(c + 1) * spatial].iter().sum::<f64>() / spatial as f64)
        .collect()
}

pub fn global_average_pool_backward(dy: &[f64], spatial: usize) -> Vec<f64> {
    dy.iter()
        .flat_map(|&g| std::iter::repeat_n(g / spatial as f64, spatial))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct convolution by definition, for comparison.
    fn conv2d_naive(c: &Conv2d, x: &[f64], h: usize, w: usize) -> Vec<f64> {
        let (n_out, n_in, k) = (c.weight.shape[0], c.weight.shape[1], c.weight.shape[2]);
        let (oh, ow) = c.output_hw(h, w).unwrap();
        let mut out = vec![0.0; n_out * oh * ow];
        for oc in 0..n_out {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = c.bias.value[oc];
                    for ic in 0..n_in {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * c.stride + ky) as isize - c.padding as isize;
                                let ix = (ox * c.stride + kx) as isize - c.padding as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += c.weight.value[((oc * n_in + ic) * k + ky) * k + kx]
                                    * x[(ic * h + iy as usize) * w + ix as usize];
                            }
                        }
                    }
                    out[(oc * oh + oy) * ow + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv2d_matches_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &(h, w, s, p) in &[(7, 5, 2, 1), (8, 8, 1, 0), (4, 9, 3, 2)] {
            let mut c = Conv2d::new(2, 3, 3, s, p, &mut rng);
            c.bias.value = vec![0.1, -0.2, 0.3];
            let x: Vec<f64> = (0..2 * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (fast, _, _) = c.forward(&x, h, w);
            let slow = conv2d_naive(&c, &x, h, w);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv1d_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = Conv1d::new(1, 4, 8, 4, &mut rng);
        assert_eq!(c.output_len(4096), Some(1023));
        assert_eq!(c.output_len(7), None);
        let (y, n) = c.forward(&vec![0.0; 64], 64);
        assert_eq!(n, 15);
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_backward_matches_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let l = Linear::new(3, 2, 1.0, &mut rng);
        let mut g = l.zeros_like();
        let dx = l.backward(&[1.0, 2.0, 3.0], &[1.0, -1.0], &mut g);
        for i in 0..3 {
            let expect = l.weight.value[i] - l.weight.value[3 + i];
            assert!((dx[i] - expect).abs() < 1e-15);
        }
        assert_eq!(g.bias.value, vec![1.0, -1.0]);
        assert_eq!(g.weight.value, vec![1.0, 2.0, 3.0, -1.0, -2.0, -3.0]);
    }

    #[test]
    fn param_bookkeeping() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let layers = vec![Linear::new(2, 2, 1.0, &mut rng), Linear::new(2, 1, 1.0, &mut rng)];
        let names: Vec<String> = layers.named_params().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["0.weight", "0.bias", "1.weight", "1.bias"]);
        assert_eq!(layers.num_params(), 4 + 2 + 2 + 1);
        let mut acc = layers.zeros_like();
        acc.accumulate(&layers);
        acc.accumulate(&layers);
        acc.scale(0.5);
        assert_eq!(acc, layers);
        let mut bad = layers.clone();
        bad[1].bias.value[0] = f64::NAN;
        assert_eq!(bad.first_non_finite().as_deref(), Some("1.bias"));
    }
}
