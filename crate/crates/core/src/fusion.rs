//! Multi-head cross-attention fusion of two embeddings.
//!
//! A `d`-vector is viewed as `T` tokens of width `d / T`. Queries come from
//! one embedding, keys and values from the other; per-head outputs are
//! concatenated and projected back to token width by a shared output
//! matrix. Two such directional calls are averaged into the fused vector.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::nn::{join, Linear, Param, Parameters};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub tokens: usize,
    pub heads: usize,
    /// Per-head width; defaults to the token width.
    pub head_dim: Option<usize>,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            tokens: 8,
            heads: 4,
            head_dim: None,
        }
    }
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid(format!("{rows}x{cols} matrix given {} values", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// `x · wᵀ` where `w` is `[out, in]` row-major and `x` is `[rows, in]`.
fn project(x: &Matrix, w: &Param) -> Matrix {
    let (out, inp) = (w.shape[0], w.shape[1]);
    let mut y = Matrix::zeros(x.rows, out);
    for r in 0..x.rows {
        let xr = x.row(r);
        for (o, wr) in w.value.chunks_exact(inp).enumerate() {
            y.data[r * out + o] = xr.iter().zip(wr).map(|(a, b)| a * b).sum();
        }
    }
    y
}

/// Gradients of `y = x · wᵀ`: accumulates `dW` and returns `dX`.
fn project_backward(x: &Matrix, w: &Param, dy: &Matrix, dw: &mut Param) -> Matrix {
    let (out, inp) = (w.shape[0], w.shape[1]);
    let mut dx = Matrix::zeros(x.rows, inp);
    for r in 0..x.rows {
        for o in 0..out {
            let g = dy.data[r * out + o];
            let wr = &w.value[o * inp..(o + 1) * inp];
            let dwr = &mut dw.value[o * inp..(o + 1) * inp];
            for i in 0..inp {
                dwr[i] += g * x.data[r * inp + i];
                dx.data[r * inp + i] += g * wr[i];
            }
        }
    }
    dx
}

pub struct AttentionOutput {
    pub output: Matrix,
    /// Row-stochastic `[queries, keys]` attention weights.
    pub weights: Matrix,
}

/// `softmax(Q Kᵀ / sqrt(d_h)) V`.
pub fn scaled_dot_attention(q: &Matrix, k: &Matrix, v: &Matrix) -> Result<AttentionOutput> {
    if q.cols != k.cols || k.rows != v.rows || k.rows == 0 {
        return Err(invalid(format!(
            "attention shapes disagree: Q {}x{}, K {}x{}, V {}x{}",
            q.rows, q.cols, k.rows, k.cols, v.rows, v.cols
        )));
    }
    if [q, k, v].iter().any(|m| m.data.iter().any(|x| !x.is_finite())) {
        return Err(invalid("attention inputs must be finite"));
    }
    Ok(attend(q, k, v))
}

fn attend(q: &Matrix, k: &Matrix, v: &Matrix) -> AttentionOutput {
    let scale = 1.0 / (q.cols as f64).sqrt();
    let mut weights = Matrix::zeros(q.rows, k.rows);
    for t in 0..q.rows {
        let row = weights.row_mut(t);
        for (u, s) in row.iter_mut().enumerate() {
            *s = q.row(t).iter().zip(k.row(u)).map(|(a, b)| a * b).sum::<f64>() * scale;
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.iter_mut().for_each(|s| *s = (*s - max).exp());
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|s| *s /= total);
    }
    let mut output = Matrix::zeros(q.rows, v.cols);
    for t in 0..q.rows {
        for u in 0..k.rows {
            let a = weights.data[t * k.rows + u];
            let vr = v.row(u);
            for (o, x) in output.row_mut(t).iter_mut().zip(vr) {
                *o += a * x;
            }
        }
    }
    AttentionOutput { output, weights }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionHead {
    /// `[d_h, d_tok]` each.
    pub w_q: Param,
    pub w_k: Param,
    pub w_v: Param,
}

/// Parameters of one directional multi-head attention call.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    pub tokens: usize,
    pub heads: Vec<AttentionHead>,
    /// `[d_tok, h·d_h]`, shared by all tokens.
    pub w_o: Param,
}

impl AttentionParams {
    pub fn new(embed_dim: usize, config: &FusionConfig, rng: &mut impl Rng) -> Result<Self> {
        let (d_tok, d_h) = Self::check_config(embed_dim, config)?;
        let heads = (0..config.heads)
            .map(|_| AttentionHead {
                w_q: Param::uniform(vec![d_h, d_tok], d_tok, 1.0, rng),
                w_k: Param::uniform(vec![d_h, d_tok], d_tok, 1.0, rng),
                w_v: Param::uniform(vec![d_h, d_tok], d_tok, 1.0, rng),
            })
            .collect();
        Ok(Self {
            tokens: config.tokens,
            heads,
            w_o: Param::uniform(vec![d_tok, config.heads * d_h], config.heads * d_h, 1.0, rng),
        })
    }

    /// All projections set to the identity; requires `h = 1` and `d_h = d_tok`.
    pub fn identity(embed_dim: usize, tokens: usize) -> Result<Self> {
        let (d_tok, _) = Self::check_config(
            embed_dim,
            &FusionConfig {
                tokens,
                heads: 1,
                head_dim: None,
            },
        )?;
        let eye = || {
            let mut p = Param::zeros(vec![d_tok, d_tok]);
            (0..d_tok).for_each(|i| p.value[i * d_tok + i] = 1.0);
            p
        };
        Ok(Self {
            tokens,
            heads: vec![AttentionHead {
                w_q: eye(),
                w_k: eye(),
                w_v: eye(),
            }],
            w_o: eye(),
        })
    }

    fn check_config(embed_dim: usize, config: &FusionConfig) -> Result<(usize, usize)> {
        if config.tokens == 0 || config.heads == 0 {
            return Err(Error::Config("fusion needs >= 1 token and >= 1 head".into()));
        }
        if !embed_dim.is_multiple_of(config.tokens) {
            return Err(Error::Config(format!(
                "embedding dimension {embed_dim} is not divisible by {} tokens",
                config.tokens
            )));
        }
        let d_tok = embed_dim / config.tokens;
        Ok((d_tok, config.head_dim.unwrap_or(d_tok)))
    }

    pub fn token_dim(&self) -> usize {
        self.w_o.shape[0]
    }

    pub fn head_dim(&self) -> usize {
        self.heads[0].w_q.shape[0]
    }

    pub fn embed_dim(&self) -> usize {
        self.tokens * self.token_dim()
    }
}

impl Parameters for AttentionParams {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        for (i, h) in self.heads.iter().enumerate() {
            let p = join(prefix, &format!("head{i}"));
            f(join(&p, "w_q"), &h.w_q);
            f(join(&p, "w_k"), &h.w_k);
            f(join(&p, "w_v"), &h.w_v);
        }
        f(join(prefix, "w_o"), &self.w_o);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Param)) {
        for (i, h) in self.heads.iter_mut().enumerate() {
            let p = join(prefix, &format!("head{i}"));
            f(join(&p, "w_q"), &mut h.w_q);
            f(join(&p, "w_k"), &mut h.w_k);
            f(join(&p, "w_v"), &mut h.w_v);
        }
        f(join(prefix, "w_o"), &mut self.w_o);
    }
}

struct HeadCache {
    q: Matrix,
    k: Matrix,
    v: Matrix,
    weights: Matrix,
}

/// Intermediate values of one directional call, kept for the backward pass.
pub struct MultiHeadCache {
    query_tokens: Matrix,
    kv_tokens: Matrix,
    heads: Vec<HeadCache>,
    concat: Matrix,
}

fn check_embeddings(a: &[f64], b: &[f64], d: usize) -> Result<()> {
    if a.len() != d || b.len() != d {
        return Err(invalid(format!(
            "attention expects two embeddings of length {d}, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

pub fn multi_head_attention(query_emb: &[f64], kv_emb: &[f64], params: &AttentionParams) -> Result<Vec<f64>> {
    check_embeddings(query_emb, kv_emb, params.embed_dim())?;
    Ok(multi_head_forward(query_emb, kv_emb, params).0)
}

pub fn multi_head_forward(query_emb: &[f64], kv_emb: &[f64], params: &AttentionParams) -> (Vec<f64>, MultiHeadCache) {
    let (t, d_tok, d_h) = (params.tokens, params.token_dim(), params.head_dim());
    let query_tokens = Matrix::new(t, d_tok, query_emb.to_vec()).expect("checked length");
    let kv_tokens = Matrix::new(t, d_tok, kv_emb.to_vec()).expect("checked length");
    let n_heads = params.heads.len();
    let mut concat = Matrix::zeros(t, n_heads * d_h);
    let mut heads = Vec::with_capacity(n_heads);
    for (h, head) in params.heads.iter().enumerate() {
        let q = project(&query_tokens, &head.w_q);
        let k = project(&kv_tokens, &head.w_k);
        let v = project(&kv_tokens, &head.w_v);
        let AttentionOutput { output, weights } = attend(&q, &k, &v);
        for r in 0..t {
            concat.row_mut(r)[h * d_h..(h + 1) * d_h].copy_from_slice(output.row(r));
        }
        heads.push(HeadCache { q, k, v, weights });
    }
    let out = project(&concat, &params.w_o);
    (
        out.data,
        MultiHeadCache {
            query_tokens,
            kv_tokens,
            heads,
            concat,
        },
    )
}

/// Returns `(dL/d query_emb, dL/d kv_emb)` and accumulates parameter gradients.
pub fn multi_head_backward(
    params: &AttentionParams,
    cache: &MultiHeadCache,
    d_out: &[f64],
    grad: &mut AttentionParams,
) -> (Vec<f64>, Vec<f64>) {
    let (t, d_tok, d_h) = (params.tokens, params.token_dim(), params.head_dim());
    let scale = 1.0 / (d_h as f64).sqrt();
    let d_y = Matrix::new(t, d_tok, d_out.to_vec()).expect("output length");
    let d_concat = project_backward(&cache.concat, &params.w_o, &d_y, &mut grad.w_o);
    let mut d_query = Matrix::zeros(t, d_tok);
    let mut d_kv = Matrix::zeros(t, d_tok);
    for (h, (head, hc)) in params.heads.iter().zip(&cache.heads).enumerate() {
        let mut d_o = Matrix::zeros(t, d_h);
        for r in 0..t {
            d_o.row_mut(r).copy_from_slice(&d_concat.row(r)[h * d_h..(h + 1) * d_h]);
        }
        let n_keys = hc.k.rows;
        let mut d_v = Matrix::zeros(n_keys, d_h);
        let mut d_scores = Matrix::zeros(t, n_keys);
        for r in 0..t {
            let a = hc.weights.row(r);
            let d_a: Vec<f64> = (0..n_keys)
                .map(|u| d_o.row(r).iter().zip(hc.v.row(u)).map(|(x, y)| x * y).sum())
                .collect();
            let dot: f64 = a.iter().zip(&d_a).map(|(x, y)| x * y).sum();
            for u in 0..n_keys {
                d_scores.data[r * n_keys + u] = a[u] * (d_a[u] - dot) * scale;
                for (dv, g) in d_v.row_mut(u).iter_mut().zip(d_o.row(r)) {
                    *dv += a[u] * g;
                }
            }
        }
        let mut d_q = Matrix::zeros(t, d_h);
        let mut d_k = Matrix::zeros(n_keys, d_h);
        for r in 0..t {
            for u in 0..n_keys {
                let s = d_scores.data[r * n_keys + u];
                for j in 0..d_h {
                    d_q.data[r * d_h + j] += s * hc.k.data[u * d_h + j];
                    d_k.data[u * d_h + j] += s * hc.q.data[r * d_h + j];
                }
            }
        }
        let gh = &mut grad.heads[h];
        let dxq = project_backward(&cache.query_tokens, &head.w_q, &d_q, &mut gh.w_q);
        let dxk = project_backward(&cache.kv_tokens, &head.w_k, &d_k, &mut gh.w_k);
        let dxv = project_backward(&cache.kv_tokens, &head.w_v, &d_v, &mut gh.w_v);
        d_query.data.iter_mut().zip(&dxq.data).for_each(|(a, b)| *a += b);
        for (a, (b, c)) in d_kv.data.iter_mut().zip(dxk.data.iter().zip(&dxv.data)) {
            *a += b + c;
        }
    }
    (d_query.data, d_kv.data)
}

/// Fused representation of a retrieval-modality pair.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedRepresentation {
    pub values: Vec<f64>,
}

pub struct FuseCache {
    forward: MultiHeadCache,
    backward: MultiHeadCache,
}

/// `½ (MultiHead(Q=e2, K=V=e1; p12) + MultiHead(Q=e1, K=V=e2; p21))`.
pub fn fuse(e1: &[f64], e2: &[f64], p12: &AttentionParams, p21: &AttentionParams) -> Result<FusedRepresentation> {
    let d = p12.embed_dim();
    if p21.embed_dim() != d {
        return Err(invalid("attention parameter sets disagree on dimension"));
    }
    check_embeddings(e1, e2, d)?;
    Ok(FusedRepresentation {
        values: fuse_forward(e1, e2, p12, p21).0,
    })
}

pub fn fuse_forward(e1: &[f64], e2: &[f64], p12: &AttentionParams, p21: &AttentionParams) -> (Vec<f64>, FuseCache) {
    let (a, forward) = multi_head_forward(e2, e1, p12);
    let (b, backward) = multi_head_forward(e1, e2, p21);
    let f = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
    (f, FuseCache { forward, backward })
}

/// Returns `(dL/de1, dL/de2)`.
pub fn fuse_backward(
    p12: &AttentionParams,
    p21: &AttentionParams,
    cache: &FuseCache,
    d_fused: &[f64],
    g12: &mut AttentionParams,
    g21: &mut AttentionParams,
) -> (Vec<f64>, Vec<f64>) {
    let half: Vec<f64> = d_fused.iter().map(|g| 0.5 * g).collect();
    let (dq2, dkv1) = multi_head_backward(p12, &cache.forward, &half, g12);
    let (dq1, dkv2) = multi_head_backward(p21, &cache.backward, &half, g21);
    let d1 = dkv1.iter().zip(&dq1).map(|(a, b)| a + b).collect();
    let d2 = dq2.iter().zip(&dkv2).map(|(a, b)| a + b).collect();
    (d1, d2)
}

/// No-attention fusion: an affine map of the concatenation `e1 ‖ e2`.
pub fn concat_fuse(e1: &[f64], e2: &[f64], proj: &Linear) -> Result<FusedRepresentation> {
    if e1.len() + e2.len() != proj.input_dim() || e1.len() != e2.len() {
        return Err(invalid(format!(
            "concat projection expects 2x{} inputs, got {} and {}",
            proj.input_dim() / 2,
            e1.len(),
            e2.len()
        )));
    }
    Ok(FusedRepresentation {
        values: proj.forward(&[e1, e2].concat()),
    })
}

/// The fusion block of a model: attention or the concatenation ablation.
#[derive(Clone, Debug, PartialEq)]
pub enum Fusion {
    Attention { p12: AttentionParams, p21: AttentionParams },
    Concat(Linear),
}

pub enum FusionCache {
    Attention(FuseCache),
    Concat(Vec<f64>),
}

impl Fusion {
    pub fn attention(embed_dim: usize, config: &FusionConfig, rng: &mut impl Rng) -> Result<Self> {
        Ok(Fusion::Attention {
            p12: AttentionParams::new(embed_dim, config, rng)?,
            p21: AttentionParams::new(embed_dim, config, rng)?,
        })
    }

    pub fn concat(embed_dim: usize, rng: &mut impl Rng) -> Self {
        Fusion::Concat(Linear::new(2 * embed_dim, embed_dim, 1.0, rng))
    }

    pub fn is_attention(&self) -> bool {
        matches!(self, Fusion::Attention { .. })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Fusion::Attention { .. } => "attention",
            Fusion::Concat(_) => "concat",
        }
    }

    pub fn fuse(&self, e1: &[f64], e2: &[f64]) -> Result<FusedRepresentation> {
        match self {
            Fusion::Attention { p12, p21 } => fuse(e1, e2, p12, p21),
            Fusion::Concat(proj) => concat_fuse(e1, e2, proj),
        }
    }

    pub fn forward(&self, e1: &[f64], e2: &[f64]) -> (Vec<f64>, FusionCache) {
        match self {
            Fusion::Attention { p12, p21 } => {
                let (f, c) = fuse_forward(e1, e2, p12, p21);
                (f, FusionCache::Attention(c))
            }
            Fusion::Concat(proj) => {
                let x = [e1, e2].concat();
                (proj.forward(&x), FusionCache::Concat(x))
            }
        }
    }

    pub fn backward(&self, cache: &FusionCache, d_fused: &[f64], grad: &mut Fusion) -> (Vec<f64>, Vec<f64>) {
        match (self, cache, grad) {
            (Fusion::Attention { p12, p21 }, FusionCache::Attention(c), Fusion::Attention { p12: g12, p21: g21 }) => {
                fuse_backward(p12, p21, c, d_fused, g12, g21)
            }
            (Fusion::Concat(proj), FusionCache::Concat(x), Fusion::Concat(g)) => {
                let dx = proj.backward(x, d_fused, g);
                let d = dx.len() / 2;
                (dx[..d].to_vec(), dx[d..].to_vec())
            }
            _ => panic!("fusion cache or gradient does not match fusion kind"),
        }
    }
}

impl Parameters for Fusion {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Param)) {
        match self {
            Fusion::Attention { p12, p21 } => {
                p12.visit(&join(prefix, "p12"), f);
                p21.visit(&join(prefix, "p21"), f);
            }
            Fusion::Concat(proj) => proj.visit(&join(prefix, "concat"), f),
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Param)) {
        match self {
            Fusion::Attention { p12, p21 } => {
                p12.visit_mut(&join(prefix, "p12"), f);
                p21.visit_mut(&join(prefix, "p21"), f);
            }
            Fusion::Concat(proj) => proj.visit_mut(&join(prefix, "concat"), f),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
        Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Softmax-matmul by explicit double loops.
    fn naive_attention(q: &Matrix, k: &Matrix, v: &Matrix) -> Vec<f64> {
        let mut out = vec![0.0; q.rows * v.cols];
        for t in 0..q.rows {
            let mut e = Vec::new();
            for u in 0..k.rows {
                let mut s = 0.0;
                for j in 0..q.cols {
                    s += q.data[t * q.cols + j] * k.data[u * k.cols + j];
                }
                e.push((s / (q.cols as f64).sqrt()).exp());
            }
            let z: f64 = e.iter().sum();
            for u in 0..k.rows {
                for j in 0..v.cols {
                    out[t * v.cols + j] += e[u] / z * v.data[u * v.cols + j];
                }
            }
        }
        out
    }

    #[test]
    fn single_token_returns_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (q, k, v) = (
            random_matrix(1, 4, &mut rng),
            random_matrix(1, 4, &mut rng),
            random_matrix(1, 4, &mut rng),
        );
        assert_eq!(scaled_dot_attention(&q, &k, &v).unwrap().output, v);
    }

    #[test]
    fn zero_query_averages_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = random_matrix(3, 4, &mut rng);
        let k = random_matrix(3, 4, &mut rng);
        let out = scaled_dot_attention(&Matrix::zeros(3, 4), &k, &v).unwrap().output;
        for t in 0..3 {
            for j in 0..4 {
                let mean = (0..3).map(|u| v.data[u * 4 + j]).sum::<f64>() / 3.0;
                assert!((out.data[t * 4 + j] - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matches_naive_attention() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (q, k, v) = (
            random_matrix(3, 4, &mut rng),
            random_matrix(3, 4, &mut rng),
            random_matrix(3, 4, &mut rng),
        );
        let got = scaled_dot_attention(&q, &k, &v).unwrap();
        for (a, b) in got.output.data.iter().zip(naive_attention(&q, &k, &v)) {
            assert!((a - b).abs() < 1e-6);
        }
        for t in 0..3 {
            assert!((got.weights.row(t).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_matrix(2, 3, &mut rng);
        let k = random_matrix(2, 4, &mut rng);
        assert!(scaled_dot_attention(&q, &k, &k).is_err());
        let mut nan = q.clone();
        nan.data[0] = f64::NAN;
        assert!(scaled_dot_attention(&nan, &q, &q).is_err());
        assert!(matches!(
            AttentionParams::new(
                10,
                &FusionConfig {
                    tokens: 3,
                    heads: 1,
                    head_dim: None
                },
                &mut rng
            ),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn identity_projections_return_kv() {
        let p = AttentionParams::identity(6, 1).unwrap();
        let q = [0.3, -1.0, 2.0, 0.0, 5.0, 1.0];
        let kv = [1.0, 2.0, 3.0, -4.0, 0.5, 0.25];
        assert_eq!(multi_head_attention(&q, &kv, &p).unwrap(), kv.to_vec());
        let f = fuse(&q, &kv, &p, &p).unwrap();
        for i in 0..6 {
            assert!((f.values[i] - 0.5 * (q[i] + kv[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_projections_give_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = AttentionParams::new(
            8,
            &FusionConfig {
                tokens: 2,
                heads: 2,
                head_dim: None,
            },
            &mut rng,
        )
        .unwrap()
        .zeros_like();
        let out = multi_head_attention(&[1.0; 8], &[2.0; 8], &p).unwrap();
        assert_eq!(out, vec![0.0; 8]);
        assert_eq!(fuse(&[0.0; 8], &[0.0; 8], &p, &p).unwrap().values, vec![0.0; 8]);
    }

    #[test]
    fn fuse_is_swap_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = FusionConfig {
            tokens: 2,
            heads: 2,
            head_dim: None,
        };
        let p12 = AttentionParams::new(8, &cfg, &mut rng).unwrap();
        let p21 = AttentionParams::new(8, &cfg, &mut rng).unwrap();
        let e1: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let e2: Vec<f64> = (0..8).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let a = fuse(&e1, &e2, &p12, &p21).unwrap();
        let b = fuse(&e2, &e1, &p21, &p12).unwrap();
        assert_eq!(a, b);
        assert!(fuse(&e1[..4], &e2, &p12, &p21).is_err());
    }

    #[test]
    fn concat_selectors() {
        let d = 3;
        let mut proj = Linear {
            weight: Param::zeros(vec![d, 2 * d]),
            bias: Param::zeros(vec![d]),
        };
        for i in 0..d {
            proj.weight.value[i * 2 * d + i] = 1.0;
        }
        let (e1, e2) = ([1.0, 2.0, 3.0], [-1.0, 0.5, 4.0]);
        assert_eq!(concat_fuse(&e1, &e2, &proj).unwrap().values, e1.to_vec());
        for i in 0..d {
            proj.weight.value[i * 2 * d + i] = 0.5;
            proj.weight.value[i * 2 * d + d + i] = 0.5;
        }
        let avg = concat_fuse(&e1, &e2, &proj).unwrap().values;
        for i in 0..d {
            assert!((avg[i] - 0.5 * (e1[i] + e2[i])).abs() < 1e-15);
        }
        assert!(concat_fuse(&e1[..2], &e2, &proj).is_err());
    }
}
