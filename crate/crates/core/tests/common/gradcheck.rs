//! Finite-difference gradient checks at toy sizes (d = 8, T = 2, h = 2).
//! Each check returns the worst relative error and where it occurred.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vatcmr::encoders::{AudioEncoder, AudioEncoderConfig, Encoder, ImageEncoder, ImageEncoderConfig, Modality};
use vatcmr::fusion::{
    fuse_backward, fuse_forward, multi_head_backward, multi_head_forward, AttentionParams, Fusion, FusionConfig,
};
use vatcmr::nn::{Linear, Parameters};
use vatcmr::training::{cross_entropy_with_grad, triplet_loss, triplet_loss_with_grad};

use super::{check_input, check_params, dot};

pub type Worst = (f64, String);

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_vec(n: usize, r: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
}

fn toy_fusion() -> FusionConfig {
    FusionConfig {
        tokens: 2,
        heads: 2,
        head_dim: None,
    }
}

fn max(a: Worst, b: Worst) -> Worst {
    if b.0 > a.0 {
        b
    } else {
        a
    }
}

fn randomize_biases<P: Parameters>(p: &mut P, r: &mut impl Rng) {
    p.visit_mut("", &mut |_, q| {
        if q.shape.len() == 1 {
            q.value.iter_mut().for_each(|b| *b = r.gen_range(-0.1..0.1));
        }
    });
}

pub fn image_encoder(output_norm: bool) -> Worst {
    let mut r = rng(1);
    let cfg = ImageEncoderConfig {
        channels: vec![3, 4, 4, 5],
        output_norm,
        ..Default::default()
    };
    let mut enc = ImageEncoder::new(Modality::Vision, 8, 8, 8, &cfg, &mut r).unwrap();
    randomize_biases(&mut enc, &mut r);
    let image: Vec<f32> = (0..8 * 8 * 3).map(|_| r.gen()).collect();
    let proj = random_vec(8, &mut r);
    let (_, cache) = enc.forward_cached(&image).unwrap();
    let mut grad = enc.zeros_like();
    enc.backward(&cache, &proj, &mut grad);
    check_params(&enc, &grad, |e| dot(&e.forward_cached(&image).unwrap().0, &proj))
}

pub fn audio_encoder(output_norm: bool) -> Worst {
    let mut r = rng(2);
    let cfg = AudioEncoderConfig {
        channels: [3, 4, 5],
        kernels: [4, 4, 2],
        strides: [2, 2, 2],
        input_norm: true,
        output_norm,
    };
    let mut enc = AudioEncoder::new(64, 8, &cfg, &mut r).unwrap();
    randomize_biases(&mut enc, &mut r);
    let signal: Vec<f32> = (0..64)
        .map(|i| (i as f32 * 0.37).sin() + r.gen_range(-0.3..0.3))
        .collect();
    let proj = random_vec(8, &mut r);
    let (_, cache) = enc.forward_cached(&signal).unwrap();
    let mut grad = enc.zeros_like();
    enc.backward(&cache, &proj, &mut grad);
    check_params(&enc, &grad, |e| dot(&e.forward_cached(&signal).unwrap().0, &proj))
}

pub fn multi_head_attention() -> Worst {
    let mut r = rng(3);
    let params = AttentionParams::new(8, &toy_fusion(), &mut r).unwrap();
    let q = random_vec(8, &mut r);
    let kv = random_vec(8, &mut r);
    let proj = random_vec(8, &mut r);
    let (_, cache) = multi_head_forward(&q, &kv, &params);
    let mut grad = params.zeros_like();
    let (dq, dkv) = multi_head_backward(&params, &cache, &proj, &mut grad);
    let worst = check_params(&params, &grad, |p| dot(&multi_head_forward(&q, &kv, p).0, &proj));
    let eq = check_input(&q, &dq, |x| dot(&multi_head_forward(x, &kv, &params).0, &proj));
    let ekv = check_input(&kv, &dkv, |x| dot(&multi_head_forward(&q, x, &params).0, &proj));
    max(max(worst, (eq, "query input".into())), (ekv, "key/value input".into()))
}

pub fn fuse() -> Worst {
    let mut r = rng(4);
    let fusion = Fusion::attention(8, &toy_fusion(), &mut r).unwrap();
    let Fusion::Attention { p12, p21 } = &fusion else {
        unreachable!()
    };
    let e1 = random_vec(8, &mut r);
    let e2 = random_vec(8, &mut r);
    let proj = random_vec(8, &mut r);
    let (_, cache) = fuse_forward(&e1, &e2, p12, p21);
    let mut g12 = p12.zeros_like();
    let mut g21 = p21.zeros_like();
    let (d1, d2) = fuse_backward(p12, p21, &cache, &proj, &mut g12, &mut g21);
    let grads = Fusion::Attention { p12: g12, p21: g21 };
    let worst = check_params(&fusion, &grads, |f| dot(&f.forward(&e1, &e2).0, &proj));
    let a = check_input(&e1, &d1, |x| dot(&fusion.forward(x, &e2).0, &proj));
    let b = check_input(&e2, &d2, |x| dot(&fusion.forward(&e1, x).0, &proj));
    max(max(worst, (a, "e1".into())), (b, "e2".into()))
}

pub fn concat_fusion() -> Worst {
    let mut r = rng(5);
    let fusion = Fusion::Concat(Linear::new(16, 8, 1.0, &mut r));
    let e1 = random_vec(8, &mut r);
    let e2 = random_vec(8, &mut r);
    let proj = random_vec(8, &mut r);
    let (_, cache) = fusion.forward(&e1, &e2);
    let mut grad = fusion.zeros_like();
    let (d1, d2) = fusion.backward(&cache, &proj, &mut grad);
    let worst = check_params(&fusion, &grad, |f| dot(&f.forward(&e1, &e2).0, &proj));
    let a = check_input(&e1, &d1, |x| dot(&fusion.forward(x, &e2).0, &proj));
    let b = check_input(&e2, &d2, |x| dot(&fusion.forward(&e1, x).0, &proj));
    max(max(worst, (a, "e1".into())), (b, "e2".into()))
}

pub fn cross_entropy() -> Worst {
    let mut r = rng(6);
    let mut worst: Worst = (0.0, String::new());
    for trial in 0..50 {
        let logits: Vec<f64> = random_vec(5, &mut r).iter().map(|x| 4.0 * x).collect();
        let class = r.gen_range(0..5);
        let (_, grad) = cross_entropy_with_grad(&logits, class);
        let e = check_input(&logits, &grad, |z| cross_entropy_with_grad(z, class).0);
        worst = max(worst, (e, format!("draw {trial}")));
    }
    worst
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Worst error over draws on the active and inactive sides of the hinge,
/// with the number of draws checked on each side.
pub fn triplet() -> (Worst, usize, usize) {
    let mut r = rng(7);
    let (mut active, mut inactive) = (0, 0);
    let mut worst: Worst = (0.0, String::new());
    for trial in 0..200 {
        let f = random_vec(6, &mut r);
        let p = random_vec(6, &mut r);
        let n = random_vec(6, &mut r);
        let alpha = r.gen_range(0.1..2.0);
        let g = triplet_loss_with_grad(&f, &p, &n, alpha).unwrap();
        // Central differences straddling the hinge are meaningless.
        let inner = alpha + dist2(&f, &p) - dist2(&f, &n);
        if inner.abs() < 1e-3 {
            continue;
        }
        if inner > 0.0 {
            active += 1;
        } else {
            inactive += 1;
        }
        let ea = check_input(&f, &g.d_anchor, |x| triplet_loss(x, &p, &n, alpha).unwrap());
        let ep = check_input(&p, &g.d_positive, |x| triplet_loss(&f, x, &n, alpha).unwrap());
        let en = check_input(&n, &g.d_negative, |x| triplet_loss(&f, &p, x, alpha).unwrap());
        worst = max(worst, (ea.max(ep).max(en), format!("draw {trial}")));
    }
    (worst, active, inactive)
}
