//! Attention fusion of two embeddings: the identity case, swap symmetry, and
//! the concatenation alternative.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vatcmr::fusion::{fuse, AttentionParams, Fusion, FusionConfig};

fn main() -> vatcmr::Result<()> {
    let e1 = vec![1.0, 0.0, -1.0, 0.5];
    let e2 = vec![0.0, 2.0, 1.0, -0.5];

    // One token, one head, identity projections: the fusion is the average.
    let id = AttentionParams::identity(4, 1)?;
    println!("identity fusion      {:?}", fuse(&e1, &e2, &id, &id)?.values);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = FusionConfig {
        tokens: 2,
        heads: 2,
        head_dim: None,
    };
    let p12 = AttentionParams::new(4, &cfg, &mut rng)?;
    let p21 = AttentionParams::new(4, &cfg, &mut rng)?;
    let f = fuse(&e1, &e2, &p12, &p21)?.values;
    let swapped = fuse(&e2, &e1, &p21, &p12)?.values;
    println!("learned fusion       {f:.4?}");
    println!("swapped inputs/params {swapped:.4?} (equal: {})", f == swapped);

    let concat = Fusion::concat(4, &mut rng);
    println!("concat fusion        {:.4?}", concat.fuse(&e1, &e2)?.values);
    Ok(())
}
