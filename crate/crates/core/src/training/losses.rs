use crate::error::{invalid, Result};

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `-Σ p_i log q_i` with `q = softmax(logits)` and one-hot `p`.
pub fn cross_entropy(logits: &[f64], target: &[f64]) -> Result<f64> {
    if logits.len() != target.len() || logits.len() < 2 {
        return Err(invalid(format!(
            "cross entropy needs matching lengths >= 2, got {} and {}",
            logits.len(),
            target.len()
        )));
    }
    let ones = target.iter().filter(|&&t| t == 1.0).count();
    let zeros = target.iter().filter(|&&t| t == 0.0).count();
    if ones != 1 || ones + zeros != target.len() {
        return Err(invalid("cross entropy target must be one-hot"));
    }
    let class = target.iter().position(|&t| t == 1.0).expect("one entry is 1");
    Ok(cross_entropy_with_grad(logits, class).0)
}

/// Loss and `dL/dlogits = softmax(logits) - onehot(class)`.
pub fn cross_entropy_with_grad(logits: &[f64], class: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    let loss = total.ln() + (max - logits[class]);
    let mut grad = softmax(logits);
    grad[class] -= 1.0;
    (loss, grad)
}

/// Value and subgradient of the triplet hinge. The subgradient at the hinge
/// point itself is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct TripletGrad {
    pub loss: f64,
    pub d_anchor: Vec<f64>,
    pub d_positive: Vec<f64>,
    pub d_negative: Vec<f64>,
}

/// `max(‖F−P‖² − ‖F−N‖² + α, 0)`.
pub fn triplet_loss(anchor: &[f64], positive: &[f64], negative: &[f64], alpha: f64) -> Result<f64> {
    Ok(triplet_loss_with_grad(anchor, positive, negative, alpha)?.loss)
}

pub fn triplet_loss_with_grad(anchor: &[f64], positive: &[f64], negative: &[f64], alpha: f64) -> Result<TripletGrad> {
    if anchor.len() != positive.len() || anchor.len() != negative.len() {
        return Err(invalid(format!(
            "triplet vectors have lengths {}, {}, {}",
            anchor.len(),
            positive.len(),
            negative.len()
        )));
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(invalid(format!("margin must be finite and >= 0, got {alpha}")));
    }
    let dp: f64 = anchor.iter().zip(positive).map(|(f, p)| (f - p) * (f - p)).sum();
    let dn: f64 = anchor.iter().zip(negative).map(|(f, n)| (f - n) * (f - n)).sum();
    let inner = dp - dn + alpha;
    let d = anchor.len();
    if inner <= 0.0 {
        return Ok(TripletGrad {
            loss: 0.0,
            d_anchor: vec![0.0; d],
            d_positive: vec![0.0; d],
            d_negative: vec![0.0; d],
        });
    }
    Ok(TripletGrad {
        loss: inner,
        d_anchor: positive.iter().zip(negative).map(|(p, n)| 2.0 * (n - p)).collect(),
        d_positive: anchor.iter().zip(positive).map(|(f, p)| -2.0 * (f - p)).collect(),
        d_negative: anchor.iter().zip(negative).map(|(f, n)| 2.0 * (f - n)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_c() {
        let l = cross_entropy(&[0.7; 4], &[0.0, 0.0, 1.0, 0.0]).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_logits_give_near_zero() {
        let l = cross_entropy(&[0.0, 30.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        assert!((0.0..1e-6).contains(&l));
        let l = cross_entropy(&[1.0, 21.0, -3.0], &[0.0, 1.0, 0.0]).unwrap();
        assert!(l < 1e-6);
    }

    #[test]
    fn target_must_be_one_hot() {
        assert!(cross_entropy(&[0.0; 3], &[0.5, 0.5, 0.0]).is_err());
        assert!(cross_entropy(&[0.0; 3], &[1.0, 1.0, 0.0]).is_err());
        assert!(cross_entropy(&[0.0; 3], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn triplet_cases() {
        let x = [0.3, -0.2];
        assert_eq!(triplet_loss(&x, &x, &x, 0.5).unwrap(), 0.5);
        // ‖F−N‖² = α exactly
        assert_eq!(triplet_loss(&[0.0, 0.0], &[0.0, 0.0], &[0.5, 0.5], 0.5).unwrap(), 0.0);
        assert_eq!(triplet_loss(&[0.0, 0.0], &[1.0, 0.0], &[0.0, 2.0], 0.5).unwrap(), 0.0);
        assert_eq!(triplet_loss(&[0.0, 0.0], &[1.0, 0.0], &[0.0, 2.0], 3.5).unwrap(), 0.5);
        assert!(triplet_loss(&[0.0], &[0.0, 1.0], &[0.0], 0.5).is_err());
        // zero margin with F = P: still nonnegative
        assert_eq!(triplet_loss(&x, &x, &[1.0, 1.0], 0.0).unwrap(), 0.0);
    }

    #[test]
    fn hinge_point_has_zero_subgradient() {
        let g = triplet_loss_with_grad(&[0.0, 0.0], &[0.0, 0.0], &[0.5, 0.5], 0.5).unwrap();
        assert!(g
            .d_anchor
            .iter()
            .chain(&g.d_positive)
            .chain(&g.d_negative)
            .all(|&v| v == 0.0));
    }
}
