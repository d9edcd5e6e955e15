//! 2D projections of embedding sets for visual inspection.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{invalid, Result};

/// A fitted 2D projection.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    pub points: Vec<[f64; 2]>,
    /// Variance captured by the two output axes.
    pub retained_variance: f64,
    /// Total variance of the input.
    pub total_variance: f64,
}

impl Projection {
    pub fn retained_fraction(&self) -> f64 {
        if self.total_variance == 0.0 {
            1.0
        } else {
            self.retained_variance / self.total_variance
        }
    }
}

pub trait Projector {
    fn project(&self, points: &[Vec<f64>]) -> Result<Projection>;
}

/// Principal-component projection onto the top two covariance eigenvectors.
/// Each axis is signed so that its largest-magnitude loading is positive.
#[derive(Clone, Copy, Debug, Default)]
pub struct Pca;

impl Projector for Pca {
    fn project(&self, points: &[Vec<f64>]) -> Result<Projection> {
        let n = points.len();
        if n < 3 {
            return Err(invalid(format!("projection needs at least 3 points, got {n}")));
        }
        let d = points[0].len();
        if d < 2 {
            return Err(invalid("projection needs at least 2 input dimensions"));
        }
        if points.iter().any(|p| p.len() != d) {
            return Err(invalid("points must share one dimension"));
        }
        let mean: Vec<f64> = (0..d)
            .map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n as f64)
            .collect();
        let x = DMatrix::from_fn(n, d, |i, j| points[i][j] - mean[j]);
        let cov = (x.transpose() * &x) / (n - 1) as f64;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

        let axes: Vec<Vec<f64>> = order[..2]
            .iter()
            .map(|&k| {
                let v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
                let pivot = v
                    .iter()
                    .copied()
                    .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
                let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
                v.into_iter().map(|x| sign * x).collect()
            })
            .collect();
        let points = (0..n)
            .map(|i| {
                let row = x.row(i);
                let dot = |a: &[f64]| row.iter().zip(a).map(|(r, w)| r * w).sum::<f64>();
                [dot(&axes[0]), dot(&axes[1])]
            })
            .collect();
        Ok(Projection {
            points,
            retained_variance: order[..2].iter().map(|&k| eig.eigenvalues[k].max(0.0)).sum(),
            total_variance: eig.eigenvalues.iter().map(|v| v.max(0.0)).sum(),
        })
    }
}

/// Projects labeled embeddings to 2D, keeping each label with its point.
pub fn project_embeddings(
    embeddings: &[(Vec<f64>, usize)],
    projector: &dyn Projector,
) -> Result<(Vec<([f64; 2], usize)>, Projection)> {
    let vectors: Vec<Vec<f64>> = embeddings.iter().map(|(v, _)| v.clone()).collect();
    let projection = projector.project(&vectors)?;
    let labeled = projection
        .points
        .iter()
        .zip(embeddings)
        .map(|(p, (_, l))| (*p, *l))
        .collect();
    Ok((labeled, projection))
}
