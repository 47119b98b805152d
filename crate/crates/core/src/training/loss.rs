use serde::{Deserialize, Serialize};

use super::TrainingError;
use crate::mesh::{distance, Mesh, Point};

/// Which mesh the reconstruction is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossTarget {
    /// Reproduce the network input.
    Input,
    /// Reproduce the pre-injury mesh.
    #[default]
    GroundTruth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMetric {
    /// Mean Euclidean distance between corresponding vertices.
    #[default]
    L2,
    /// Mean absolute coordinate difference.
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    #[serde(default)]
    pub target: LossTarget,
    #[serde(default)]
    pub metric: LossMetric,
}

fn check_counts(a: usize, b: usize) -> Result<(), TrainingError> {
    if a == b {
        Ok(())
    } else {
        Err(TrainingError::CountMismatch { left: a, right: b })
    }
}

pub fn vertex_distance(a: &Mesh, b: &Mesh) -> Result<Vec<f64>, TrainingError> {
    check_counts(a.vertex_count(), b.vertex_count())?;
    Ok(a.positions()
        .iter()
        .zip(b.positions())
        .map(|(p, q)| distance(*p, *q))
        .collect())
}

/// Loss value and its gradient with respect to every coordinate of `out`.
/// The L2 gradient at a zero distance, and the L1 gradient at a zero
/// difference, are taken as 0.
pub fn loss_positions(
    out: &[Point],
    target: &[Point],
    metric: LossMetric,
) -> Result<(f64, Vec<Point>), TrainingError> {
    check_counts(out.len(), target.len())?;
    let n = out.len();
    if n == 0 {
        return Ok((0.0, Vec::new()));
    }
    let mut total = 0.0;
    let mut grad = vec![[0.0; 3]; n];
    match metric {
        LossMetric::L2 => {
            let inv = 1.0 / n as f64;
            for ((o, t), g) in out.iter().zip(target).zip(&mut grad) {
                let d = distance(*o, *t);
                total += d;
                if d > 0.0 {
                    for c in 0..3 {
                        g[c] = (o[c] - t[c]) * inv / d;
                    }
                }
            }
            Ok((total * inv, grad))
        }
        LossMetric::L1 => {
            let inv = 1.0 / (3 * n) as f64;
            for ((o, t), g) in out.iter().zip(target).zip(&mut grad) {
                for c in 0..3 {
                    let diff = o[c] - t[c];
                    total += diff.abs();
                    g[c] = if diff > 0.0 {
                        inv
                    } else if diff < 0.0 {
                        -inv
                    } else {
                        0.0
                    };
                }
            }
            Ok((total * inv, grad))
        }
    }
}

pub fn loss(out: &Mesh, target: &Mesh, spec: LossSpec) -> Result<(f64, Vec<Point>), TrainingError> {
    loss_positions(out.positions(), target.positions(), spec.metric)
}
