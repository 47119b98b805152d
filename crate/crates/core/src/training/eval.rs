use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{vertex_distance, Model, Pair, TrainingError};
use crate::mesh::Mesh;
use crate::scargen::Split;

/// Anything that maps a wounded mesh to a reconstruction with the same
/// vertex order.
pub trait Reconstructor: Sync {
    fn reconstruct(&self, input: &Mesh) -> Result<Mesh, TrainingError>;
}

impl Reconstructor for Model {
    fn reconstruct(&self, input: &Mesh) -> Result<Mesh, TrainingError> {
        Model::reconstruct(self, input)
    }
}

/// Returns its input unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityReconstructor;

impl Reconstructor for IdentityReconstructor {
    fn reconstruct(&self, input: &Mesh) -> Result<Mesh, TrainingError> {
        Ok(input.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    pub statistic: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshRecord {
    pub name: String,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

/// Distance statistics between reconstructions and ground truth over a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Split,
    pub mesh_count: usize,
    /// Smallest single-vertex distance.
    pub min_vertex_distance: f64,
    /// Largest single-vertex distance.
    pub max_vertex_distance: f64,
    /// Mean over every vertex of every mesh.
    pub mean_vertex_distance: f64,
    /// Smallest per-mesh mean distance.
    pub min_mesh_mean: f64,
    /// Largest per-mesh mean distance.
    pub max_mesh_mean: f64,
    /// The five values above as labelled rows.
    pub statistics: Vec<StatRow>,
    pub meshes: Vec<MeshRecord>,
}

impl EvalReport {
    /// Builds the report from per-mesh distance lists.
    pub fn from_distances(
        split: Split,
        per_mesh: &[(String, Vec<f64>)],
    ) -> Result<Self, TrainingError> {
        if per_mesh.is_empty() {
            return Err(TrainingError::EmptySplit(split));
        }
        let mut meshes = Vec::with_capacity(per_mesh.len());
        let (mut lo, mut hi, mut sum, mut count) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
        for (name, d) in per_mesh {
            let min = d.iter().copied().fold(f64::INFINITY, f64::min);
            let max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = d.iter().sum();
            lo = lo.min(min);
            hi = hi.max(max);
            sum += total;
            count += d.len();
            meshes.push(MeshRecord {
                name: name.clone(),
                min,
                mean: total / d.len().max(1) as f64,
                max,
            });
        }
        let means = meshes.iter().map(|m| m.mean);
        let min_mesh_mean = means.clone().fold(f64::INFINITY, f64::min);
        let max_mesh_mean = means.fold(f64::NEG_INFINITY, f64::max);
        let mean = sum / count.max(1) as f64;
        let statistics = [
            ("min vertex distance", lo),
            ("max vertex distance", hi),
            ("mean vertex distance", mean),
            ("min of per-mesh mean", min_mesh_mean),
            ("max of per-mesh mean", max_mesh_mean),
        ]
        .into_iter()
        .map(|(s, v)| StatRow {
            statistic: s.to_string(),
            value: v,
        })
        .collect();
        Ok(Self {
            split,
            mesh_count: meshes.len(),
            min_vertex_distance: lo,
            max_vertex_distance: hi,
            mean_vertex_distance: mean,
            min_mesh_mean,
            max_mesh_mean,
            statistics,
            meshes,
        })
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("report serializes");
        bytes.push(b'\n');
        bytes
    }
}

/// Reconstructs every pair and compares it with its ground truth. The
/// returned meshes are the reconstructions with a per-vertex `error`
/// attribute, in the order of `pairs`.
pub fn evaluate(
    reconstructor: &dyn Reconstructor,
    pairs: &[Pair],
    split: Split,
) -> Result<(EvalReport, Vec<Mesh>), TrainingError> {
    if pairs.is_empty() {
        return Err(TrainingError::EmptySplit(split));
    }
    let results: Vec<(String, Vec<f64>, Mesh)> = pairs
        .par_iter()
        .map(|p| {
            let recon = reconstructor.reconstruct(&p.input)?;
            let d = vertex_distance(&recon, &p.ground_truth)?;
            let colored = recon.with_attribute("error", d.clone())?;
            Ok((p.name.clone(), d, colored))
        })
        .collect::<Result<_, TrainingError>>()?;
    let per_mesh: Vec<(String, Vec<f64>)> = results
        .iter()
        .map(|(n, d, _)| (n.clone(), d.clone()))
        .collect();
    let report = EvalReport::from_distances(split, &per_mesh)?;
    Ok((report, results.into_iter().map(|(_, _, m)| m).collect()))
}
