use std::collections::BTreeMap;
use std::path::Path;

use super::TrainingError;
use crate::mesh::{load_mesh_file, Mesh};
use crate::scargen::{DatasetManifest, Split};

/// A wounded mesh and its pre-injury ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    /// File name of the wounded mesh, used to name outputs.
    pub name: String,
    pub input: Mesh,
    pub ground_truth: Mesh,
}

/// Loads every pair of `split`, in manifest order. All meshes must share one
/// face list.
pub fn load_split(
    manifest: &DatasetManifest,
    dir: &Path,
    split: Split,
) -> Result<Vec<Pair>, TrainingError> {
    let mut truths: BTreeMap<&str, Mesh> = BTreeMap::new();
    let mut pairs = Vec::new();
    for entry in manifest.entries_in(split) {
        if !truths.contains_key(entry.ground_truth.as_str()) {
            let gt = load_mesh_file(dir.join(&entry.ground_truth))?;
            truths.insert(&entry.ground_truth, gt);
        }
        let ground_truth = truths[entry.ground_truth.as_str()].clone();
        let input = load_mesh_file(dir.join(&entry.wounded))?;
        pairs.push(Pair {
            name: entry.wounded.clone(),
            input,
            ground_truth,
        });
    }
    if let Some(first) = pairs.first() {
        let faces = first.ground_truth.faces();
        for p in &pairs {
            if p.input.faces() != faces || p.ground_truth.faces() != faces {
                return Err(TrainingError::TopologyMismatch(format!(
                    "{} does not share the dataset's face list",
                    p.name
                )));
            }
        }
    }
    Ok(pairs)
}
