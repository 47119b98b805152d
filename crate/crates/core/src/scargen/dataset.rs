use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_scar, sample_scar_spec, synth_head, ScarError, ScarRanges, ScarSpec};
use crate::mesh::{save_mesh_file, Mesh};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Val => "val",
            Self::Test => "test",
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Self::Train),
            "val" => Ok(Self::Val),
            "test" => Ok(Self::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub count: usize,
    pub scars_per_mesh: usize,
    pub seed: u64,
    /// Fractions of heads assigned to train, val and test.
    pub split_ratios: [f64; 3],
    pub subdivisions: u32,
    pub ranges: ScarRanges,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            count: 10,
            scars_per_mesh: 10,
            seed: 0,
            split_ratios: [0.8, 0.1, 0.1],
            subdivisions: 3,
            ranges: ScarRanges::default(),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<(), ScarError> {
        if self.count == 0 {
            return Err(ScarError::InvalidConfig("count must be at least 1".into()));
        }
        if self.scars_per_mesh == 0 {
            return Err(ScarError::InvalidConfig(
                "scars_per_mesh must be at least 1".into(),
            ));
        }
        if self.count > 10_000 || self.scars_per_mesh > 100 {
            return Err(ScarError::InvalidConfig(
                "file naming supports at most 10000 heads and 100 scars per head".into(),
            ));
        }
        let sum: f64 = self.split_ratios.iter().sum();
        if self.split_ratios.iter().any(|r| !(*r >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(ScarError::InvalidConfig(format!(
                "split ratios must be non-negative and sum to 1, got {:?}",
                self.split_ratios
            )));
        }
        self.ranges.validate()
    }

    /// Heads per split after rounding; test takes the remainder.
    pub fn split_sizes(&self) -> [usize; 3] {
        let n = self.count;
        let train = ((self.split_ratios[0] * n as f64).round() as usize).min(n);
        let val = ((self.split_ratios[1] * n as f64).round() as usize).min(n - train);
        [train, val, n - train - val]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub head: usize,
    pub ground_truth: String,
    pub wounded: String,
    pub scar: ScarSpec,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub config: DatasetConfig,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScarError> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("manifest serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn entries_in(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

pub fn ground_truth_name(head: usize) -> String {
    format!("{head:04}_gt.ply")
}

pub fn wounded_name(head: usize, scar: usize) -> String {
    format!("{head:04}_{scar:02}.ply")
}

/// Per-head generator: the global seed picks the key, the head index picks
/// the stream, so heads can be built in any order.
fn head_rng(seed: u64, head: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(head as u64 + 1);
    rng
}

fn assign_splits(config: &DatasetConfig) -> Vec<Split> {
    let mut order: Vec<usize> = (0..config.count).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(0);
    order.shuffle(&mut rng);
    let [train, val, _] = config.split_sizes();
    let mut splits = vec![Split::Test; config.count];
    for (rank, &head) in order.iter().enumerate() {
        splits[head] = if rank < train {
            Split::Train
        } else if rank < train + val {
            Split::Val
        } else {
            Split::Test
        };
    }
    splits
}

struct HeadOutput {
    ground_truth: Mesh,
    wounded: Vec<(ScarSpec, Mesh)>,
}

fn build_head(config: &DatasetConfig, head: usize) -> Result<HeadOutput, ScarError> {
    let mut rng = head_rng(config.seed, head);
    let ground_truth = synth_head(rng.next_u64(), config.subdivisions);
    let wounded = (0..config.scars_per_mesh)
        .map(|_| {
            let spec = sample_scar_spec(&mut rng, &config.ranges, &ground_truth)?;
            let (mesh, _) = generate_scar(&ground_truth, &spec)?;
            Ok((spec, mesh))
        })
        .collect::<Result<_, ScarError>>()?;
    Ok(HeadOutput {
        ground_truth,
        wounded,
    })
}

/// Builds `count` synthetic heads with `scars_per_mesh` wounded variants each,
/// writes them as PLY files into `out_dir` and returns the manifest (also
/// written to `out_dir/manifest.json`). Every variant of a head shares the
/// head's split.
pub fn make_dataset(config: &DatasetConfig, out_dir: &Path) -> Result<DatasetManifest, ScarError> {
    config.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let splits = assign_splits(config);

    let per_head: Vec<Vec<ManifestEntry>> = (0..config.count)
        .into_par_iter()
        .map(|head| {
            let out = build_head(config, head)?;
            let gt_name = ground_truth_name(head);
            save_mesh_file(&out.ground_truth, out_dir.join(&gt_name))?;
            out.wounded
                .into_iter()
                .enumerate()
                .map(|(scar, (spec, mesh))| {
                    let name = wounded_name(head, scar);
                    save_mesh_file(&mesh, out_dir.join(&name))?;
                    Ok(ManifestEntry {
                        head,
                        ground_truth: gt_name.clone(),
                        wounded: name,
                        scar: spec,
                        split: splits[head],
                    })
                })
                .collect()
        })
        .collect::<Result<_, ScarError>>()?;

    let manifest = DatasetManifest {
        version: 1,
        config: config.clone(),
        entries: per_head.into_iter().flatten().collect(),
    };
    std::fs::write(out_dir.join(MANIFEST_FILE), manifest.to_json_bytes())?;
    Ok(manifest)
}

/// Directory holding a manifest's mesh files.
pub fn manifest_dir(manifest_path: &Path) -> PathBuf {
    manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}
