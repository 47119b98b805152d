//! Single-file model checkpoints.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic "FACEFILL-CKPT" | u32 version | u64 header length | JSON header
//! u32 block count | blocks: u32 name length, name, u64 value count, f64 values
//! ```
//!
//! The header holds the architecture, the full hierarchy, the face list and
//! the normalizer scale, so loading never rebuilds the hierarchy. Blocks hold
//! `normalizer.mean` followed by every parameter tensor.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, Model, Normalizer, TrainingError};
use crate::hierarchy::MeshHierarchy;
use crate::mesh::{Face, Point};

pub const CHECKPOINT_MAGIC: &[u8; 13] = b"FACEFILL-CKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
const MEAN_BLOCK: &str = "normalizer.mean";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    architecture: Architecture,
    hierarchy: MeshHierarchy,
    faces: Vec<Face>,
    normalizer_scale: f64,
}

pub fn write_checkpoint(model: &Model) -> Vec<u8> {
    let header = Header {
        architecture: model.architecture.clone(),
        hierarchy: model.hierarchy.clone(),
        faces: model.faces.clone(),
        normalizer_scale: model.normalizer.scale,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mean: Vec<f64> = model.normalizer.mean.iter().flatten().copied().collect();
    let mut blocks: Vec<(String, &[f64])> = vec![(MEAN_BLOCK.to_string(), &mean)];
    blocks.extend(model.params.named_tensors());

    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(blocks.len() as u32).to_le_bytes());
    for (name, values) in blocks {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TrainingError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| TrainingError::Checkpoint("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, TrainingError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<usize, TrainingError> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| TrainingError::Checkpoint("length overflow".into()))
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Model, TrainingError> {
    let bad = |m: String| TrainingError::Checkpoint(m);
    let mut r = Reader { bytes, pos: 0 };
    if r.take(CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
        return Err(bad("missing magic string".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let header_len = r.u64()?;
    let header: Header = serde_json::from_slice(r.take(header_len)?)?;

    let block_count = r.u32()?;
    let mut blocks: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for _ in 0..block_count {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| bad("block name is not UTF-8".into()))?;
        let count = r.u64()?;
        let raw = r.take(
            count
                .checked_mul(8)
                .ok_or_else(|| bad("length overflow".into()))?,
        )?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if blocks.insert(name.clone(), values).is_some() {
            return Err(bad(format!("duplicate block {name}")));
        }
    }
    if r.pos != bytes.len() {
        return Err(bad("trailing bytes".into()));
    }

    let n = header.hierarchy.levels.first().map_or(0, Vec::len);
    let mean = blocks
        .remove(MEAN_BLOCK)
        .ok_or_else(|| bad(format!("missing block {MEAN_BLOCK}")))?;
    if mean.len() != 3 * n {
        return Err(bad(format!("{MEAN_BLOCK} has {} values", mean.len())));
    }
    let normalizer = Normalizer {
        mean: mean
            .chunks_exact(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect::<Vec<Point>>(),
        scale: header.normalizer_scale,
    };
    if !(normalizer.scale.is_finite() && normalizer.scale > 0.0) {
        return Err(bad("normalizer scale must be positive".into()));
    }
    if header.faces.iter().flatten().any(|&v| v >= n) {
        return Err(bad("face index out of range".into()));
    }
    let mut model = Model::with_hierarchy(
        header.architecture,
        header.hierarchy,
        header.faces,
        normalizer,
        0,
    )?;
    for (name, tensor) in model.params.named_tensors_mut() {
        let values = blocks
            .remove(&name)
            .ok_or_else(|| bad(format!("missing block {name}")))?;
        if values.len() != tensor.len() {
            return Err(bad(format!(
                "block {name} has {} values, expected {}",
                values.len(),
                tensor.len()
            )));
        }
        *tensor = values;
    }
    if let Some(extra) = blocks.keys().next() {
        return Err(bad(format!("unexpected block {extra}")));
    }
    Ok(model)
}

/// Writes to a sibling temporary file, then renames it into place.
pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<(), TrainingError> {
    let path = path.as_ref();
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(&write_checkpoint(model))?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| TrainingError::Io(e.error))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model, TrainingError> {
    read_checkpoint(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scargen::icosphere;

    fn model() -> Model {
        let arch = Architecture {
            level_ratios: vec![1.0, 0.25],
            widths: vec![3, 5],
            ..Architecture::default()
        };
        let mesh = icosphere(2);
        let norm = Normalizer::fit(&[mesh.positions()]).unwrap();
        Model::new(arch, &mesh, norm, 11).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let bytes = write_checkpoint(&m);
        assert_eq!(&bytes[..13], CHECKPOINT_MAGIC);
        let back = read_checkpoint(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(write_checkpoint(&back), bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let m = model();
        save_checkpoint(&m, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), m);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn corrupted_input_is_rejected() {
        let bytes = write_checkpoint(&model());
        assert!(read_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(read_checkpoint(&wrong).is_err());
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(read_checkpoint(&longer).is_err());
    }
}
