//! Wound-filling extraction from a wounded mesh and its reconstruction.
//!
//! Vertices whose displacement between the two meshes is a statistical
//! outlier (`|d - mean| > k * std`) mark the wound. The filling is the solid
//! enclosed between the reconstructed surface and the wounded surface over
//! the wound region grown by one ring, closed along its rim by a band of
//! triangle pairs.
//!
//! Both meshes must share vertex order and faces.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::mesh::{
    boundary_loops, distance, euler_characteristic, is_watertight, Face, Mesh, MeshError, Point,
};

pub const DEFAULT_K_SIGMA: f64 = 2.0;

#[derive(Debug, Error)]
pub enum FillError {
    #[error("vertex count mismatch: {input} input vs {output} output")]
    CountMismatch { input: usize, output: usize },
    #[error("input and output meshes have different faces")]
    FaceMismatch,
    #[error("no filling detected: no vertex displacement is an outlier")]
    NoFilling,
    #[error("{outliers} outlier vertices but no face has all three corners among them")]
    NoPatch { outliers: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// `D_i = |v_i - v'_i|` for index-corresponding vertices.
pub fn distance_set(input: &Mesh, output: &Mesh) -> Result<Vec<f64>, FillError> {
    if input.vertex_count() != output.vertex_count() {
        return Err(FillError::CountMismatch {
            input: input.vertex_count(),
            output: output.vertex_count(),
        });
    }
    Ok(input
        .positions()
        .iter()
        .zip(output.positions())
        .map(|(a, b)| distance(*a, *b))
        .collect())
}

/// Population mean and standard deviation.
pub fn mean_std(d: &[f64]) -> (f64, f64) {
    if d.is_empty() {
        return (0.0, 0.0);
    }
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Indices with `|d_i - mean| > k_sigma * std`, ascending. A constant
/// sequence has no outliers.
pub fn outlier_indices(d: &[f64], k_sigma: f64) -> Vec<usize> {
    let (mean, std) = mean_std(d);
    d.iter()
        .enumerate()
        .filter(|(_, x)| (*x - mean).abs() > k_sigma * std)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FillDiagnostics {
    pub vertex_count: usize,
    pub mean: f64,
    pub std: f64,
    pub k_sigma: f64,
    /// `k_sigma * std`.
    pub threshold: f64,
    pub outlier_count: usize,
    /// Faces with all three vertices among the outliers.
    pub patch_faces: usize,
    /// Faces touching a patch vertex.
    pub grown_faces: usize,
    pub shells: usize,
    pub rim_loops: usize,
    pub watertight: bool,
    pub euler_characteristic: i64,
    pub signed_volume: f64,
    pub messages: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FillReport {
    pub distances: Vec<f64>,
    pub outliers: Vec<usize>,
    pub filling: Mesh,
    pub diagnostics: FillDiagnostics,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    diagnostics: &'a FillDiagnostics,
    outliers: &'a [usize],
    distances: &'a [f64],
    filling_vertices: usize,
    filling_faces: usize,
}

impl FillReport {
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let json = ReportJson {
            diagnostics: &self.diagnostics,
            outliers: &self.outliers,
            distances: &self.distances,
            filling_vertices: self.filling.vertex_count(),
            filling_faces: self.filling.face_count(),
        };
        let mut bytes = serde_json::to_vec_pretty(&json).expect("report serializes");
        bytes.push(b'\n');
        bytes
    }
}

/// Face-connected groups (sharing an edge) of `faces`, each sorted.
fn face_components(faces: &[usize], all: &[Face]) -> Vec<Vec<usize>> {
    let mut by_edge: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (k, &f) in faces.iter().enumerate() {
        let [a, b, c] = all[f];
        for (u, v) in [(a, b), (b, c), (c, a)] {
            by_edge.entry((u.min(v), u.max(v))).or_default().push(k);
        }
    }
    let mut parent: Vec<usize> = (0..faces.len()).collect();
    fn root(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for group in by_edge.values() {
        for w in group.windows(2) {
            let (ra, rb) = (root(&mut parent, w[0]), root(&mut parent, w[1]));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for k in 0..faces.len() {
        let r = root(&mut parent, k);
        groups.entry(r).or_default().push(faces[k]);
    }
    groups.into_values().collect()
}

/// Builds one closed shell (or, if its rim cannot be traced, two open
/// sheets) over the faces `region` and appends it to `positions`/`faces`.
/// Returns the number of rim loops, or an error message for the open case.
fn build_shell(
    region: &[usize],
    input: &Mesh,
    output: &Mesh,
    weld_tolerance: f64,
    positions: &mut Vec<Point>,
    faces: &mut Vec<Face>,
) -> Result<usize, String> {
    let src = input.faces();
    let mut vertices: BTreeSet<usize> = BTreeSet::new();
    for &f in region {
        vertices.extend(src[f]);
    }
    let local: BTreeMap<usize, usize> = vertices.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let sheet_faces: Vec<Face> = region.iter().map(|&f| src[f].map(|v| local[&v])).collect();
    let sheet_positions: Vec<Point> = vertices.iter().map(|&v| output.positions()[v]).collect();
    let sheet = Mesh::new(sheet_positions, sheet_faces.clone()).map_err(|e| e.to_string())?;
    let loops = boundary_loops(&sheet);

    let rim: BTreeSet<usize> = match &loops {
        Ok(loops) => loops
            .iter()
            .flat_map(|l| l.vertices().iter().copied())
            .collect(),
        Err(_) => BTreeSet::new(),
    };
    let rim_edges: BTreeSet<(usize, usize)> = match &loops {
        Ok(loops) => loops
            .iter()
            .flat_map(|l| l.edges().map(|(a, b)| (a.min(b), a.max(b))))
            .collect(),
        Err(_) => BTreeSet::new(),
    };

    // Rim vertices that did not move are shared by both sheets, except that
    // an interior edge joining two such vertices would gain four faces.
    let globals: Vec<usize> = vertices.iter().copied().collect();
    let mut welded: BTreeSet<usize> = rim
        .iter()
        .copied()
        .filter(|&l| {
            let g = globals[l];
            distance(input.positions()[g], output.positions()[g]) <= weld_tolerance
        })
        .collect();
    for f in &sheet_faces {
        for (u, v) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            let key = (u.min(v), u.max(v));
            if !rim_edges.contains(&key) && welded.contains(&u) && welded.contains(&v) {
                welded.remove(&key.1);
            }
        }
    }

    let base = positions.len();
    positions.extend(globals.iter().map(|&g| output.positions()[g]));
    let mut bottom = vec![0usize; globals.len()];
    for (l, &g) in globals.iter().enumerate() {
        bottom[l] = if welded.contains(&l) {
            base + l
        } else {
            positions.push(input.positions()[g]);
            positions.len() - 1
        };
    }
    for f in &sheet_faces {
        faces.push(f.map(|l| base + l));
        faces.push([bottom[f[0]], bottom[f[2]], bottom[f[1]]]);
    }
    match loops {
        Ok(loops) => {
            for l in &loops {
                for (a, b) in l.edges() {
                    let (ta, tb, ba, bb) = (base + a, base + b, bottom[a], bottom[b]);
                    for tri in [[tb, ta, ba], [tb, ba, bb]] {
                        if tri[0] != tri[1] && tri[1] != tri[2] && tri[0] != tri[2] {
                            faces.push(tri);
                        }
                    }
                }
            }
            Ok(loops.len())
        }
        Err(e) => Err(format!(
            "rim could not be traced ({e}); emitting open sheets"
        )),
    }
}

/// Extracts the filling between `input` (wounded) and `output`
/// (reconstructed).
pub fn extract_filling(input: &Mesh, output: &Mesh, k_sigma: f64) -> Result<FillReport, FillError> {
    let distances = distance_set(input, output)?;
    if input.faces() != output.faces() {
        return Err(FillError::FaceMismatch);
    }
    let (mean, std) = mean_std(&distances);
    let outliers = outlier_indices(&distances, k_sigma);
    if outliers.is_empty() {
        return Err(FillError::NoFilling);
    }
    let is_outlier: BTreeSet<usize> = outliers.iter().copied().collect();
    let faces = input.faces();
    let patch: Vec<usize> = (0..faces.len())
        .filter(|&f| faces[f].iter().all(|v| is_outlier.contains(v)))
        .collect();
    if patch.is_empty() {
        return Err(FillError::NoPatch {
            outliers: outliers.len(),
        });
    }
    let patch_vertices: BTreeSet<usize> = patch.iter().flat_map(|&f| faces[f]).collect();
    let grown: Vec<usize> = (0..faces.len())
        .filter(|&f| faces[f].iter().any(|v| patch_vertices.contains(v)))
        .collect();

    let diag = input
        .bounding_box_diagonal()
        .max(output.bounding_box_diagonal());
    let weld_tolerance = 1e-9 * diag;
    let mut positions = Vec::new();
    let mut out_faces = Vec::new();
    let mut messages = Vec::new();
    let mut rim_loops = 0;
    let shells = face_components(&grown, faces);
    for region in &shells {
        match build_shell(
            region,
            input,
            output,
            weld_tolerance,
            &mut positions,
            &mut out_faces,
        ) {
            Ok(n) => rim_loops += n,
            Err(msg) => messages.push(msg),
        }
    }

    let mut filling = Mesh::new(positions, out_faces)?;
    if filling.signed_volume() < 0.0 {
        let flipped = filling.faces().iter().map(|&[a, b, c]| [a, c, b]).collect();
        filling = Mesh::new(filling.positions().to_vec(), flipped)?;
    }
    let watertight = is_watertight(&filling);
    if !watertight && messages.is_empty() {
        messages.push("filling is not watertight".into());
    }
    let diagnostics = FillDiagnostics {
        vertex_count: distances.len(),
        mean,
        std,
        k_sigma,
        threshold: k_sigma * std,
        outlier_count: outliers.len(),
        patch_faces: patch.len(),
        grown_faces: grown.len(),
        shells: shells.len(),
        rim_loops,
        watertight,
        euler_characteristic: euler_characteristic(&filling),
        signed_volume: filling.signed_volume(),
        messages,
    };
    Ok(FillReport {
        distances,
        outliers,
        filling,
        diagnostics,
    })
}
