//! Indexed triangle meshes: representation, file I/O, topology queries and
//! hole filling.
//!
//! Faces are wound counter-clockwise when seen from outside, so that the
//! right-hand rule gives outward normals.

mod holes;
mod io;
mod topology;

use std::collections::BTreeMap;

use thiserror::Error;

pub use holes::fill_holes;
pub use io::{load_mesh, load_mesh_file, save_mesh, save_mesh_file, MeshFormat};
pub use topology::{
    boundary_loops, connected_components, euler_characteristic, hop_distances, is_watertight,
    k_ring, keep_largest_component, unique_edges, Adjacency, BoundaryLoop, EdgeFaces,
};

pub type Point = [f64; 3];
pub type Face = [usize; 3];

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("face {face} references vertex {index} but the mesh has {count} vertices")]
    IndexOutOfRange {
        face: usize,
        index: usize,
        count: usize,
    },
    #[error("face {face} is degenerate: {indices:?}")]
    DegenerateFace { face: usize, indices: Face },
    #[error("non-manifold edge ({0}, {1}) shared by {2} faces")]
    NonManifoldEdge(usize, usize, usize),
    #[error("boundary through vertex {0} is not a simple loop")]
    NonSimpleLoop(usize),
    #[error("attribute `{name}` has {len} values for {count} vertices")]
    AttributeLength {
        name: String,
        len: usize,
        count: usize,
    },
    #[error("{format} cannot store attribute `{name}`")]
    UnsupportedAttribute { format: &'static str, name: String },
    #[error("face {0} has zero area and no normal")]
    ZeroAreaFace(usize),
    #[error("vertex {index} out of range for a mesh of {count} vertices")]
    VertexOutOfRange { index: usize, count: usize },
    #[error("mesh is empty")]
    Empty,
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type MeshResult<T> = Result<T, MeshError>;

/// Indexed triangle surface with optional named per-vertex scalar channels.
///
/// A `Mesh` is validated on construction and is not mutated afterwards; the
/// operations in this module return new meshes.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    positions: Vec<Point>,
    faces: Vec<Face>,
    attributes: BTreeMap<String, Vec<f64>>,
}

impl Mesh {
    pub fn new(positions: Vec<Point>, faces: Vec<Face>) -> MeshResult<Self> {
        Self::with_attributes(positions, faces, BTreeMap::new())
    }

    pub fn with_attributes(
        positions: Vec<Point>,
        faces: Vec<Face>,
        attributes: BTreeMap<String, Vec<f64>>,
    ) -> MeshResult<Self> {
        let count = positions.len();
        for (fi, face) in faces.iter().enumerate() {
            for &index in face {
                if index >= count {
                    return Err(MeshError::IndexOutOfRange {
                        face: fi,
                        index,
                        count,
                    });
                }
            }
            if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
                return Err(MeshError::DegenerateFace {
                    face: fi,
                    indices: *face,
                });
            }
        }
        for (name, values) in &attributes {
            if values.len() != count {
                return Err(MeshError::AttributeLength {
                    name: name.clone(),
                    len: values.len(),
                    count,
                });
            }
        }
        Ok(Self {
            positions,
            faces,
            attributes,
        })
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn attributes(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.attributes
    }

    pub fn attribute(&self, name: &str) -> Option<&[f64]> {
        self.attributes.get(name).map(Vec::as_slice)
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Same connectivity, new coordinates. Attributes are dropped since they
    /// usually describe the old geometry.
    pub fn with_positions(&self, positions: Vec<Point>) -> MeshResult<Self> {
        if positions.len() != self.positions.len() {
            return Err(MeshError::AttributeLength {
                name: "positions".into(),
                len: positions.len(),
                count: self.positions.len(),
            });
        }
        Ok(Self {
            positions,
            faces: self.faces.clone(),
            attributes: BTreeMap::new(),
        })
    }

    /// Returns a copy with one more per-vertex channel.
    pub fn with_attribute(&self, name: &str, values: Vec<f64>) -> MeshResult<Self> {
        let mut attributes = self.attributes.clone();
        attributes.insert(name.to_string(), values);
        Self::with_attributes(self.positions.clone(), self.faces.clone(), attributes)
    }

    pub fn face_normal(&self, face: usize) -> Point {
        let [a, b, c] = self.faces[face];
        let p = &self.positions;
        cross(sub(p[b], p[a]), sub(p[c], p[a]))
    }

    /// Area-weighted vertex normals, normalized. Vertices without faces get a
    /// zero vector.
    pub fn vertex_normals(&self) -> Vec<Point> {
        let mut normals = vec![[0.0; 3]; self.positions.len()];
        for (fi, face) in self.faces.iter().enumerate() {
            let n = self.face_normal(fi);
            for &v in face {
                normals[v] = add(normals[v], n);
            }
        }
        for n in &mut normals {
            let len = norm(*n);
            if len > 0.0 {
                *n = scale(*n, 1.0 / len);
            }
        }
        normals
    }

    /// Signed enclosed volume via the divergence theorem. Positive for a closed
    /// mesh with outward-facing winding.
    pub fn signed_volume(&self) -> f64 {
        self.faces
            .iter()
            .map(|&[a, b, c]| {
                let p = &self.positions;
                dot(p[a], cross(p[b], p[c]))
            })
            .sum::<f64>()
            / 6.0
    }

    pub fn bounding_box(&self) -> Option<(Point, Point)> {
        let first = *self.positions.first()?;
        let mut lo = first;
        let mut hi = first;
        for p in &self.positions {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        Some((lo, hi))
    }

    pub fn bounding_box_diagonal(&self) -> f64 {
        self.bounding_box()
            .map(|(lo, hi)| norm(sub(hi, lo)))
            .unwrap_or(0.0)
    }

    pub fn mean_edge_length(&self) -> f64 {
        let edges = unique_edges(self);
        if edges.is_empty() {
            return 0.0;
        }
        let total: f64 = edges
            .iter()
            .map(|&(a, b)| norm(sub(self.positions[a], self.positions[b])))
            .sum();
        total / edges.len() as f64
    }

    /// True when both meshes have the same vertex count and face list.
    pub fn same_topology(&self, other: &Mesh) -> bool {
        self.positions.len() == other.positions.len() && self.faces == other.faces
    }
}

pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn scale(a: Point, s: f64) -> Point {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: Point, b: Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

/// Euclidean distance between two points.
pub fn distance(a: Point, b: Point) -> f64 {
    norm(sub(a, b))
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn rejects_out_of_range_and_degenerate_faces() {
        let p = vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert!(matches!(
            Mesh::new(p.clone(), vec![[0, 1, 8]]),
            Err(MeshError::IndexOutOfRange { index: 8, .. })
        ));
        assert!(matches!(
            Mesh::new(p, vec![[0, 1, 1]]),
            Err(MeshError::DegenerateFace { face: 0, .. })
        ));
    }

    #[test]
    fn cube_volume_and_normals_point_outward() {
        let cube = cube();
        assert!((cube.signed_volume() - 1.0).abs() < 1e-12);
        let n = cube.vertex_normals()[6];
        assert!(n.iter().all(|&c| c > 0.0));
        assert!((cube.bounding_box_diagonal() - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn attribute_length_is_checked() {
        let cube = cube();
        assert!(cube.with_attribute("error", vec![0.0; 3]).is_err());
        let with = cube.with_attribute("error", vec![0.5; 8]).unwrap();
        assert_eq!(with.attribute("error").unwrap()[7], 0.5);
    }
}
