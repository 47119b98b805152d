use super::{boundary_loops, Mesh, MeshResult};

/// Closes every boundary loop with a centroid fan.
///
/// Each loop of length `L` gains one vertex at the mean of its rim vertices
/// and `L` triangles. A rim edge `a -> b` is owned by a face wound `a -> b`, so
/// the fan triangle uses `b -> a` to keep a consistent orientation. Attribute
/// channels get the rim mean at the new vertex.
///
/// Watertight input is returned unchanged. Non-manifold edges and loops that
/// revisit a vertex are reported as errors before anything is filled.
pub fn fill_holes(mesh: &Mesh) -> MeshResult<Mesh> {
    let loops = boundary_loops(mesh)?;
    if loops.is_empty() {
        return Ok(mesh.clone());
    }

    let mut positions = mesh.positions().to_vec();
    let mut faces = mesh.faces().to_vec();
    let mut attributes = mesh.attributes().clone();

    for rim in &loops {
        let inv = 1.0 / rim.len() as f64;
        let mut centroid = [0.0; 3];
        for &v in rim.vertices() {
            for a in 0..3 {
                centroid[a] += positions[v][a];
            }
        }
        let center = positions.len();
        positions.push(centroid.map(|c| c * inv));
        for values in attributes.values_mut() {
            let mean = rim.vertices().iter().map(|&v| values[v]).sum::<f64>() * inv;
            values.push(mean);
        }
        for (a, b) in rim.edges() {
            faces.push([b, a, center]);
        }
    }
    Mesh::with_attributes(positions, faces, attributes)
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::super::{euler_characteristic, is_watertight, MeshError};
    use super::*;

    #[test]
    fn cube_minus_quad_gets_a_fan() {
        let open = without_faces(&cube(), &[0, 1]);
        assert_eq!((open.vertex_count(), open.face_count()), (8, 10));
        let filled = fill_holes(&open).unwrap();
        assert_eq!((filled.vertex_count(), filled.face_count()), (9, 14));
        assert_eq!(euler_characteristic(&filled), 2);
        assert!(is_watertight(&filled));
        assert_eq!(filled.positions()[8], [0.5, 0.5, 1.0]);
        assert!((filled.signed_volume() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn watertight_is_identity() {
        let ico = icosahedron();
        assert_eq!(fill_holes(&ico).unwrap(), ico);
    }

    #[test]
    fn holes_of_three_and_five() {
        let sphere = crate::scargen::icosphere(1);
        // one isolated face, and a strip of three faces around a shared vertex
        let strip = {
            let v = sphere.faces()[40][0];
            let around: Vec<usize> = sphere
                .faces()
                .iter()
                .enumerate()
                .filter(|(_, f)| f.contains(&v))
                .map(|(i, _)| i)
                .collect();
            // three consecutive faces of a fan share edges pairwise in order
            let mut chosen = vec![around[0]];
            while chosen.len() < 3 {
                let last = sphere.faces()[*chosen.last().unwrap()];
                let next = around
                    .iter()
                    .copied()
                    .find(|&f| {
                        !chosen.contains(&f)
                            && sphere.faces()[f]
                                .iter()
                                .filter(|x| last.contains(x))
                                .count()
                                == 2
                    })
                    .unwrap();
                chosen.push(next);
            }
            chosen
        };
        let far = (0..sphere.face_count())
            .find(|&f| {
                sphere.faces()[f]
                    .iter()
                    .all(|v| strip.iter().all(|&s| !sphere.faces()[s].contains(v)))
            })
            .unwrap();
        let mut drop = strip.clone();
        drop.push(far);
        let open = without_faces(&sphere, &drop);
        let mut lens: Vec<_> = boundary_loops(&open)
            .unwrap()
            .iter()
            .map(|l| l.len())
            .collect();
        lens.sort();
        assert_eq!(lens, vec![3, 5]);

        let filled = fill_holes(&open).unwrap();
        assert_eq!(filled.vertex_count(), open.vertex_count() + 2);
        assert_eq!(filled.face_count(), open.face_count() + 8);
        assert!(is_watertight(&filled));
        assert_eq!(euler_characteristic(&filled), 2);
    }

    #[test]
    fn attributes_extend_with_rim_mean() {
        let open = without_faces(&cube(), &[0, 1]);
        let values = (0..8).map(|v| v as f64).collect();
        let open = open.with_attribute("error", values).unwrap();
        let filled = fill_holes(&open).unwrap();
        assert_eq!(filled.attribute("error").unwrap()[8], 5.5);
    }

    #[test]
    fn pinched_rim_is_not_filled() {
        let p = vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0],
            [-1.0, 0.0, 0.0],
            [-1.0, -1.0, 0.0],
        ];
        let m = Mesh::new(p, vec![[0, 1, 2], [0, 3, 4]]).unwrap();
        assert!(matches!(fill_holes(&m), Err(MeshError::NonSimpleLoop(_))));
    }
}
