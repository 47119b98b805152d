use std::collections::HashMap;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mesh::{Face, Mesh, Point};

const ICO_FACES: [Face; 20] = [
    [0, 11, 5],
    [0, 5, 1],
    [0, 1, 7],
    [0, 7, 10],
    [0, 10, 11],
    [1, 5, 9],
    [5, 11, 4],
    [11, 10, 2],
    [10, 7, 6],
    [7, 1, 8],
    [3, 9, 4],
    [3, 4, 2],
    [3, 2, 6],
    [3, 6, 8],
    [3, 8, 9],
    [4, 9, 5],
    [2, 4, 11],
    [6, 2, 10],
    [8, 6, 7],
    [9, 8, 1],
];

fn normalized(p: Point) -> Point {
    let len = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    p.map(|c| c / len)
}

/// Unit icosphere after `subdivisions` rounds of midpoint splitting;
/// `10 * 4^s + 2` vertices, outward winding.
pub fn icosphere(subdivisions: u32) -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut positions: Vec<Point> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .into_iter()
    .map(normalized)
    .collect();
    let mut faces = ICO_FACES.to_vec();

    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut split = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let mut mid = |u: usize, v: usize| {
                let key = (u.min(v), u.max(v));
                *midpoints.entry(key).or_insert_with(|| {
                    let (p, q) = (positions[u], positions[v]);
                    positions.push(normalized([
                        (p[0] + q[0]) * 0.5,
                        (p[1] + q[1]) * 0.5,
                        (p[2] + q[2]) * 0.5,
                    ]));
                    positions.len() - 1
                })
            };
            let (ab, bc, ca) = (mid(a, b), mid(b, c), mid(c, a));
            split.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = split;
    }
    Mesh::new(positions, faces).expect("icosphere construction is valid")
}

/// Synthetic head: an icosphere with a seeded, smooth, low-frequency radial
/// deformation and a mild anisotropic stretch. All seeds share the icosphere
/// connectivity.
pub fn synth_head(seed: u64, subdivisions: u32) -> Mesh {
    let sphere = icosphere(subdivisions);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let stretch = [
        rng.random_range(0.78..0.88),
        rng.random_range(0.98..1.08),
        rng.random_range(0.88..0.98),
    ];
    // amplitudes sum to at most 0.36, so the radius stays positive and the
    // surface stays star-shaped
    let waves: Vec<(Point, f64, f64)> = (0..6)
        .map(|_| {
            let dir = loop {
                let d: Point = [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ];
                let n2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                if n2 > 1e-3 && n2 <= 1.0 {
                    break normalized(d);
                }
            };
            let freq = rng.random_range(1.0..2.5);
            let amp = rng.random_range(0.02..0.06);
            let phase = rng.random_range(0.0..TAU);
            (dir.map(|c| c * freq), amp, phase)
        })
        .collect();

    let positions = sphere
        .positions()
        .iter()
        .map(|u| {
            let r = 1.0
                + waves
                    .iter()
                    .map(|(w, amp, phase)| {
                        amp * (w[0] * u[0] + w[1] * u[1] + w[2] * u[2] + phase).cos()
                    })
                    .sum::<f64>();
            [
                u[0] * r * stretch[0],
                u[1] * r * stretch[1],
                u[2] * r * stretch[2],
            ]
        })
        .collect();
    sphere.with_positions(positions).expect("same vertex count")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{euler_characteristic, is_watertight};

    #[test]
    fn icosphere_counts() {
        for s in 0..4 {
            let m = icosphere(s);
            assert_eq!(m.vertex_count(), 10 * 4usize.pow(s) + 2);
            assert_eq!(m.face_count(), 20 * 4usize.pow(s));
            assert!(is_watertight(&m));
            assert_eq!(euler_characteristic(&m), 2);
            assert!(m.signed_volume() > 0.0);
        }
    }

    #[test]
    fn heads_differ_only_in_geometry() {
        let a = synth_head(1, 2);
        let b = synth_head(2, 2);
        assert_eq!(a.vertex_count(), 162);
        assert!(is_watertight(&a));
        assert!(a.same_topology(&b));
        assert_ne!(a.positions(), b.positions());
        assert_eq!(a, synth_head(1, 2));
        assert!(a.signed_volume() > 0.0);
    }
}
