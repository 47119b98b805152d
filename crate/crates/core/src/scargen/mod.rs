//! Seeded synthesis of concave scars and of synthetic head datasets.
//!
//! A scar is a bowl pressed into the surface: every vertex within `radius`
//! hops of the chosen center moves inward along its vertex normal by
//! `max_depth * (1 - (r / radius)^2)`, where `r` is its hop distance.

mod dataset;
mod head;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{hop_distances, is_watertight, Adjacency, Mesh, MeshError};

pub use dataset::{
    ground_truth_name, make_dataset, manifest_dir, wounded_name, DatasetConfig, DatasetManifest,
    ManifestEntry, Split, MANIFEST_FILE,
};
pub use head::{icosphere, synth_head};

#[derive(Debug, Error)]
pub enum ScarError {
    #[error("scar center {center} is outside a mesh of {count} vertices")]
    CenterOutOfRange { center: usize, count: usize },
    #[error("invalid scar spec: {0}")]
    InvalidSpec(String),
    #[error("empty sampling range for {0}")]
    EmptyRange(&'static str),
    #[error("mesh must be watertight to carry a scar")]
    NotWatertight,
    #[error("vertex {0} has no defined normal")]
    ZeroNormal(usize),
    #[error("invalid dataset config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScarProfile {
    Quadratic,
}

impl ScarProfile {
    /// Depth factor at normalized radius `t = r / R`, zero for `t >= 1`.
    pub fn falloff(self, t: f64) -> f64 {
        match self {
            Self::Quadratic => (1.0 - t * t).max(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScarSpec {
    pub center: usize,
    /// Radius in hops along mesh edges.
    pub radius: usize,
    /// Depth at the center, in model units.
    pub max_depth: f64,
    pub profile: ScarProfile,
    pub seed: u64,
}

impl ScarSpec {
    pub fn validate(&self) -> Result<(), ScarError> {
        if self.radius == 0 {
            return Err(ScarError::InvalidSpec("radius must be positive".into()));
        }
        if !(self.max_depth > 0.0 && self.max_depth.is_finite()) {
            return Err(ScarError::InvalidSpec(format!(
                "max_depth must be positive, got {}",
                self.max_depth
            )));
        }
        Ok(())
    }
}

/// Ground-truth footprint of a planted scar.
#[derive(Debug, Clone, PartialEq)]
pub struct ScarMask {
    /// Inward displacement per vertex; zero outside the scar.
    pub displacement: Vec<f64>,
}

impl ScarMask {
    /// Sorted indices of displaced vertices.
    pub fn affected(&self) -> Vec<usize> {
        self.displacement
            .iter()
            .enumerate()
            .filter(|(_, &d)| d > 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn max_displacement(&self) -> f64 {
        self.displacement.iter().copied().fold(0.0, f64::max)
    }
}

/// Presses a scar into a watertight mesh. Vertices outside the scar keep
/// their exact coordinates and the connectivity is untouched.
///
/// A radius larger than the center's eccentricity is clamped to it with a
/// warning.
pub fn generate_scar(mesh: &Mesh, spec: &ScarSpec) -> Result<(Mesh, ScarMask), ScarError> {
    spec.validate()?;
    if spec.center >= mesh.vertex_count() {
        return Err(ScarError::CenterOutOfRange {
            center: spec.center,
            count: mesh.vertex_count(),
        });
    }
    if !is_watertight(mesh) {
        return Err(ScarError::NotWatertight);
    }

    let adjacency = Adjacency::new(mesh);
    let hops = hop_distances(&adjacency, &[spec.center], None);
    let eccentricity = hops.iter().flatten().copied().max().unwrap_or(0).max(1);
    let radius = if spec.radius > eccentricity {
        log::warn!(
            "scar radius {} exceeds eccentricity {} of vertex {}; clamping",
            spec.radius,
            eccentricity,
            spec.center
        );
        eccentricity
    } else {
        spec.radius
    };

    let normals = mesh.vertex_normals();
    let mut positions = mesh.positions().to_vec();
    let mut displacement = vec![0.0; mesh.vertex_count()];
    for (v, hop) in hops.iter().enumerate() {
        let Some(r) = *hop else { continue };
        if r >= radius {
            continue;
        }
        let depth = spec.max_depth * spec.profile.falloff(r as f64 / radius as f64);
        let n = normals[v];
        if n == [0.0; 3] {
            return Err(ScarError::ZeroNormal(v));
        }
        for a in 0..3 {
            positions[v][a] -= n[a] * depth;
        }
        displacement[v] = depth;
    }
    Ok((mesh.with_positions(positions)?, ScarMask { displacement }))
}

/// Uniform sampling ranges for scar parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScarRanges {
    /// Inclusive hop-radius range.
    pub radius: (usize, usize),
    /// Inclusive depth range in multiples of the mesh's mean edge length.
    pub depth: (f64, f64),
}

impl Default for ScarRanges {
    fn default() -> Self {
        Self {
            radius: (3, 8),
            depth: (0.5, 2.0),
        }
    }
}

impl ScarRanges {
    pub fn validate(&self) -> Result<(), ScarError> {
        if self.radius.0 > self.radius.1 || self.radius.0 == 0 {
            return Err(ScarError::EmptyRange("radius"));
        }
        let (lo, hi) = self.depth;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return Err(ScarError::EmptyRange("depth"));
        }
        Ok(())
    }
}

/// Draws a scar spec for `mesh`: a uniform center vertex, hop radius and
/// depth. The depth range is scaled by the mesh's mean edge length.
pub fn sample_scar_spec<R: Rng + ?Sized>(
    rng: &mut R,
    ranges: &ScarRanges,
    mesh: &Mesh,
) -> Result<ScarSpec, ScarError> {
    ranges.validate()?;
    if mesh.vertex_count() == 0 {
        return Err(ScarError::EmptyRange("center"));
    }
    let center = rng.random_range(0..mesh.vertex_count());
    let radius = rng.random_range(ranges.radius.0..=ranges.radius.1);
    let (lo, hi) = ranges.depth;
    let factor = if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    };
    Ok(ScarSpec {
        center,
        radius,
        max_depth: factor * mesh.mean_edge_length(),
        profile: ScarProfile::Quadratic,
        seed: rng.next_u64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::distance;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(center: usize, radius: usize, depth: f64) -> ScarSpec {
        ScarSpec {
            center,
            radius,
            max_depth: depth,
            profile: ScarProfile::Quadratic,
            seed: 0,
        }
    }

    #[test]
    fn profile_extremes() {
        let head = synth_head(5, 3);
        let (wounded, mask) = generate_scar(&head, &spec(17, 4, 0.1)).unwrap();
        assert_eq!(mask.displacement[17], 0.1);
        assert!((distance(wounded.positions()[17], head.positions()[17]) - 0.1).abs() < 1e-12);

        let adjacency = Adjacency::new(&head);
        let hops = hop_distances(&adjacency, &[17], None);
        for (v, h) in hops.iter().enumerate() {
            let h = h.unwrap();
            if h >= 4 {
                assert_eq!(mask.displacement[v], 0.0);
                assert_eq!(wounded.positions()[v], head.positions()[v]);
            } else {
                let expected = 0.1 * (1.0 - (h as f64 / 4.0).powi(2));
                assert!((mask.displacement[v] - expected).abs() < 1e-15);
            }
        }
        assert!(wounded.same_topology(&head));
    }

    #[test]
    fn scar_is_concave() {
        let head = synth_head(5, 3);
        let (wounded, _) = generate_scar(&head, &spec(100, 5, 0.2)).unwrap();
        assert!(wounded.signed_volume() < head.signed_volume());
    }

    #[test]
    fn scar_is_deterministic() {
        let head = synth_head(9, 2);
        let s = spec(3, 3, 0.05);
        assert_eq!(
            generate_scar(&head, &s).unwrap(),
            generate_scar(&head, &s).unwrap()
        );
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let head = synth_head(9, 1);
        assert!(matches!(
            generate_scar(&head, &spec(500, 3, 0.1)),
            Err(ScarError::CenterOutOfRange { .. })
        ));
        assert!(generate_scar(&head, &spec(0, 0, 0.1)).is_err());
        assert!(generate_scar(&head, &spec(0, 2, -1.0)).is_err());
        let open = Mesh::new(head.positions().to_vec(), head.faces()[1..].to_vec()).unwrap();
        assert!(matches!(
            generate_scar(&open, &spec(0, 2, 0.1)),
            Err(ScarError::NotWatertight)
        ));
    }

    #[test]
    fn oversized_radius_is_clamped() {
        let ico = icosphere(0);
        let (_, mask) = generate_scar(&ico, &spec(0, 50, 1.0)).unwrap();
        // eccentricity 3 on the icosahedron: the antipode stays put
        assert_eq!(mask.affected().len(), 11);
    }

    #[test]
    fn sampling_ranges() {
        let head = synth_head(1, 2);
        let mel = head.mean_edge_length();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let fixed = ScarRanges {
            radius: (4, 4),
            depth: (1.25, 1.25),
        };
        for _ in 0..20 {
            let s = sample_scar_spec(&mut rng, &fixed, &head).unwrap();
            assert_eq!(s.radius, 4);
            assert_eq!(s.max_depth, 1.25 * mel);
        }
        let bad = ScarRanges {
            radius: (5, 4),
            depth: (1.0, 2.0),
        };
        assert!(matches!(
            sample_scar_spec(&mut rng, &bad, &head),
            Err(ScarError::EmptyRange("radius"))
        ));
    }

    #[test]
    fn sampling_is_reproducible_and_bounded() {
        let head = synth_head(1, 2);
        let mel = head.mean_edge_length();
        let ranges = ScarRanges::default();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..10_000)
                .map(|_| sample_scar_spec(&mut rng, &ranges, &head).unwrap())
                .collect::<Vec<_>>()
        };
        let specs = draw(4);
        assert_eq!(specs, draw(4));
        let rmin = specs.iter().map(|s| s.radius).min().unwrap();
        let rmax = specs.iter().map(|s| s.radius).max().unwrap();
        assert_eq!((rmin, rmax), (3, 8));
        for s in &specs {
            assert!(s.max_depth >= 0.5 * mel && s.max_depth <= 2.0 * mel);
            assert!(s.center < head.vertex_count());
        }
    }
}
