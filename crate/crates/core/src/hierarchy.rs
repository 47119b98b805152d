//! Multi-resolution vertex levels and the neighborhoods that connect them.
//!
//! Level 0 is the full mesh. Each coarser level is a subset of the previous
//! one, picked by greedy covering on the mesh edge graph. Between two levels
//! there are two fine-to-coarse topologies: a pooling partition (every fine
//! vertex belongs to its nearest coarse vertex) and an overlapping
//! convolution neighborhood (every fine vertex within the covering radius).
//! The coarse-to-fine topologies are their transposes.
//!
//! All distances are hop counts on the level-0 graph and every tie is broken
//! by the smallest vertex index, so construction is fully deterministic.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{connected_components, hop_distances, is_watertight, Adjacency, Mesh};

#[derive(Debug, Error, PartialEq)]
pub enum HierarchyError {
    #[error(
        "invalid level ratios {0:?}: need 1.0 first, then strictly decreasing values in (0, 1]"
    )]
    InvalidRatios(Vec<f64>),
    #[error("level {level} would have {count} vertices; at least 4 are required")]
    TooCoarse { level: usize, count: usize },
    #[error("level {level} would not shrink ({count} vertices)")]
    NotDecreasing { level: usize, count: usize },
    #[error("mesh must be watertight")]
    NotWatertight,
    #[error("mesh has {0} connected components; one is required")]
    Disconnected(usize),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
}

/// Per-output-vertex neighborhoods `N(i)` into an input level, stored as
/// compressed rows sorted by input index, plus the number of kernel bases `M`
/// used by convolutions over it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvTopology {
    input_count: usize,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    basis_count: usize,
}

impl ConvTopology {
    pub fn new(
        input_count: usize,
        neighborhoods: Vec<Vec<usize>>,
        basis_count: usize,
    ) -> Result<Self, HierarchyError> {
        if basis_count == 0 {
            return Err(HierarchyError::InvalidTopology(
                "basis count must be >= 1".into(),
            ));
        }
        let mut offsets = Vec::with_capacity(neighborhoods.len() + 1);
        offsets.push(0);
        let mut neighbors = Vec::new();
        for (i, mut hood) in neighborhoods.into_iter().enumerate() {
            hood.sort_unstable();
            hood.dedup();
            if hood.is_empty() {
                return Err(HierarchyError::InvalidTopology(format!(
                    "neighborhood {i} is empty"
                )));
            }
            if let Some(&bad) = hood.iter().find(|&&j| j >= input_count) {
                return Err(HierarchyError::InvalidTopology(format!(
                    "neighborhood {i} references input {bad} of {input_count}"
                )));
            }
            neighbors.extend(hood);
            offsets.push(neighbors.len());
        }
        Ok(Self {
            input_count,
            offsets,
            neighbors,
            basis_count,
        })
    }

    /// Every output vertex reads exactly its own input vertex.
    pub fn identity(count: usize) -> Self {
        Self {
            input_count: count,
            offsets: (0..=count).collect(),
            neighbors: (0..count).collect(),
            basis_count: 1,
        }
    }

    pub fn input_count(&self) -> usize {
        self.input_count
    }

    pub fn output_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn basis_count(&self) -> usize {
        self.basis_count
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Index range of output vertex `i`'s edges in the flat edge order.
    pub fn edge_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn mean_neighborhood_size(&self) -> f64 {
        self.edge_count() as f64 / self.output_count().max(1) as f64
    }

    /// True when every input vertex appears in at least one neighborhood.
    pub fn covers_input(&self) -> bool {
        let mut seen = vec![false; self.input_count];
        for &j in &self.neighbors {
            seen[j] = true;
        }
        seen.into_iter().all(|s| s)
    }

    /// True when every input vertex appears in exactly one neighborhood.
    pub fn partitions_input(&self) -> bool {
        let mut seen = vec![0u32; self.input_count];
        for &j in &self.neighbors {
            seen[j] += 1;
        }
        seen.into_iter().all(|s| s == 1)
    }

    /// Exact transpose: `j ∈ N'(i)` iff `i ∈ N(j)`. The basis count carries
    /// over unchanged. Input vertices that no neighborhood reads would become
    /// empty neighborhoods, which is rejected.
    pub fn transpose(&self) -> Result<Self, HierarchyError> {
        let mut rows = vec![Vec::new(); self.input_count];
        for i in 0..self.output_count() {
            for &j in self.neighbors(i) {
                rows[j].push(i);
            }
        }
        Self::new(self.output_count(), rows, self.basis_count)
    }

    /// Structural check for topologies that did not come from [`Self::new`],
    /// such as deserialized ones.
    pub fn validate(&self) -> Result<(), HierarchyError> {
        let bad = |m: String| Err(HierarchyError::InvalidTopology(m));
        if self.basis_count == 0 {
            return bad("basis count must be >= 1".into());
        }
        if self.offsets.first() != Some(&0) || self.offsets.last() != Some(&self.neighbors.len()) {
            return bad("offsets do not span the neighbor list".into());
        }
        for (i, w) in self.offsets.windows(2).enumerate() {
            if w[1] <= w[0] || w[1] > self.neighbors.len() {
                return bad(format!("neighborhood {i} is empty or malformed"));
            }
            let hood = &self.neighbors[w[0]..w[1]];
            if hood.windows(2).any(|p| p[1] <= p[0]) {
                return bad(format!("neighborhood {i} is not strictly ascending"));
            }
            if hood[hood.len() - 1] >= self.input_count {
                return bad(format!("neighborhood {i} references a missing input"));
            }
        }
        Ok(())
    }

    pub fn with_basis_count(mut self, basis_count: usize) -> Self {
        self.basis_count = basis_count.max(1);
        self
    }
}

/// `round(mean E_i)` clamped into `[lo, hi]`.
pub fn basis_count_for(mean_size: f64, clamp: (usize, usize)) -> usize {
    (mean_size.round() as usize).clamp(clamp.0, clamp.1)
}

/// Topologies between level `l` (fine) and level `l + 1` (coarse).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelTransition {
    /// Coarse vertex (local index) owning each fine vertex.
    pub parent: Vec<usize>,
    /// Fine to coarse partition.
    pub pool: ConvTopology,
    /// Fine to coarse overlapping neighborhoods.
    pub conv: ConvTopology,
    /// Coarse to fine, transpose of `pool`.
    pub unpool: ConvTopology,
    /// Coarse to fine, transpose of `conv`.
    pub trans_conv: ConvTopology,
    /// Hop radius of the convolution neighborhoods.
    pub radius: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshHierarchy {
    /// Sorted mesh vertex indices per level; level 0 is every vertex.
    pub levels: Vec<Vec<usize>>,
    pub transitions: Vec<LevelTransition>,
}

impl MeshHierarchy {
    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(Vec::len).collect()
    }

    pub fn vertex_count(&self) -> usize {
        self.levels[0].len()
    }

    /// Checks that every topology is well formed and sized for its levels.
    pub fn validate(&self) -> Result<(), HierarchyError> {
        let bad = |m: String| Err(HierarchyError::InvalidTopology(m));
        if self.levels.is_empty() || self.transitions.len() + 1 != self.levels.len() {
            return bad("level and transition counts disagree".into());
        }
        for (l, tr) in self.transitions.iter().enumerate() {
            let (fine, coarse) = (self.levels[l].len(), self.levels[l + 1].len());
            for (topo, inputs, outputs) in [
                (&tr.pool, fine, coarse),
                (&tr.conv, fine, coarse),
                (&tr.unpool, coarse, fine),
                (&tr.trans_conv, coarse, fine),
            ] {
                topo.validate()?;
                if topo.input_count() != inputs || topo.output_count() != outputs {
                    return bad(format!("transition {l} has mis-sized topologies"));
                }
            }
            if tr.parent.len() != fine || tr.parent.iter().any(|&p| p >= coarse) {
                return bad(format!("transition {l} has a bad parent map"));
            }
        }
        Ok(())
    }
}

pub const DEFAULT_BASIS_CLAMP: (usize, usize) = (4, 17);

pub fn build_hierarchy(mesh: &Mesh, ratios: &[f64]) -> Result<MeshHierarchy, HierarchyError> {
    build_hierarchy_with(mesh, ratios, DEFAULT_BASIS_CLAMP)
}

pub fn build_hierarchy_with(
    mesh: &Mesh,
    ratios: &[f64],
    basis_clamp: (usize, usize),
) -> Result<MeshHierarchy, HierarchyError> {
    let valid = ratios.first() == Some(&1.0)
        && ratios.windows(2).all(|w| w[1] < w[0])
        && ratios.iter().all(|&r| r > 0.0 && r <= 1.0);
    if !valid {
        return Err(HierarchyError::InvalidRatios(ratios.to_vec()));
    }
    if basis_clamp.0 == 0 || basis_clamp.0 > basis_clamp.1 {
        return Err(HierarchyError::InvalidTopology(format!(
            "bad basis clamp {basis_clamp:?}"
        )));
    }
    if !is_watertight(mesh) {
        return Err(HierarchyError::NotWatertight);
    }
    let (_, components) = connected_components(mesh);
    if components != 1 {
        return Err(HierarchyError::Disconnected(components));
    }

    let n = mesh.vertex_count();
    let adjacency = Adjacency::new(mesh);
    let mut levels = vec![(0..n).collect::<Vec<usize>>()];
    for (l, &ratio) in ratios.iter().enumerate().skip(1) {
        let target = (n as f64 * ratio).floor() as usize;
        if target < 4 {
            return Err(HierarchyError::TooCoarse {
                level: l,
                count: target,
            });
        }
        let previous = levels.last().unwrap();
        if target >= previous.len() {
            return Err(HierarchyError::NotDecreasing {
                level: l,
                count: target,
            });
        }
        levels.push(select_level(&adjacency, previous, target));
    }

    let transitions = levels
        .windows(2)
        .map(|pair| build_transition(&adjacency, &pair[0], &pair[1], basis_clamp))
        .collect::<Result<_, _>>()?;
    Ok(MeshHierarchy {
        levels,
        transitions,
    })
}

/// Greedy covering: scan candidates in index order, keep each uncovered one
/// and cover everything within `radius` hops of it. The radius grows until
/// at most `target` vertices are kept; the remainder is topped up with the
/// candidate farthest from the kept set.
fn select_level(adjacency: &Adjacency, candidates: &[usize], target: usize) -> Vec<usize> {
    let n = adjacency.vertex_count();
    let mut radius = 1;
    let mut selected = loop {
        let mut covered = vec![false; n];
        let mut picked = Vec::new();
        for &c in candidates {
            if covered[c] {
                continue;
            }
            picked.push(c);
            for (v, d) in hop_distances(adjacency, &[c], Some(radius))
                .iter()
                .enumerate()
            {
                if d.is_some() {
                    covered[v] = true;
                }
            }
        }
        if picked.len() <= target {
            break picked;
        }
        radius += 1;
    };

    let mut dist: Vec<usize> = hop_distances(adjacency, &selected, None)
        .into_iter()
        .map(|d| d.unwrap_or(usize::MAX))
        .collect();
    while selected.len() < target {
        let far = candidates
            .iter()
            .copied()
            .filter(|&c| dist[c] > 0)
            .fold(None, |best: Option<usize>, c| match best {
                Some(b) if dist[b] >= dist[c] => Some(b),
                _ => Some(c),
            })
            .expect("fewer candidates than target");
        selected.push(far);
        for (v, d) in hop_distances(adjacency, &[far], None)
            .into_iter()
            .enumerate()
        {
            if let Some(d) = d {
                dist[v] = dist[v].min(d);
            }
        }
    }
    selected.sort_unstable();
    selected
}

/// Nearest source per vertex by hop distance, ties to the smallest source
/// index. Returns (distance, owning source) for every reachable vertex.
fn nearest_source(adjacency: &Adjacency, sources: &[usize]) -> Vec<Option<(usize, usize)>> {
    let mut best: Vec<Option<(usize, usize)>> = vec![None; adjacency.vertex_count()];
    let mut queue = VecDeque::new();
    for &s in sources {
        best[s] = Some((0, s));
        queue.push_back(s);
    }
    while let Some(v) = queue.pop_front() {
        let (d, owner) = best[v].unwrap();
        for &w in adjacency.neighbors(v) {
            match best[w] {
                None => {
                    best[w] = Some((d + 1, owner));
                    queue.push_back(w);
                }
                Some((dw, ow)) if dw == d + 1 && owner < ow => best[w] = Some((dw, owner)),
                _ => {}
            }
        }
    }
    best
}

fn build_transition(
    adjacency: &Adjacency,
    fine: &[usize],
    coarse: &[usize],
    basis_clamp: (usize, usize),
) -> Result<LevelTransition, HierarchyError> {
    let n = adjacency.vertex_count();
    let mut fine_local = vec![usize::MAX; n];
    for (i, &v) in fine.iter().enumerate() {
        fine_local[v] = i;
    }
    let mut coarse_local = vec![usize::MAX; n];
    for (i, &v) in coarse.iter().enumerate() {
        coarse_local[v] = i;
    }

    let nearest = nearest_source(adjacency, coarse);
    let mut parent = Vec::with_capacity(fine.len());
    let mut pool_rows = vec![Vec::new(); coarse.len()];
    let mut radius = 1;
    for (fi, &v) in fine.iter().enumerate() {
        let (d, owner) = nearest[v].expect("connected mesh");
        let ci = coarse_local[owner];
        parent.push(ci);
        pool_rows[ci].push(fi);
        radius = radius.max(d);
    }
    let pool = ConvTopology::new(fine.len(), pool_rows, 1)?;

    let conv_rows = coarse
        .iter()
        .map(|&c| {
            hop_distances(adjacency, &[c], Some(radius))
                .iter()
                .enumerate()
                .filter(|(v, d)| d.is_some() && fine_local[*v] != usize::MAX)
                .map(|(v, _)| fine_local[v])
                .collect()
        })
        .collect();
    let conv = ConvTopology::new(fine.len(), conv_rows, 1)?;
    let conv_m = basis_count_for(conv.mean_neighborhood_size(), basis_clamp);
    let conv = conv.with_basis_count(conv_m);
    let pool_m = basis_count_for(pool.mean_neighborhood_size(), basis_clamp);
    let pool = pool.with_basis_count(pool_m);

    let unpool = pool.transpose()?;
    let trans_conv = conv.transpose()?;
    let up_m = basis_count_for(trans_conv.mean_neighborhood_size(), basis_clamp);
    let trans_conv = trans_conv.with_basis_count(up_m);

    Ok(LevelTransition {
        parent,
        pool,
        conv,
        unpool,
        trans_conv,
        radius,
    })
}
