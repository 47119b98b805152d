use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{Mesh, MeshError, MeshResult};

/// Faces incident to every undirected edge, keyed by `(min, max)` vertex pair.
#[derive(Debug, Clone)]
pub struct EdgeFaces {
    map: BTreeMap<(usize, usize), Vec<usize>>,
}

impl EdgeFaces {
    pub fn new(mesh: &Mesh) -> Self {
        let mut map: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (fi, &[a, b, c]) in mesh.faces().iter().enumerate() {
            for (u, v) in [(a, b), (b, c), (c, a)] {
                map.entry(edge_key(u, v)).or_default().push(fi);
            }
        }
        Self { map }
    }

    pub fn faces(&self, a: usize, b: usize) -> &[usize] {
        self.map
            .get(&edge_key(a, b))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn edge_count(&self) -> usize {
        self.map.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &[usize])> {
        self.map.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    /// First edge with more than two incident faces, if any.
    pub fn check_manifold(&self) -> MeshResult<()> {
        match self.map.iter().find(|(_, f)| f.len() > 2) {
            Some((&(a, b), f)) => Err(MeshError::NonManifoldEdge(a, b, f.len())),
            None => Ok(()),
        }
    }
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Sorted undirected edge list.
pub fn unique_edges(mesh: &Mesh) -> Vec<(usize, usize)> {
    let mut edges: Vec<_> = mesh
        .faces()
        .iter()
        .flat_map(|&[a, b, c]| [edge_key(a, b), edge_key(b, c), edge_key(c, a)])
        .collect();
    edges.sort_unstable();
    edges.dedup();
    edges
}

/// Vertex adjacency of the edge graph in compressed rows, each row sorted.
#[derive(Debug, Clone)]
pub struct Adjacency {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl Adjacency {
    pub fn new(mesh: &Mesh) -> Self {
        let n = mesh.vertex_count();
        let edges = unique_edges(mesh);
        let mut degree = vec![0usize; n];
        for &(a, b) in &edges {
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..n].to_vec();
        let mut neighbors = vec![0; offsets[n]];
        for &(a, b) in &edges {
            neighbors[fill[a]] = b;
            fill[a] += 1;
            neighbors[fill[b]] = a;
            fill[b] += 1;
        }
        for v in 0..n {
            neighbors[offsets[v]..offsets[v + 1]].sort_unstable();
        }
        Self { offsets, neighbors }
    }

    pub fn vertex_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }
}

/// Breadth-first hop distances from a set of sources; `None` for unreachable
/// vertices or those beyond `max_hops`.
pub fn hop_distances(
    adjacency: &Adjacency,
    sources: &[usize],
    max_hops: Option<usize>,
) -> Vec<Option<usize>> {
    let mut dist = vec![None; adjacency.vertex_count()];
    let mut queue = VecDeque::new();
    for &s in sources {
        if dist[s].is_none() {
            dist[s] = Some(0);
            queue.push_back(s);
        }
    }
    while let Some(v) = queue.pop_front() {
        let d = dist[v].unwrap();
        if max_hops.is_some_and(|m| d >= m) {
            continue;
        }
        for &w in adjacency.neighbors(v) {
            if dist[w].is_none() {
                dist[w] = Some(d + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

/// All vertices within `k` hops of `center` along mesh edges.
pub fn k_ring(mesh: &Mesh, center: usize, k: usize) -> MeshResult<BTreeSet<usize>> {
    if center >= mesh.vertex_count() {
        return Err(MeshError::VertexOutOfRange {
            index: center,
            count: mesh.vertex_count(),
        });
    }
    let adjacency = Adjacency::new(mesh);
    Ok(hop_distances(&adjacency, &[center], Some(k))
        .into_iter()
        .enumerate()
        .filter_map(|(v, d)| d.map(|_| v))
        .collect())
}

/// Closed vertex cycle along a hole rim, in the winding direction of the
/// faces that own its edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryLoop {
    vertices: Vec<usize>,
}

impl BoundaryLoop {
    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Directed rim edges `(a, b)` as they appear in their owning face.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }
}

/// Edges with exactly one incident face, grouped into closed cycles. Loops are
/// ordered by their smallest vertex and each starts at that vertex.
pub fn boundary_loops(mesh: &Mesh) -> MeshResult<Vec<BoundaryLoop>> {
    let edge_faces = EdgeFaces::new(mesh);
    edge_faces.check_manifold()?;

    let mut next: BTreeMap<usize, usize> = BTreeMap::new();
    let mut has_incoming = BTreeSet::new();
    for &[a, b, c] in mesh.faces() {
        for (u, v) in [(a, b), (b, c), (c, a)] {
            if edge_faces.faces(u, v).len() == 1 {
                if next.insert(u, v).is_some() {
                    return Err(MeshError::NonSimpleLoop(u));
                }
                if !has_incoming.insert(v) {
                    return Err(MeshError::NonSimpleLoop(v));
                }
            }
        }
    }

    let mut visited = BTreeSet::new();
    let mut loops = Vec::new();
    for &start in next.keys() {
        if visited.contains(&start) {
            continue;
        }
        let mut vertices = vec![start];
        visited.insert(start);
        let mut current = start;
        loop {
            let Some(&to) = next.get(&current) else {
                return Err(MeshError::NonSimpleLoop(current));
            };
            if to == start {
                break;
            }
            if !visited.insert(to) {
                return Err(MeshError::NonSimpleLoop(to));
            }
            vertices.push(to);
            current = to;
        }
        loops.push(BoundaryLoop { vertices });
    }
    Ok(loops)
}

/// Every edge has exactly two incident faces. A mesh without faces is not
/// considered watertight.
pub fn is_watertight(mesh: &Mesh) -> bool {
    let edge_faces = EdgeFaces::new(mesh);
    mesh.face_count() > 0 && edge_faces.iter().all(|(_, f)| f.len() == 2)
}

/// V − E + F, counting every vertex including unreferenced ones.
pub fn euler_characteristic(mesh: &Mesh) -> i64 {
    mesh.vertex_count() as i64 - unique_edges(mesh).len() as i64 + mesh.face_count() as i64
}

/// Component label per vertex (connectivity through faces). Labels are
/// numbered in order of each component's smallest vertex index.
pub fn connected_components(mesh: &Mesh) -> (Vec<usize>, usize) {
    let n = mesh.vertex_count();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut v: usize) -> usize {
        while parent[v] != v {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        v
    }
    for &[a, b, c] in mesh.faces() {
        for (u, v) in [(a, b), (b, c)] {
            let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
            if ru != rv {
                parent[ru.max(rv)] = ru.min(rv);
            }
        }
    }
    let mut labels = vec![usize::MAX; n];
    let mut root_label = BTreeMap::new();
    for v in 0..n {
        let r = find(&mut parent, v);
        let next = root_label.len();
        labels[v] = *root_label.entry(r).or_insert(next);
    }
    (labels, root_label.len())
}

/// Keeps the component with the most vertices; ties go to the component
/// containing the smallest vertex index. Returns the new mesh and the
/// old-to-new vertex map.
pub fn keep_largest_component(mesh: &Mesh) -> MeshResult<(Mesh, Vec<Option<usize>>)> {
    if mesh.vertex_count() == 0 {
        return Err(MeshError::Empty);
    }
    let (labels, count) = connected_components(mesh);
    let mut sizes = vec![0usize; count];
    for &l in &labels {
        sizes[l] += 1;
    }
    // labels are ordered by smallest member, so the first maximum wins ties
    let keep = sizes
        .iter()
        .enumerate()
        .fold(0, |best, (l, &s)| if s > sizes[best] { l } else { best });

    let mut map = vec![None; mesh.vertex_count()];
    let mut positions = Vec::new();
    for (v, &l) in labels.iter().enumerate() {
        if l == keep {
            map[v] = Some(positions.len());
            positions.push(mesh.positions()[v]);
        }
    }
    let faces = mesh
        .faces()
        .iter()
        .filter(|f| labels[f[0]] == keep)
        .map(|f| f.map(|v| map[v].unwrap()))
        .collect();
    let attributes = mesh
        .attributes()
        .iter()
        .map(|(name, values)| {
            let kept = values
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == keep)
                .map(|(x, _)| *x)
                .collect();
            (name.clone(), kept)
        })
        .collect();
    Ok((Mesh::with_attributes(positions, faces, attributes)?, map))
}
