//! Finite metric measure spaces: weighted graphs carrying vertex masses and a
//! distance matrix that may or may not be the graph's path metric.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::par;

/// Absolute tolerance used for every distance comparison.
pub const TOL: f64 = 1e-9;

/// Sorted list of vertex indices.
pub type VertexSet = Vec<usize>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub len: f64,
}

/// Dense symmetric `n × n` matrix of distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidSpace(vec![format!(
                    "dist row {i} has {} entries, expected {n}",
                    row.len()
                )]));
            }
            data.extend(row);
        }
        Ok(Self { n, data })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn max_entry(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// Itemized violations of the (pseudo-)metric axioms at tolerance [`TOL`].
    /// With `strict` set, zero off-diagonal entries are also reported.
    pub fn metric_findings(&self, strict: bool) -> Vec<String> {
        let n = self.n;
        let mut out = Vec::new();
        for i in 0..n {
            if self.get(i, i).abs() > TOL {
                out.push(format!("dist diagonal nonzero at {i}"));
            }
            for j in 0..n {
                let d = self.get(i, j);
                if !d.is_finite() || d < -TOL {
                    out.push(format!("dist entry ({i},{j}) not a nonnegative real"));
                }
                if (d - self.get(j, i)).abs() > TOL {
                    if i < j {
                        out.push(format!("dist not symmetric at ({i},{j})"));
                    }
                }
                if strict && i != j && d <= TOL {
                    out.push(format!("dist zero between distinct vertices ({i},{j})"));
                }
            }
        }
        'tri: for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if self.get(i, k) > self.get(i, j) + self.get(j, k) + TOL {
                        out.push(format!("triangle inequality fails at ({i},{j},{k})"));
                        if out.len() > 64 {
                            break 'tri;
                        }
                    }
                }
            }
        }
        out
    }

    /// Distinct values of the matrix, ascending, merged at tolerance [`TOL`].
    pub fn distinct_values(&self) -> Vec<f64> {
        distinct_sorted(self.data.iter().copied())
    }
}

pub fn distinct_sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.filter(|x| x.is_finite()).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let mut out: Vec<f64> = Vec::with_capacity(v.len());
    for x in v {
        match out.last() {
            Some(&last) if x - last <= TOL => {}
            _ => out.push(x),
        }
    }
    out
}

/// Connected vertex subset, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Continuum {
    pub members: VertexSet,
}

/// Edge path given by its vertex sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    vertices: Vec<usize>,
    edges: Vec<usize>,
    length: f64,
}

impl Curve {
    pub fn new(space: &Space, vertices: Vec<usize>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::InvalidCurve("empty vertex sequence".into()));
        }
        let mut edges = Vec::with_capacity(vertices.len().saturating_sub(1));
        let mut length = 0.0;
        for &v in &vertices {
            space.check_vertex(v)?;
        }
        for w in vertices.windows(2) {
            let e = space.edge_between(w[0], w[1]).ok_or_else(|| {
                Error::InvalidCurve(format!(
                    "{} and {} are not adjacent",
                    space.id(w[0]),
                    space.id(w[1])
                ))
            })?;
            length += space.edges[e].len;
            edges.push(e);
        }
        Ok(Self {
            vertices,
            edges,
            length,
        })
    }

    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    /// Edge indices in traversal order.
    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    pub fn length(&self) -> f64 {
        self.length
    }
}

#[derive(Debug, Clone)]
pub struct Space {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    masses: Vec<f64>,
    edges: Vec<Edge>,
    adj: Vec<Vec<(usize, usize)>>,
    dist: DistMatrix,
    path_metric: bool,
}

impl Eq for HeapItemKey {}
#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapItemKey(f64, usize);
impl Ord for HeapItemKey {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .partial_cmp(&self.0)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.1.cmp(&self.1))
    }
}
impl PartialOrd for HeapItemKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn build_adjacency(n: usize, edges: &[Edge]) -> Vec<Vec<(usize, usize)>> {
    let mut adj = vec![Vec::new(); n];
    for (k, e) in edges.iter().enumerate() {
        adj[e.u].push((e.v, k));
        adj[e.v].push((e.u, k));
    }
    for a in &mut adj {
        a.sort_unstable();
    }
    adj
}

fn graph_findings(n: usize, masses: &[f64], edges: &[Edge]) -> Vec<String> {
    let mut out = Vec::new();
    if masses.len() != n {
        out.push(format!("{} masses for {n} vertices", masses.len()));
    }
    for (i, m) in masses.iter().enumerate() {
        if !m.is_finite() || *m < 0.0 {
            out.push(format!("mass of vertex {i} is not a nonnegative real"));
        }
    }
    if n > 0 && masses.iter().sum::<f64>() <= 0.0 {
        out.push("total mass is not positive".into());
    }
    for (k, e) in edges.iter().enumerate() {
        if e.u >= n || e.v >= n {
            out.push(format!("edge {k} references an unknown vertex"));
        } else if e.u == e.v {
            out.push(format!("edge {k} is a loop"));
        }
        if !(e.len.is_finite() && e.len > 0.0) {
            out.push(format!("edge {k} length is not strictly positive"));
        }
    }
    out
}

/// Exact all-pairs shortest-path distances (Dijkstra from every vertex).
pub fn path_metric(n: usize, edges: &[Edge]) -> Result<DistMatrix> {
    let adj = build_adjacency(n, edges);
    let rows = par::map_range(n, |s| dijkstra(&adj, edges, s));
    let mut dist = DistMatrix::zeros(n);
    for (i, row) in rows.into_iter().enumerate() {
        for (j, d) in row.into_iter().enumerate() {
            if !d.is_finite() {
                return Err(Error::Disconnected);
            }
            dist.set(i, j, d);
        }
    }
    // Symmetrize exact ties produced by different summation orders.
    for i in 0..n {
        for j in (i + 1)..n {
            let d = dist.get(i, j).min(dist.get(j, i));
            dist.set(i, j, d);
            dist.set(j, i, d);
        }
    }
    Ok(dist)
}

fn dijkstra(adj: &[Vec<(usize, usize)>], edges: &[Edge], s: usize) -> Vec<f64> {
    let mut d = vec![f64::INFINITY; adj.len()];
    let mut heap = BinaryHeap::new();
    d[s] = 0.0;
    heap.push(HeapItemKey(0.0, s));
    while let Some(HeapItemKey(du, u)) = heap.pop() {
        if du > d[u] {
            continue;
        }
        for &(v, k) in &adj[u] {
            let nd = du + edges[k].len;
            if nd < d[v] {
                d[v] = nd;
                heap.push(HeapItemKey(nd, v));
            }
        }
    }
    d
}

impl Space {
    /// Builds a path-metric space from a weighted graph.
    pub fn from_graph(ids: Vec<String>, masses: Vec<f64>, edges: Vec<Edge>) -> Result<Self> {
        let n = ids.len();
        let findings = graph_findings(n, &masses, &edges);
        if !findings.is_empty() {
            return Err(Error::InvalidSpace(findings));
        }
        let dist = path_metric(n, &edges)?;
        Self::assemble(ids, masses, edges, dist, true)
    }

    /// Builds a space with an explicit distance matrix over the graph.
    pub fn with_dist(
        ids: Vec<String>,
        masses: Vec<f64>,
        edges: Vec<Edge>,
        dist: DistMatrix,
    ) -> Result<Self> {
        let n = ids.len();
        let mut findings = graph_findings(n, &masses, &edges);
        if dist.n() != n {
            findings.push(format!(
                "dist is {}x{}, expected {n}x{n}",
                dist.n(),
                dist.n()
            ));
        } else {
            findings.extend(dist.metric_findings(false));
        }
        if !findings.is_empty() {
            return Err(Error::InvalidSpace(findings));
        }
        if !is_connected(n, &build_adjacency(n, &edges)) {
            return Err(Error::Disconnected);
        }
        Self::assemble(ids, masses, edges, dist, false)
    }

    /// Same vertex set and graph, new distances and masses. Used for pullback
    /// spaces, whose matrix may be a pseudo-metric.
    pub(crate) fn reweighted(&self, dist: DistMatrix, masses: Vec<f64>) -> Self {
        let mut s = self.clone();
        for e in &mut s.edges {
            e.len = dist.get(e.u, e.v);
        }
        s.dist = dist;
        s.masses = masses;
        s.path_metric = false;
        s
    }

    fn assemble(
        ids: Vec<String>,
        masses: Vec<f64>,
        edges: Vec<Edge>,
        dist: DistMatrix,
        path_metric: bool,
    ) -> Result<Self> {
        let n = ids.len();
        let mut index = HashMap::with_capacity(n);
        let mut dup = Vec::new();
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                dup.push(format!("duplicate vertex id `{id}`"));
            }
        }
        if !dup.is_empty() {
            return Err(Error::InvalidSpace(dup));
        }
        let adj = build_adjacency(n, &edges);
        Ok(Self {
            ids,
            index,
            masses,
            edges,
            adj,
            dist,
            path_metric,
        })
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, v: usize) -> &str {
        &self.ids[v]
    }

    pub fn vertex(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownVertex(id.to_string()))
    }

    pub fn check_vertex(&self, v: usize) -> Result<()> {
        if v < self.n() {
            Ok(())
        } else {
            Err(Error::VertexOutOfRange(v))
        }
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mass(&self, v: usize) -> f64 {
        self.masses[v]
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn set_of_mass(&self, set: &[usize]) -> f64 {
        set.iter().map(|&v| self.masses[v]).sum()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Neighbors of `v` as `(neighbor, edge index)` pairs, sorted by neighbor.
    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    /// Shortest edge joining `u` and `v`, if any.
    pub fn edge_between(&self, u: usize, v: usize) -> Option<usize> {
        self.adj[u]
            .iter()
            .filter(|&&(w, _)| w == v)
            .map(|&(_, k)| k)
            .min_by(|&a, &b| {
                self.edges[a]
                    .len
                    .partial_cmp(&self.edges[b].len)
                    .unwrap_or(Ordering::Equal)
            })
    }

    pub fn dist(&self) -> &DistMatrix {
        &self.dist
    }

    #[inline]
    pub fn d(&self, u: usize, v: usize) -> f64 {
        self.dist.get(u, v)
    }

    pub fn is_path_metric(&self) -> bool {
        self.path_metric
    }

    /// True when every edge is a geodesic for the stored metric.
    pub fn edges_are_geodesic(&self) -> bool {
        self.edges
            .iter()
            .all(|e| (self.d(e.u, e.v) - e.len).abs() <= TOL)
    }

    /// All invariant violations, itemized.
    pub fn findings(&self) -> Vec<String> {
        let mut out = graph_findings(self.n(), &self.masses, &self.edges);
        out.extend(self.dist.metric_findings(false));
        if !is_connected(self.n(), &self.adj) {
            out.push("graph is disconnected".into());
        }
        if self.path_metric {
            if let Ok(pm) = path_metric(self.n(), &self.edges) {
                for i in 0..self.n() {
                    for j in 0..self.n() {
                        if (pm.get(i, j) - self.d(i, j)).abs() > TOL {
                            out.push(format!("dist differs from path metric at ({i},{j})"));
                        }
                    }
                }
            }
        }
        out
    }

    /// Open ball `{v : d(center, v) < r}`.
    pub fn ball(&self, center: usize, r: f64) -> Result<VertexSet> {
        self.check_vertex(center)?;
        Ok((0..self.n())
            .filter(|&v| self.d(center, v) < r - TOL)
            .collect())
    }

    /// Closed ball `{v : d(center, v) ≤ r}`.
    pub fn ball_closed(&self, center: usize, r: f64) -> Result<VertexSet> {
        self.check_vertex(center)?;
        Ok((0..self.n())
            .filter(|&v| self.d(center, v) <= r + TOL)
            .collect())
    }

    /// Connected components of the subgraph induced by `set`, each sorted,
    /// ordered by smallest member.
    pub fn components(&self, set: &[usize]) -> Vec<Continuum> {
        let mut mask = vec![false; self.n()];
        for &v in set {
            mask[v] = true;
        }
        self.components_of_mask(&mask)
    }

    pub(crate) fn components_of_mask(&self, mask: &[bool]) -> Vec<Continuum> {
        let labels = self.component_labels(mask);
        let mut comps: Vec<Vec<usize>> = Vec::new();
        for (v, l) in labels.iter().enumerate() {
            if let Some(l) = *l {
                if l >= comps.len() {
                    comps.resize(l + 1, Vec::new());
                }
                comps[l].push(v);
            }
        }
        comps
            .into_iter()
            .map(|members| Continuum { members })
            .collect()
    }

    /// Component label per vertex of the induced subgraph on `mask`; labels are
    /// assigned in order of smallest member.
    pub(crate) fn component_labels(&self, mask: &[bool]) -> Vec<Option<usize>> {
        let n = self.n();
        let mut label = vec![None; n];
        let mut next = 0;
        let mut queue = VecDeque::new();
        for s in 0..n {
            if !mask[s] || label[s].is_some() {
                continue;
            }
            label[s] = Some(next);
            queue.push_back(s);
            while let Some(u) = queue.pop_front() {
                for &(w, _) in &self.adj[u] {
                    if mask[w] && label[w].is_none() {
                        label[w] = Some(next);
                        queue.push_back(w);
                    }
                }
            }
            next += 1;
        }
        label
    }

    /// Component of the induced subgraph on `mask` containing `x`.
    pub(crate) fn component_containing(&self, mask: &[bool], x: usize) -> VertexSet {
        if !mask[x] {
            return Vec::new();
        }
        let mut seen = vec![false; self.n()];
        seen[x] = true;
        let mut queue = VecDeque::from([x]);
        let mut out = Vec::new();
        while let Some(u) = queue.pop_front() {
            out.push(u);
            for &(w, _) in &self.adj[u] {
                if mask[w] && !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        out.sort_unstable();
        out
    }

    pub fn is_connected_set(&self, set: &[usize]) -> bool {
        !set.is_empty() && self.components(set).len() == 1
    }

    pub fn continuum(&self, mut members: VertexSet) -> Result<Continuum> {
        members.sort_unstable();
        members.dedup();
        if !self.is_connected_set(&members) {
            return Err(Error::InvalidArgument(
                "continuum must be a nonempty connected vertex set".into(),
            ));
        }
        Ok(Continuum { members })
    }

    /// Maximal pairwise distance within `set`.
    pub fn diameter(&self, set: &[usize]) -> Result<f64> {
        if set.is_empty() {
            return Err(Error::EmptySet);
        }
        let mut m: f64 = 0.0;
        for (i, &a) in set.iter().enumerate() {
            for &b in &set[i + 1..] {
                m = m.max(self.d(a, b));
            }
        }
        Ok(m)
    }

    /// Candidate radii: distinct pairwise distances.
    pub fn candidate_radii(&self) -> Vec<f64> {
        self.dist.distinct_values()
    }

    /// Distinct distances from `x`, ascending (starts with 0).
    pub fn radii_from(&self, x: usize) -> Vec<f64> {
        distinct_sorted(self.dist.row(x).iter().copied())
    }

    /// Doubling constant: the largest `r/2`-separated subset of any ball
    /// `B(x, r)`. Radii are swept as `r → t⁺` for every distance `t` from the
    /// center, the only places where the maximum can change.
    pub fn doubling_constant(&self) -> DoublingConstant {
        let n = self.n();
        let exact = n <= EXACT_DOUBLING_LIMIT;
        let per_center = par::map_range(n, |x| {
            let mut best_exact = 0usize;
            let mut best_greedy = 0usize;
            for t in self.radii_from(x) {
                let members: Vec<usize> = (0..n).filter(|&v| self.d(x, v) <= t + TOL).collect();
                // r slightly above t: separation must exceed t/2.
                let separated = |a: usize, b: usize| self.d(a, b) > t / 2.0 + TOL;
                best_greedy = best_greedy.max(greedy_separated(&members, &separated));
                if exact {
                    best_exact = best_exact.max(max_separated(&members, &separated));
                }
            }
            (best_exact, best_greedy)
        });
        let greedy_lower = per_center.iter().map(|p| p.1).max().unwrap_or(0);
        let value = if exact {
            per_center.iter().map(|p| p.0).max().unwrap_or(0)
        } else {
            greedy_lower
        };
        DoublingConstant {
            value,
            exact,
            greedy_lower,
        }
    }
}

/// Spaces up to this size get an exact doubling constant.
pub const EXACT_DOUBLING_LIMIT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct DoublingConstant {
    pub value: usize,
    pub exact: bool,
    pub greedy_lower: usize,
}

fn greedy_separated(members: &[usize], separated: &impl Fn(usize, usize) -> bool) -> usize {
    let mut chosen: Vec<usize> = Vec::new();
    for &v in members {
        if chosen.iter().all(|&c| separated(c, v)) {
            chosen.push(v);
        }
    }
    chosen.len()
}

/// Maximum independent set of the conflict graph, branch and bound on bitmasks.
fn max_separated(members: &[usize], separated: &impl Fn(usize, usize) -> bool) -> usize {
    let k = members.len();
    debug_assert!(k <= 64);
    let mut compat = vec![0u64; k];
    for i in 0..k {
        for j in 0..k {
            if i != j && separated(members[i], members[j]) {
                compat[i] |= 1 << j;
            }
        }
    }
    fn rec(cand: u64, size: usize, best: &mut usize, compat: &[u64]) {
        if cand == 0 {
            *best = (*best).max(size);
            return;
        }
        if size + cand.count_ones() as usize <= *best {
            return;
        }
        let i = cand.trailing_zeros() as usize;
        let rest = cand & !(1 << i);
        rec(rest & compat[i], size + 1, best, compat);
        rec(rest, size, best, compat);
    }
    let all = if k == 64 { u64::MAX } else { (1u64 << k) - 1 };
    let mut best = 0;
    rec(all, 0, &mut best, &compat);
    best
}

pub(crate) fn is_connected(n: usize, adj: &[Vec<(usize, usize)>]) -> bool {
    if n == 0 {
        return true;
    }
    let mut seen = vec![false; n];
    seen[0] = true;
    let mut stack = vec![0];
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &(w, _) in &adj[u] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                stack.push(w);
            }
        }
    }
    count == n
}

/// Smallest threshold `D` from `candidates` (ascending) such that `x1` and `x2`
/// are connected inside `{v : g(v, x1) ≤ D and g(v, x2) ≤ D}`. Together with the
/// connecting path found at that threshold. This is the shared bottleneck
/// search behind the pullback bracket and the bounded turning bracket.
pub(crate) fn threshold_connect(
    space: &Space,
    x1: usize,
    x2: usize,
    g: &impl Fn(usize, usize) -> f64,
    candidates: &[f64],
) -> Option<(f64, Vec<usize>)> {
    let base = g(x1, x2).max(g(x2, x1));
    let start = candidates.partition_point(|&c| c < base - TOL);
    let connected = |d: f64| -> Option<Vec<usize>> {
        let ok = |v: usize| g(v, x1) <= d + TOL && g(v, x2) <= d + TOL;
        bfs_path(space, x1, x2, &ok)
    };
    let (mut lo, mut hi) = (start, candidates.len());
    // invariant: answer index in [lo, hi]; hi == len means "none yet"
    let mut found: Option<Vec<usize>> = None;
    while lo < hi {
        let mid = (lo + hi) / 2;
        match connected(candidates[mid]) {
            Some(p) => {
                hi = mid;
                found = Some(p);
            }
            None => lo = mid + 1,
        }
    }
    if hi == candidates.len() {
        return None;
    }
    let path = match found {
        Some(p) => p,
        None => connected(candidates[hi])?,
    };
    Some((candidates[hi], path))
}

pub(crate) fn bfs_path(
    space: &Space,
    from: usize,
    to: usize,
    allowed: &impl Fn(usize) -> bool,
) -> Option<Vec<usize>> {
    if !allowed(from) || !allowed(to) {
        return None;
    }
    let n = space.n();
    let mut prev = vec![usize::MAX; n];
    prev[from] = from;
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        if u == to {
            break;
        }
        for &(w, _) in space.neighbors(u) {
            if prev[w] == usize::MAX && allowed(w) {
                prev[w] = u;
                queue.push_back(w);
            }
        }
    }
    if prev[to] == usize::MAX {
        return None;
    }
    let mut path = vec![to];
    let mut cur = to;
    while cur != from {
        cur = prev[cur];
        path.push(cur);
    }
    path.reverse();
    Some(path)
}

/// Simple edge paths (as vertex sequences) with `1..=max_edges` edges, each
/// listed once in the orientation starting at its smaller endpoint. Stops
/// after `budget` paths; the flag reports whether the enumeration finished.
pub fn simple_paths(space: &Space, max_edges: usize, budget: usize) -> (Vec<Vec<usize>>, bool) {
    fn rec(
        space: &Space,
        path: &mut Vec<usize>,
        on: &mut [bool],
        max_edges: usize,
        budget: usize,
        out: &mut Vec<Vec<usize>>,
    ) -> bool {
        let u = *path.last().expect("nonempty path");
        for &(w, _) in space.neighbors(u) {
            if on[w] {
                continue;
            }
            path.push(w);
            if path[0] < w {
                if out.len() >= budget {
                    path.pop();
                    return false;
                }
                out.push(path.clone());
            }
            if path.len() <= max_edges {
                on[w] = true;
                let done = rec(space, path, on, max_edges, budget, out);
                on[w] = false;
                if !done {
                    path.pop();
                    return false;
                }
            }
            path.pop();
        }
        true
    }
    let mut out = Vec::new();
    let mut on = vec![false; space.n()];
    for s in 0..space.n() {
        let mut path = vec![s];
        on[s] = true;
        let done = rec(space, &mut path, &mut on, max_edges, budget, &mut out);
        on[s] = false;
        if !done {
            return (out, false);
        }
    }
    (out, true)
}

/// Bracket `(lower, upper)` on the bounded turning constant of the stored
/// metric over the graph's continua.
pub fn bounded_turning_constant(space: &Space) -> Result<(f64, f64)> {
    if !is_connected(space.n(), &space.adj) {
        return Err(Error::Disconnected);
    }
    if space.is_path_metric() {
        return Ok((1.0, 1.0));
    }
    let n = space.n();
    let candidates = space.candidate_radii();
    let g = |a: usize, b: usize| space.d(a, b);
    let rows = par::map_range(n, |i| {
        let mut lo: f64 = 1.0;
        let mut hi: f64 = 1.0;
        for j in (i + 1)..n {
            let d = space.d(i, j);
            if d <= TOL {
                continue;
            }
            if let Some((thr, path)) = threshold_connect(space, i, j, &g, &candidates) {
                let witness = space.diameter(&path).unwrap_or(0.0);
                lo = lo.max(thr / d);
                hi = hi.max(witness.min(2.0 * thr) / d);
            }
        }
        (lo, hi)
    });
    let lo = rows.iter().map(|r| r.0).fold(1.0, f64::max);
    let hi = rows.iter().map(|r| r.1).fold(1.0, f64::max);
    Ok((lo, hi.max(lo)))
}
