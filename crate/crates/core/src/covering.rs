//! Branched coverings between finite spaces, modeled as surjective,
//! edge-compatible vertex maps.

use serde::Serialize;

use crate::certificate::{Certificate, Witness};
use crate::error::{Error, Result};
use crate::par;
use crate::space::{Continuum, Space, VertexSet, TOL};

#[derive(Debug, Clone)]
pub struct VertexMap {
    source: Space,
    target: Space,
    assign: Vec<usize>,
    fibers: Vec<VertexSet>,
}

/// Everything wrong with a candidate assignment, itemized.
pub fn map_findings(source: &Space, target: &Space, assign: &[Option<usize>]) -> Vec<String> {
    let mut out = Vec::new();
    if assign.len() != source.n() {
        out.push(format!(
            "assignment covers {} vertices, source has {}",
            assign.len(),
            source.n()
        ));
        return out;
    }
    for (x, y) in assign.iter().enumerate() {
        match y {
            None => out.push(format!(
                "not total: source vertex `{}` unassigned",
                source.id(x)
            )),
            Some(y) if *y >= target.n() => out.push(format!(
                "source vertex `{}` maps outside the target",
                source.id(x)
            )),
            _ => {}
        }
    }
    let mut hit = vec![false; target.n()];
    for y in assign.iter().flatten() {
        if *y < target.n() {
            hit[*y] = true;
        }
    }
    let missing: Vec<&str> = (0..target.n())
        .filter(|&y| !hit[y])
        .map(|y| target.id(y))
        .collect();
    if !missing.is_empty() {
        out.push(format!(
            "not surjective: missing targets [{}]",
            missing.join(", ")
        ));
    }
    for e in source.edges() {
        if let (Some(a), Some(b)) = (assign[e.u], assign[e.v]) {
            if a < target.n() && b < target.n() && a != b && target.edge_between(a, b).is_none() {
                out.push(format!(
                    "edge ({}, {}) maps to non-adjacent ({}, {})",
                    source.id(e.u),
                    source.id(e.v),
                    target.id(a),
                    target.id(b)
                ));
            }
        }
    }
    out
}

impl VertexMap {
    pub fn new(source: Space, target: Space, assign: Vec<usize>) -> Result<Self> {
        let opt: Vec<Option<usize>> = assign.iter().map(|&y| Some(y)).collect();
        let findings = map_findings(&source, &target, &opt);
        if !findings.is_empty() {
            return Err(Error::InvalidMap(findings));
        }
        let mut fibers = vec![Vec::new(); target.n()];
        for (x, &y) in assign.iter().enumerate() {
            fibers[y].push(x);
        }
        Ok(Self {
            source,
            target,
            assign,
            fibers,
        })
    }

    /// Builds a map from `(source id, target id)` pairs.
    pub fn from_pairs(source: Space, target: Space, pairs: &[(String, String)]) -> Result<Self> {
        let mut assign: Vec<Option<usize>> = vec![None; source.n()];
        let mut findings = Vec::new();
        for (a, b) in pairs {
            let x = match source.vertex(a) {
                Ok(x) => x,
                Err(_) => {
                    findings.push(format!("unknown source vertex `{a}`"));
                    continue;
                }
            };
            let y = match target.vertex(b) {
                Ok(y) => y,
                Err(_) => {
                    findings.push(format!("unknown target vertex `{b}`"));
                    continue;
                }
            };
            if assign[x].is_some_and(|old| old != y) {
                findings.push(format!("source vertex `{a}` assigned twice"));
            }
            assign[x] = Some(y);
        }
        findings.extend(map_findings(&source, &target, &assign));
        if !findings.is_empty() {
            return Err(Error::InvalidMap(findings));
        }
        Self::new(source, target, assign.into_iter().flatten().collect())
    }

    pub fn source(&self) -> &Space {
        &self.source
    }

    pub fn target(&self) -> &Space {
        &self.target
    }

    #[inline]
    pub fn apply(&self, x: usize) -> usize {
        self.assign[x]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assign
    }

    pub fn fiber(&self, y: usize) -> &[usize] {
        &self.fibers[y]
    }

    /// Target distance between images, `d_Y(f a, f b)`.
    #[inline]
    pub fn image_dist(&self, a: usize, b: usize) -> f64 {
        self.target.d(self.assign[a], self.assign[b])
    }

    /// `N(y, f, A)`.
    pub fn multiplicity(&self, y: usize, set: &[usize]) -> usize {
        set.iter().filter(|&&x| self.assign[x] == y).count()
    }

    /// `N(y, f, A)` for every target vertex.
    pub fn multiplicities(&self, set: &[usize]) -> Vec<usize> {
        let mut out = vec![0; self.target.n()];
        for &x in set {
            out[self.assign[x]] += 1;
        }
        out
    }

    /// `N(f, A)`.
    pub fn max_multiplicity(&self, set: &[usize]) -> usize {
        self.multiplicities(set).into_iter().max().unwrap_or(0)
    }

    /// Multiplicity over the whole source for every target vertex.
    pub fn fiber_sizes(&self) -> Vec<usize> {
        self.fibers.iter().map(Vec::len).collect()
    }

    pub fn all_source(&self) -> VertexSet {
        (0..self.source.n()).collect()
    }

    fn preimage_mask(&self, center: usize, within: impl Fn(f64) -> bool) -> Vec<bool> {
        let row = self.target.dist().row(center);
        self.assign.iter().map(|&y| within(row[y])).collect()
    }

    /// `U(x, f, r)`: the component of `x` in the preimage of the open ball
    /// `B(f(x), r)`.
    pub fn u_component(&self, x: usize, r: f64) -> Result<Continuum> {
        self.source.check_vertex(x)?;
        if r <= 0.0 {
            return Err(Error::InvalidArgument("radius must be positive".into()));
        }
        let mask = self.preimage_mask(self.assign[x], |d| d < r - TOL);
        Ok(Continuum {
            members: self.source.component_containing(&mask, x),
        })
    }

    /// Component of `x` in the preimage of the closed ball `B̄(f(x), t)`; this
    /// is `U(x, f, r)` for every `r` just above `t`.
    pub fn u_component_closed(&self, x: usize, t: f64) -> VertexSet {
        let mask = self.preimage_mask(self.assign[x], |d| d <= t + TOL);
        self.source.component_containing(&mask, x)
    }

    /// Closed star of `x`: the vertex and its graph neighbors.
    pub fn star(&self, x: usize) -> VertexSet {
        let mut s: Vec<usize> = self.source.neighbors(x).iter().map(|&(w, _)| w).collect();
        s.push(x);
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Local index `i(x, f)`. Every neighborhood of a vertex contains its
    /// closed star and the multiplicity only grows with the neighborhood, so
    /// the minimum over the radius sweep is attained by the star itself.
    pub fn local_index(&self, x: usize) -> usize {
        self.max_multiplicity(&self.star(x)).max(1)
    }

    pub fn branch_set(&self) -> VertexSet {
        let idx = par::map_range(self.source.n(), |x| self.local_index(x));
        (0..self.source.n()).filter(|&x| idx[x] > 1).collect()
    }

    /// Checks `f(U(x, f, r)) = B(f(x), r)`.
    pub fn openness_certificate(&self, x: usize, r: f64) -> Result<Certificate> {
        let u = self.u_component(x, r)?;
        let ball = self.target.ball(self.assign[x], r)?;
        let mut image: Vec<usize> = u.members.iter().map(|&v| self.assign[v]).collect();
        image.sort_unstable();
        image.dedup();
        let mut cert = Certificate::new("openness");
        if image != ball {
            let missing: Vec<String> = ball
                .iter()
                .filter(|y| image.binary_search(y).is_err())
                .map(|&y| self.target.id(y).to_string())
                .collect();
            cert.fail(Witness::Set { vertices: missing });
        }
        Ok(cert)
    }

    /// Openness at every vertex and every radius: `U(x, f, r)` changes only
    /// when `r` crosses a target distance from `f(x)`, so those distances and
    /// one radius past the largest are enough.
    pub fn openness_scan(&self) -> Certificate {
        let failures = par::map_range(self.source.n(), |x| {
            let mut radii: Vec<f64> = self
                .target
                .radii_from(self.assign[x])
                .into_iter()
                .filter(|&t| t > TOL)
                .collect();
            radii.push(radii.last().copied().unwrap_or(0.0) + 1.0);
            radii
                .into_iter()
                .map(|r| (r, self.openness_certificate(x, r).expect("valid vertex")))
                .find(|(_, c)| !c.pass)
        });
        let mut cert = Certificate::new("openness");
        if let Some((x, (r, c))) = failures
            .into_iter()
            .enumerate()
            .find_map(|(x, f)| f.map(|f| (x, f)))
        {
            cert.fail(Witness::Vertex {
                vertex: self.source.id(x).into(),
            });
            let missing = match c.witness {
                Some(Witness::Set { vertices }) => vertices.join(", "),
                _ => String::new(),
            };
            cert.note(format!("f(U) misses [{missing}] at radius {r}"));
        }
        cert
    }

    /// Checks properties (2), (3), (4), (8) for the fiber over `z` with the
    /// closed ball of radius `t`.
    fn properties_at(&self, z: usize, t: f64) -> PropertyRecord {
        let fiber = &self.fibers[z];
        let mask = self.preimage_mask(z, |d| d <= t + TOL);
        let labels = self.source.component_labels(&mask);
        let ncomp = labels.iter().flatten().max().map_or(0, |m| m + 1);
        let mut comp_of_fiber: Vec<usize> = fiber.iter().filter_map(|&x| labels[x]).collect();
        let covered = {
            let mut seen = vec![false; ncomp];
            for &c in &comp_of_fiber {
                seen[c] = true;
            }
            seen.iter().all(|&s| s)
        };
        comp_of_fiber.sort_unstable();
        let distinct = comp_of_fiber.windows(2).all(|w| w[0] != w[1]);
        let disjoint_union = covered && distinct;

        let ball: Vec<usize> = (0..self.target.n())
            .filter(|&y| self.target.d(z, y) <= t + TOL)
            .collect();
        // N(y', f, U(x')) for every fiber point x' and ball point y'.
        let per_u: Vec<Vec<usize>> = fiber
            .iter()
            .map(|&x| {
                let lx = labels[x];
                let mut cnt = vec![0usize; self.target.n()];
                for (v, l) in labels.iter().enumerate() {
                    if l.is_some() && *l == lx {
                        cnt[self.assign[v]] += 1;
                    }
                }
                cnt
            })
            .collect();
        let additivity = ball.iter().all(|&y| {
            let total = self.fibers[y].len();
            let sum: usize = per_u.iter().map(|c| c[y]).sum();
            total == sum
        });
        let surjective = per_u.iter().all(|c| ball.iter().all(|&y| c[y] > 0))
            && per_u
                .iter()
                .all(|c| (0..self.target.n()).all(|y| c[y] == 0 || ball.binary_search(&y).is_ok()));
        // Components at radius t are unions of components at smaller radii,
        // so nesting-or-disjointness is a check on the labels of U at t = 0.
        let mask0 = self.preimage_mask(z, |d| d <= TOL);
        let labels0 = self.source.component_labels(&mask0);
        let nesting = fiber.iter().all(|&a| {
            fiber.iter().all(|&b| {
                let small: Vec<usize> = (0..labels0.len())
                    .filter(|&v| labels0[v].is_some() && labels0[v] == labels0[a])
                    .collect();
                let inside = small.iter().all(|&v| labels[v] == labels[b]);
                let outside = small.iter().all(|&v| labels[v] != labels[b]);
                inside || outside
            })
        });
        // Informational: f injective on U ∩ D_N, N the top multiplicity over the ball.
        let top = ball
            .iter()
            .map(|&y| self.fibers[y].len())
            .max()
            .unwrap_or(0);
        let injective_on_top = per_u.iter().all(|c| {
            ball.iter()
                .all(|&y| self.fibers[y].len() != top || c[y] <= 1)
        });
        PropertyRecord {
            disjoint_union,
            additivity,
            surjective,
            nesting,
            injective_on_top_level: injective_on_top,
        }
    }

    /// `M_z`: the smaller of a sixth of the minimal pairwise fiber distance and
    /// the distance from the fiber to the complement of the whole source.
    pub fn fiber_separation_radius(&self, z: usize) -> f64 {
        let fiber = &self.fibers[z];
        let mut m = f64::INFINITY;
        for (i, &a) in fiber.iter().enumerate() {
            for &b in &fiber[i + 1..] {
                m = m.min(self.source.d(a, b));
            }
        }
        m / 6.0
    }

    /// Normal radius at the target vertex `z`.
    pub fn normal_radius_at(&self, z: usize) -> NormalRadius {
        let radii = self.target.radii_from(z);
        let mut last_ok: Option<f64> = None;
        let mut first_failure = None;
        for &t in &radii {
            let rec = self.properties_at(z, t);
            if !rec.holds() {
                first_failure = Some(FailedRadius {
                    radius: t,
                    properties: rec,
                });
                break;
            }
            last_ok = Some(t);
        }
        let positive: Vec<f64> = radii.iter().copied().filter(|&t| t > TOL).collect();
        let (radius, degenerate) = match last_ok {
            Some(t) if t > TOL => (t, false),
            _ => (positive.first().copied().unwrap_or(0.0), true),
        };
        let properties = if degenerate {
            self.properties_at(z, radius)
        } else {
            PropertyRecord {
                disjoint_union: true,
                additivity: true,
                surjective: true,
                nesting: true,
                injective_on_top_level: self.properties_at(z, radius).injective_on_top_level,
            }
        };
        NormalRadius {
            target: z,
            radius,
            degenerate,
            properties,
            first_failure,
            m_z: self.fiber_separation_radius(z),
        }
    }

    pub fn normal_radius(&self, x: usize) -> NormalRadius {
        self.normal_radius_at(self.assign[x])
    }

    pub fn normal_radius_table(&self) -> NormalRadiusTable {
        NormalRadiusTable {
            entries: par::map_range(self.target.n(), |z| self.normal_radius_at(z)),
        }
    }

    /// Splits `D_n = {x ∈ D : N(f(x), f, D) = n}` into `n` disjoint parts, each
    /// mapped bijectively onto `f(D_n)`.
    pub fn decompose_fibers(&self, set: &[usize], n: usize) -> Result<FiberDecomposition> {
        let mut d: Vec<usize> = set.to_vec();
        d.sort_unstable();
        d.dedup();
        for &x in &d {
            self.source.check_vertex(x)?;
        }
        let top = self.max_multiplicity(&d);
        if n < 1 || n > top {
            return Err(Error::InvalidArgument(format!("n = {n} outside 1..={top}")));
        }
        let mult = self.multiplicities(&d);
        let mut in_dn = vec![false; self.source.n()];
        let mut level: Vec<usize> = Vec::new();
        for &x in &d {
            if mult[self.assign[x]] == n {
                in_dn[x] = true;
                level.push(x);
            }
        }
        // Cover of D_n by injectivity neighborhoods: the star of x inside D_n
        // when f is injective there, otherwise {x}.
        let cover: Vec<Vec<usize>> = level
            .iter()
            .map(|&x| {
                let s: Vec<usize> = self.star(x).into_iter().filter(|&v| in_dn[v]).collect();
                if self.max_multiplicity(&s) <= 1 {
                    s
                } else {
                    vec![x]
                }
            })
            .collect();
        let mut used = vec![false; self.source.n()];
        let mut parts = Vec::with_capacity(n);
        for _ in 0..n {
            let mut taken = vec![false; self.target.n()];
            let mut part = Vec::new();
            for v_i in &cover {
                // V_i minus earlier parts and minus preimages of what this part
                // already covers.
                for &v in v_i {
                    if !used[v] && !taken[self.assign[v]] {
                        used[v] = true;
                        taken[self.assign[v]] = true;
                        part.push(v);
                    }
                }
            }
            part.sort_unstable();
            parts.push(part);
        }
        Ok(FiberDecomposition {
            level,
            parts,
            relatively_normal: self.is_relatively_normal(&d),
        })
    }

    /// `f(∂D) ⊆ ∂f(D)` with graph boundaries (members having a neighbor
    /// outside the set).
    pub fn is_relatively_normal(&self, set: &[usize]) -> bool {
        let mut in_d = vec![false; self.source.n()];
        for &x in set {
            in_d[x] = true;
        }
        let mut in_fd = vec![false; self.target.n()];
        for &x in set {
            in_fd[self.assign[x]] = true;
        }
        set.iter()
            .filter(|&&x| self.source.neighbors(x).iter().any(|&(w, _)| !in_d[w]))
            .all(|&x| {
                let y = self.assign[x];
                self.target.neighbors(y).iter().any(|&(w, _)| !in_fd[w])
            })
    }

    /// 5r-covering: a pairwise disjoint subfamily of `{U(x_i, f, r_i)}` whose
    /// 5-inflations cover the union of the family.
    pub fn greedy_cover(
        &self,
        family: &[(usize, f64)],
        table: Option<&NormalRadiusTable>,
    ) -> Result<GreedyCover> {
        let mut problems = Vec::new();
        for (i, &(x, r)) in family.iter().enumerate() {
            if x >= self.source.n() {
                problems.push(format!("element {i}: vertex index {x} out of range"));
                continue;
            }
            if !(r > 0.0) {
                problems.push(format!("element {i}: radius must be positive"));
                continue;
            }
            if let Some(tab) = table {
                let bound = tab.entries[self.assign[x]].radius;
                if !(5.0 * r < bound) {
                    problems.push(format!(
                        "element {i}: 5r = {} not below normal radius {bound}",
                        5.0 * r
                    ));
                }
            }
        }
        if !problems.is_empty() {
            return Err(Error::Precondition(problems.join("; ")));
        }
        let sets: Vec<VertexSet> = family
            .iter()
            .map(|&(x, r)| self.u_component(x, r).map(|c| c.members))
            .collect::<Result<_>>()?;
        let mut order: Vec<usize> = (0..family.len()).collect();
        order.sort_by(|&a, &b| family[b].1.total_cmp(&family[a].1).then(a.cmp(&b)));
        let mut occupied = vec![false; self.source.n()];
        let mut selected = Vec::new();
        for &i in &order {
            if sets[i].iter().all(|&v| !occupied[v]) {
                for &v in &sets[i] {
                    occupied[v] = true;
                }
                selected.push(i);
            }
        }
        selected.sort_unstable();
        let mut inflated = vec![false; self.source.n()];
        for &i in &selected {
            let (x, r) = family[i];
            for v in self.u_component(x, 5.0 * r)?.members {
                inflated[v] = true;
            }
        }
        let covers = sets.iter().flatten().all(|&v| inflated[v]);
        let mut seen = vec![false; self.source.n()];
        let mut disjoint = true;
        for &i in &selected {
            for &v in &sets[i] {
                disjoint &= !seen[v];
                seen[v] = true;
            }
        }
        Ok(GreedyCover {
            selected,
            covers,
            disjoint,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PropertyRecord {
    /// (2): the preimage of the ball is the disjoint union of the `U(x')`.
    pub disjoint_union: bool,
    /// (3): multiplicities add up over the fiber.
    pub additivity: bool,
    /// (4): each `U(x')` maps onto the ball.
    pub surjective: bool,
    /// (8): nesting-or-disjointness across radii.
    pub nesting: bool,
    /// Informational only: `f` injective on `U ∩ D_N` for the top level `N`.
    pub injective_on_top_level: bool,
}

impl PropertyRecord {
    pub fn holds(&self) -> bool {
        self.disjoint_union && self.additivity && self.surjective && self.nesting
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FailedRadius {
    pub radius: f64,
    pub properties: PropertyRecord,
}

/// Normal radius of a target vertex. `radius` is the largest candidate for
/// which every closed ball up to it passes; open balls of radius `≤ radius`
/// are therefore admissible too.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalRadius {
    pub target: usize,
    pub radius: f64,
    pub degenerate: bool,
    pub properties: PropertyRecord,
    pub first_failure: Option<FailedRadius>,
    pub m_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalRadiusTable {
    pub entries: Vec<NormalRadius>,
}

impl NormalRadiusTable {
    pub fn radius(&self, z: usize) -> f64 {
        self.entries[z].radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiberDecomposition {
    /// `D_n`.
    pub level: VertexSet,
    pub parts: Vec<VertexSet>,
    pub relatively_normal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreedyCover {
    /// Indices into the input family.
    pub selected: Vec<usize>,
    pub covers: bool,
    pub disjoint: bool,
}
