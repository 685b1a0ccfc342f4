//! The pullback metric `f*d_Y(x1, x2) = inf diam f(α)` over continua `α`
//! joining `x1` and `x2`, its factor-2 bracket, and the factorization
//! `f = π ∘ g` through the pullback space.

use std::collections::BinaryHeap;

use serde::Serialize;

use crate::certificate::{Certificate, Witness};
use crate::covering::VertexMap;
use crate::error::{Error, Result};
use crate::par;
use crate::space::{simple_paths, threshold_connect, DistMatrix, Space, VertexSet, TOL};

/// Default source-size cap for the exact pullback metric.
pub const DEFAULT_EXACT_CAP: usize = 14;

/// Cap on the number of maximal cliques enumerated per threshold.
const CLIQUE_BUDGET: usize = 2_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PullbackBracket {
    #[serde(skip)]
    pub lower: DistMatrix,
    #[serde(skip)]
    pub upper: DistMatrix,
    pub exact: bool,
    pub oracle_used: bool,
}

/// `d̂(x1, x2)`: the smallest target distance `D` such that `x1`, `x2` are
/// connected inside `{v : d_Y(f v, f x1) ≤ D, d_Y(f v, f x2) ≤ D}`. Always
/// `d̂ ≤ f*d_Y ≤ 2·d̂`.
pub fn bracket(f: &VertexMap) -> Result<PullbackBracket> {
    let src = f.source();
    let n = src.n();
    let candidates = f.target().candidate_radii();
    let g = |v: usize, x: usize| f.image_dist(v, x);
    let rows = par::map_range(n, |i| {
        let mut row = vec![0.0; n];
        for (j, slot) in row.iter_mut().enumerate().skip(i + 1) {
            *slot = threshold_connect(src, i, j, &g, &candidates)
                .map(|(d, _)| d)
                .unwrap_or(f64::INFINITY);
        }
        row
    });
    let mut lower = DistMatrix::zeros(n);
    for (i, row) in rows.iter().enumerate() {
        for j in (i + 1)..n {
            if !row[j].is_finite() {
                return Err(Error::Disconnected);
            }
            lower.set(i, j, row[j]);
            lower.set(j, i, row[j]);
        }
    }
    let upper = lower.scaled(2.0);
    Ok(PullbackBracket {
        lower,
        upper,
        exact: false,
        oracle_used: false,
    })
}

/// Bracket collapsed onto the exact matrix.
pub fn exact_bracket(f: &VertexMap, cap: usize) -> Result<PullbackBracket> {
    let d = exact(f, cap)?;
    Ok(PullbackBracket {
        lower: d.clone(),
        upper: d,
        exact: true,
        oracle_used: true,
    })
}

/// Exact pullback metric of the target metric.
pub fn exact(f: &VertexMap, cap: usize) -> Result<DistMatrix> {
    exact_with(f, f.target().dist(), cap)
}

/// Exact pullback of an arbitrary metric `dy` on the target vertices.
///
/// `diam f(A) ≤ D` for a connected `A` exactly when `f(A)` is a clique of the
/// graph `{d_Y ≤ D}`, i.e. lies in a maximal clique `C`, and then `A` lies in
/// one component of `f⁻¹(C)`. Sweeping `D` upward over the distinct target
/// distances and merging those components assigns every pair its optimum.
pub fn exact_with(f: &VertexMap, dy: &DistMatrix, cap: usize) -> Result<DistMatrix> {
    let src = f.source();
    let n = src.n();
    if n > cap {
        return Err(Error::TooLarge {
            what: "exact pullback metric",
            size: n,
            cap,
            hint: "raise --exact-cap or use the pullback bracket",
        });
    }
    let m = f.target().n();
    let mut out = DistMatrix::zeros(n);
    let mut assigned = vec![false; n * n];
    for i in 0..n {
        assigned[i * n + i] = true;
    }
    let mut remaining = n * n - n;
    for d in dy.distinct_values() {
        if remaining == 0 {
            break;
        }
        let adj: Vec<Vec<bool>> = (0..m)
            .map(|a| (0..m).map(|b| a != b && dy.get(a, b) <= d + TOL).collect())
            .collect();
        let cliques = maximal_cliques(&adj)?;
        for clique in cliques {
            let mut in_c = vec![false; m];
            for &y in &clique {
                in_c[y] = true;
            }
            let mask: Vec<bool> = (0..n).map(|x| in_c[f.apply(x)]).collect();
            for comp in src.components_of_mask(&mask) {
                let mem = &comp.members;
                for (k, &a) in mem.iter().enumerate() {
                    for &b in &mem[k + 1..] {
                        if !assigned[a * n + b] {
                            assigned[a * n + b] = true;
                            assigned[b * n + a] = true;
                            remaining -= 2;
                            out.set(a, b, d);
                            out.set(b, a, d);
                        }
                    }
                }
            }
        }
    }
    if remaining > 0 {
        return Err(Error::Disconnected);
    }
    Ok(out)
}

/// Maximal cliques (Bron–Kerbosch with pivoting), each sorted.
fn maximal_cliques(adj: &[Vec<bool>]) -> Result<Vec<Vec<usize>>> {
    fn rec(
        adj: &[Vec<bool>],
        r: &mut Vec<usize>,
        p: Vec<usize>,
        mut x: Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) -> bool {
        if p.is_empty() && x.is_empty() {
            let mut c = r.clone();
            c.sort_unstable();
            out.push(c);
            return out.len() <= CLIQUE_BUDGET;
        }
        let pivot = p
            .iter()
            .chain(x.iter())
            .copied()
            .max_by_key(|&u| p.iter().filter(|&&v| adj[u][v]).count())
            .expect("p or x nonempty");
        let mut p_rest = p.clone();
        for v in p.into_iter().filter(|&v| !adj[pivot][v]) {
            let np: Vec<usize> = p_rest.iter().copied().filter(|&w| adj[v][w]).collect();
            let nx: Vec<usize> = x.iter().copied().filter(|&w| adj[v][w]).collect();
            r.push(v);
            let ok = rec(adj, r, np, nx, out);
            r.pop();
            if !ok {
                return false;
            }
            p_rest.retain(|&w| w != v);
            x.push(v);
        }
        true
    }
    let mut out = Vec::new();
    let all: Vec<usize> = (0..adj.len()).collect();
    if !rec(adj, &mut Vec::new(), all, Vec::new(), &mut out) {
        return Err(Error::TooLarge {
            what: "maximal clique enumeration",
            size: out.len(),
            cap: CLIQUE_BUDGET,
            hint: "use the pullback bracket",
        });
    }
    Ok(out)
}

/// Components of the subgraph formed by edges whose endpoints share an image.
/// Distinct vertices in one component are at pullback distance zero; all
/// components are singletons exactly when `f` is discrete on the graph.
pub fn constant_components(f: &VertexMap) -> Vec<VertexSet> {
    let n = f.source().n();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut a: usize) -> usize {
        while p[a] != a {
            p[a] = p[p[a]];
            a = p[a];
        }
        a
    }
    for e in f.source().edges() {
        if f.apply(e.u) == f.apply(e.v) {
            let (a, b) = (find(&mut parent, e.u), find(&mut parent, e.v));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n];
    for v in 0..n {
        let r = find(&mut parent, v);
        groups[r].push(v);
    }
    groups.into_iter().filter(|g| !g.is_empty()).collect()
}

pub fn is_discrete(f: &VertexMap) -> bool {
    constant_components(f).iter().all(|g| g.len() == 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricChoice {
    Lower,
    Exact,
}

/// `f = π ∘ g` with `g` the identity onto the pullback space.
#[derive(Debug, Clone)]
pub struct Factorization {
    pub pullback_space: Space,
    pub lift: Vec<usize>,
    pub projection: VertexMap,
    pub exact: bool,
}

pub fn factorize(f: &VertexMap, choice: MetricChoice, exact_cap: usize) -> Result<Factorization> {
    let (dist, exact) = match choice {
        MetricChoice::Exact => (exact(f, exact_cap)?, true),
        MetricChoice::Lower => (bracket(f)?.lower, false),
    };
    let n = f.source().n();
    for i in 0..n {
        for j in (i + 1)..n {
            if dist.get(i, j) <= TOL {
                return Err(Error::NotDiscrete(format!(
                    "pullback distance between `{}` and `{}` is zero",
                    f.source().id(i),
                    f.source().id(j)
                )));
            }
        }
    }
    let masses = (0..n).map(|x| f.target().mass(f.apply(x))).collect();
    let pullback_space = f.source().reweighted(dist, masses);
    let projection = VertexMap::new(
        pullback_space.clone(),
        f.target().clone(),
        f.assignment().to_vec(),
    )?;
    Ok(Factorization {
        pullback_space,
        lift: (0..n).collect(),
        projection,
        exact,
    })
}

impl Factorization {
    /// `π ∘ g` as an assignment.
    pub fn composed(&self) -> Vec<usize> {
        self.lift
            .iter()
            .map(|&z| self.projection.apply(z))
            .collect()
    }
}

/// Path sample used by the curve-based checks: every simple path with at most
/// `max_edges` edges, capped at `budget`.
pub fn curve_sample(space: &Space, max_edges: usize, budget: usize) -> Vec<Vec<usize>> {
    simple_paths(space, max_edges, budget).0
}

fn set_diam(n_fn: impl Fn(usize, usize) -> f64, set: &[usize]) -> f64 {
    let mut m: f64 = 0.0;
    for (i, &a) in set.iter().enumerate() {
        for &b in &set[i + 1..] {
            m = m.max(n_fn(a, b));
        }
    }
    m
}

/// Checks that `π` is 1-Lipschitz, the inclusions
/// `B(z, r) ⊂ U(z, π, r) ⊂ B(z, 2r)`, and `diam π(α) = diam α` on the path
/// sample. With a non-exact metric the first ball is shrunk to `B(z, r/2)`
/// and the path identity is relaxed to the factor-2 bracket.
pub fn verify_projection(fact: &Factorization, curves: &[Vec<usize>]) -> Certificate {
    let pi = &fact.projection;
    let x = &fact.pullback_space;
    let n = x.n();
    let mut cert = Certificate::new("projection");
    if !fact.exact {
        cert.flag("approximate");
    }
    // (i)
    let mut lip: f64 = 0.0;
    'lip: for a in 0..n {
        for b in (a + 1)..n {
            let dy = pi.image_dist(a, b);
            let dz = x.d(a, b);
            if dz > 0.0 {
                lip = lip.max(dy / dz);
            }
            if dy > dz + TOL {
                cert.fail(Witness::Pair {
                    a: x.id(a).into(),
                    b: x.id(b).into(),
                });
                cert.note("projection is not 1-Lipschitz");
                break 'lip;
            }
        }
    }
    // (ii)
    let inner_scale = if fact.exact { 1.0 } else { 0.5 };
    let failures: Vec<Option<(usize, f64)>> = par::map_range(n, |z| {
        let mut radii: Vec<f64> = x.radii_from(z);
        radii.extend(pi.target().radii_from(pi.apply(z)));
        radii.extend(x.radii_from(z).iter().map(|t| t / 2.0));
        radii.extend(x.radii_from(z).iter().map(|t| t / inner_scale));
        let radii = crate::space::distinct_sorted(radii.into_iter());
        for &t in radii.iter().filter(|&&t| t > TOL) {
            // open balls at r = t
            let u = pi.u_component(z, t).map(|c| c.members).unwrap_or_default();
            let inner = x.ball(z, inner_scale * t).unwrap_or_default();
            let outer = x.ball(z, 2.0 * t).unwrap_or_default();
            if !subset(&inner, &u) || !subset(&u, &outer) {
                return Some((z, t));
            }
            // closed balls: r just above t
            let u = pi.u_component_closed(z, t);
            let inner = x.ball_closed(z, inner_scale * t).unwrap_or_default();
            let outer = x.ball_closed(z, 2.0 * t).unwrap_or_default();
            if !subset(&inner, &u) || !subset(&u, &outer) {
                return Some((z, t));
            }
        }
        None
    });
    if let Some((z, t)) = failures.into_iter().flatten().next() {
        cert.fail(Witness::Vertex {
            vertex: x.id(z).into(),
        });
        cert.note(format!("ball inclusion chain fails at radius {t}"));
    }
    // (iii)
    let slack = if fact.exact { 1.0 } else { 2.0 };
    for c in curves {
        let dz = set_diam(|a, b| x.d(a, b), c);
        let dy = set_diam(|a, b| pi.image_dist(a, b), c);
        let ok = if fact.exact {
            (dz - dy).abs() <= TOL
        } else {
            dy <= slack * dz + TOL && dz <= dy + TOL
        };
        if !ok {
            cert.fail(Witness::Curve {
                vertices: c.iter().map(|&v| x.id(v).to_string()).collect(),
            });
            cert.note("diameter identity fails on a path");
            break;
        }
    }
    cert.constant = Some(lip.max(if n > 1 { 0.0 } else { 1.0 }));
    cert
}

fn subset(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|v| b.binary_search(v).is_ok())
}

/// Length metric of `dist` over the graph of `space`: shortest paths where a
/// step along an edge `(u, v)` costs `dist(u, v)`.
pub fn length_metric(dist: &DistMatrix, space: &Space) -> DistMatrix {
    let n = space.n();
    let rows = par::map_range(n, |s| {
        let mut d = vec![f64::INFINITY; n];
        d[s] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(Item(0.0, s));
        while let Some(Item(du, u)) = heap.pop() {
            if du > d[u] {
                continue;
            }
            for &(w, _) in space.neighbors(u) {
                let nd = du + dist.get(u, w);
                if nd < d[w] {
                    d[w] = nd;
                    heap.push(Item(nd, w));
                }
            }
        }
        d
    });
    DistMatrix::from_rows(rows).expect("square")
}

#[derive(PartialEq)]
struct Item(f64, usize);
impl Eq for Item {}
impl Ord for Item {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        o.0.total_cmp(&self.0).then_with(|| o.1.cmp(&self.1))
    }
}
impl PartialOrd for Item {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}

/// The chain `π*d ≤ π*l_d ≤ l_{π*d} ≤ (2N−1)·π*l_d` on all pairs, with `d` the
/// target metric, `l_d` its length metric over the target graph and `N` the
/// maximal multiplicity.
pub fn length_chain_check(f: &VertexMap, cap: usize) -> Result<Certificate> {
    let pd = exact(f, cap)?;
    let ld = length_metric(f.target().dist(), f.target());
    let pld = exact_with(f, &ld, cap)?;
    let lpd = length_metric(&pd, f.source());
    let big_n = f.max_multiplicity(&f.all_source()) as f64;
    let mut cert = Certificate::new("length_chain");
    let n = f.source().n();
    let mut worst: f64 = 1.0;
    for a in 0..n {
        for b in (a + 1)..n {
            let (x1, x2, x3) = (pd.get(a, b), pld.get(a, b), lpd.get(a, b));
            if x2 > 0.0 {
                worst = worst.max(x3 / x2);
            }
            if x1 > x2 + TOL || x2 > x3 + TOL || x3 > (2.0 * big_n - 1.0) * x2 + TOL {
                cert.fail(Witness::Pair {
                    a: f.source().id(a).into(),
                    b: f.source().id(b).into(),
                });
            }
        }
    }
    cert.constant = Some(worst);
    cert.note(format!("bound 2N-1 = {}", 2.0 * big_n - 1.0));
    Ok(cert)
}

/// Chain length of the image of an edge path in the target metric.
/// Target edges need not be geodesic, so their stored lengths are not used.
pub fn image_length(f: &VertexMap, path: &[usize]) -> f64 {
    path.windows(2).map(|w| f.image_dist(w[0], w[1])).sum()
}

/// Source length of an edge path.
pub fn path_length(space: &Space, path: &[usize]) -> f64 {
    path.windows(2)
        .map(|w| {
            space
                .edge_between(w[0], w[1])
                .map_or(space.d(w[0], w[1]), |e| space.edges()[e].len)
        })
        .sum()
}

/// Two-sided distortion `max(r, 1/r)` of a ratio `r = image/source`.
pub(crate) fn two_sided(image: f64, source: f64) -> f64 {
    if source <= 0.0 {
        return 1.0;
    }
    if image <= 0.0 {
        return f64::INFINITY;
    }
    let r = image / source;
    r.max(1.0 / r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Distortions {
    pub bld: f64,
    pub bdd: f64,
}

fn worst_distortions(
    lengths: impl Fn(&[usize]) -> (f64, f64),
    diams: impl Fn(&[usize]) -> (f64, f64),
    curves: &[Vec<usize>],
) -> (Distortions, usize, usize) {
    let mut out = Distortions { bld: 1.0, bdd: 1.0 };
    let (mut wl, mut wd) = (0, 0);
    for (k, c) in curves.iter().enumerate() {
        let (s, i) = lengths(c);
        let l = two_sided(i, s);
        if l > out.bld {
            out.bld = l;
            wl = k;
        }
        let (s, i) = diams(c);
        let d = two_sided(i, s);
        if d > out.bdd {
            out.bdd = d;
            wd = k;
        }
    }
    (out, wl, wd)
}

/// Worst BLD and BDD ratios of `f` and of the lift `g` over the path sample.
/// Under the exact metric they must agree to `1e-9`; under the bracket to a
/// factor 2.
pub fn bld_bdd_transfer_check(
    f: &VertexMap,
    fact: &Factorization,
    curves: &[Vec<usize>],
    l: f64,
) -> Certificate {
    let src = f.source();
    let pz = &fact.pullback_space;
    let (df, wl, _) = worst_distortions(
        |c| (path_length(src, c), image_length(f, c)),
        |c| {
            (
                set_diam(|a, b| src.d(a, b), c),
                set_diam(|a, b| f.image_dist(a, b), c),
            )
        },
        curves,
    );
    let (dg, _, _) = worst_distortions(
        |c| {
            let lz: f64 = c.windows(2).map(|w| pz.d(w[0], w[1])).sum();
            (path_length(src, c), lz)
        },
        |c| {
            (
                set_diam(|a, b| src.d(a, b), c),
                set_diam(|a, b| pz.d(a, b), c),
            )
        },
        curves,
    );
    let mut cert = Certificate::new("bld_bdd_transfer").with_constant(df.bld);
    let agree = |a: f64, b: f64| {
        if fact.exact {
            (a - b).abs() <= 1e-9 * a.max(1.0) || (a.is_infinite() && b.is_infinite())
        } else {
            a <= 2.0 * b + 1e-9 && b <= 2.0 * a + 1e-9
        }
    };
    if !fact.exact {
        cert.flag("approximate");
    }
    if !agree(df.bld, dg.bld) || !agree(df.bdd, dg.bdd) {
        cert.fail(Witness::Note {
            text: format!(
                "f: bld {} bdd {}; g: bld {} bdd {}",
                df.bld, df.bdd, dg.bld, dg.bdd
            ),
        });
    }
    if df.bld > l + 1e-9 && !curves.is_empty() {
        cert.fail(Witness::Curve {
            vertices: curves[wl].iter().map(|&v| src.id(v).to_string()).collect(),
        });
    }
    cert.note(format!("g: bld {} bdd {}", dg.bld, dg.bdd));
    cert.note(format!("f: bdd {}", df.bdd));
    cert
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators;

    /// Independent oracle: minimum image diameter over simple paths.
    fn oracle(f: &VertexMap) -> DistMatrix {
        let n = f.source().n();
        let (paths, done) = simple_paths(f.source(), n, usize::MAX);
        assert!(done);
        let mut d = DistMatrix::from_fn(n, |i, j| if i == j { 0.0 } else { f64::INFINITY });
        for p in paths {
            let diam = set_diam(|a, b| f.image_dist(a, b), &p);
            let (a, b) = (p[0], *p.last().unwrap());
            if diam < d.get(a, b) {
                d.set(a, b, diam);
                d.set(b, a, diam);
            }
        }
        d
    }

    #[test]
    fn identity_bracket_is_exact_metric() {
        let c = generators::cycle(7);
        let id = generators::identity(&c);
        let b = bracket(&id).unwrap();
        assert_eq!(b.lower, c.dist().clone());
        assert_eq!(exact(&id, 14).unwrap(), c.dist().clone());
    }

    #[test]
    fn constant_map_degenerates() {
        let src = generators::path(4);
        let tgt = generators::path(1);
        let f = VertexMap::new(src, tgt, vec![0; 4]).unwrap();
        let b = bracket(&f).unwrap();
        assert_eq!(b.lower.max_entry(), 0.0);
        assert!(!is_discrete(&f));
        assert!(matches!(
            factorize(&f, MetricChoice::Exact, 14),
            Err(Error::NotDiscrete(_))
        ));
    }

    #[test]
    fn triangle_example() {
        // Path a-b-c injectively onto a unit triangle: the only a–c path is
        // a-b-c, image diameter 1.
        let src = generators::path(3);
        let tgt = generators::cycle(3);
        let f = VertexMap::new(src, tgt, vec![0, 1, 2]).unwrap();
        let d = exact(&f, 14).unwrap();
        assert_eq!(d.get(0, 2), 1.0);
        assert_eq!(d, oracle(&f));
    }

    #[test]
    fn clique_method_matches_oracle() {
        for seed in 0..40 {
            let f = generators::random_map(seed, 8, 5, seed % 3 == 0).unwrap();
            let ex = exact(&f, 14).unwrap();
            assert_eq!(ex, oracle(&f), "seed {seed}");
            let b = bracket(&f).unwrap();
            for i in 0..8 {
                for j in 0..8 {
                    assert!(b.lower.get(i, j) <= ex.get(i, j) + TOL);
                    assert!(ex.get(i, j) <= b.upper.get(i, j) + TOL);
                }
            }
        }
    }

    #[test]
    fn winding_opposite_sheets() {
        let w = generators::winding(2, 2, 3).unwrap();
        // r0s0 and r0s3 both map to target r0s0.
        let (a, b) = (1, 4);
        assert_eq!(w.apply(a), w.apply(b));
        let br = bracket(&w).unwrap();
        assert!(br.lower.get(a, b) > 0.0);
        let ex = exact(&w, 14).unwrap();
        assert!(br.lower.get(a, b) <= ex.get(a, b) && ex.get(a, b) <= br.upper.get(a, b));
    }

    #[test]
    fn exact_cap_is_enforced() {
        let f = generators::cycle_cover(8, 2).unwrap();
        assert!(matches!(exact(&f, 14), Err(Error::TooLarge { .. })));
        assert!(exact(&f, 16).is_ok());
    }

    #[test]
    fn factorization_composes() {
        let w = generators::winding(2, 2, 3).unwrap();
        let fact = factorize(&w, MetricChoice::Exact, 14).unwrap();
        assert_eq!(fact.composed(), w.assignment());
        assert_eq!(fact.projection.branch_set(), w.branch_set());
        let curves = curve_sample(w.source(), 4, 5000);
        let cert = verify_projection(&fact, &curves);
        assert!(cert.pass, "{cert:?}");
        let approx = factorize(&w, MetricChoice::Lower, 14).unwrap();
        let cert = verify_projection(&approx, &curves);
        assert!(cert.pass, "{cert:?}");
        assert!(cert.has_flag("approximate"));
    }

    #[test]
    fn length_metric_examples() {
        let c = generators::cycle(5);
        assert_eq!(length_metric(c.dist(), &c), c.dist().clone());
        let two = generators::path(2);
        assert_eq!(length_metric(two.dist(), &two), two.dist().clone());
        let cover = generators::cycle_cover(4, 2).unwrap();
        assert!(length_chain_check(&cover, 14).unwrap().pass);
    }

    #[test]
    fn transfer_examples() {
        let cover = generators::cycle_cover(5, 2).unwrap();
        let fact = factorize(&cover, MetricChoice::Exact, 14).unwrap();
        let curves = curve_sample(cover.source(), 4, 10_000);
        let cert = bld_bdd_transfer_check(&cover, &fact, &curves, 1.0);
        assert!(cert.pass);
        assert_eq!(cert.constant, Some(1.0));
        let st = generators::stretch_edge(&generators::path(4), 1, 3.0).unwrap();
        let fact = factorize(&st, MetricChoice::Exact, 14).unwrap();
        let curves = curve_sample(st.source(), 3, 10_000);
        let cert = bld_bdd_transfer_check(&st, &fact, &curves, 3.0);
        assert!(cert.pass);
        assert_eq!(cert.constant, Some(3.0));
        let fact = factorize(&st, MetricChoice::Lower, 14).unwrap();
        let cert = bld_bdd_transfer_check(&st, &fact, &curves, 3.0);
        assert!(cert.pass && cert.has_flag("approximate"));
    }
}
