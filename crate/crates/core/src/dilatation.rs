//! Metric and inverse dilatations, the Lipschitz field, BLD/BDD/LQ
//! verification and the branched quasisymmetry gauge.
//!
//! Spheres `{d = r}` are replaced by shells: the outer quantity ranges over
//! `d ≤ r`, the inner one over `d ≥ r`. Both choices can only enlarge the
//! ratio, so every verdict here is conservative.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::certificate::{Certificate, Witness};
use crate::covering::VertexMap;
use crate::error::{Error, Result};
use crate::par;
use crate::pullback::{image_length, path_length};
use crate::space::{distinct_sorted, simple_paths, Space, VertexSet, TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DilatationRow {
    pub r: f64,
    pub outer: f64,
    pub inner: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DilatationProfile {
    pub vertex: usize,
    pub cap: f64,
    pub rows: Vec<DilatationRow>,
    /// Largest ratio over the rows (`H`).
    pub max_ratio: f64,
    /// Smallest ratio over the rows (`h`).
    pub min_ratio: f64,
    pub flags: Vec<String>,
}

fn ratio(outer: f64, inner: f64) -> f64 {
    if inner > 0.0 {
        outer / inner
    } else if outer > 0.0 {
        f64::INFINITY
    } else {
        1.0
    }
}

fn aggregate(
    vertex: usize,
    cap: f64,
    rows: Vec<DilatationRow>,
    flags: Vec<String>,
) -> DilatationProfile {
    let max_ratio = rows
        .iter()
        .map(|r| r.ratio)
        .fold(f64::NEG_INFINITY, f64::max);
    let min_ratio = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    DilatationProfile {
        vertex,
        cap,
        max_ratio: if rows.is_empty() { f64::NAN } else { max_ratio },
        min_ratio: if rows.is_empty() { f64::NAN } else { min_ratio },
        rows,
        flags,
    }
}

/// Source radius of the normal neighbourhood of `x`: the largest distance `t`
/// from `x` whose closed ball stays inside `U(x, f, R)`, `R` the normal
/// radius at `f(x)`; never below the nearest-neighbour distance.
pub fn default_radius_cap(f: &VertexMap, x: usize) -> f64 {
    let src = f.source();
    let nr = f.normal_radius(x);
    let u: BTreeSet<usize> = f.u_component_closed(x, nr.radius).into_iter().collect();
    let radii: Vec<f64> = src.radii_from(x).into_iter().filter(|&t| t > 0.0).collect();
    let mut cap = radii.first().copied().unwrap_or(0.0);
    for &t in &radii {
        if (0..src.n()).all(|y| src.d(x, y) > t + TOL || u.contains(&y)) {
            cap = cap.max(t);
        } else {
            break;
        }
    }
    cap
}

/// `L_f(x, r) = max{d(fx, fy) : d(x, y) ≤ r}`,
/// `l_f(x, r) = min{d(fx, fy) : d(x, y) ≥ r, y ≠ x}` over the realized radii
/// up to the cap.
pub fn dilatation_profile(
    f: &VertexMap,
    x: usize,
    radius_cap: Option<f64>,
) -> Result<DilatationProfile> {
    let src = f.source();
    src.check_vertex(x)?;
    if src.n() < 2 {
        return Err(Error::InvalidArgument(
            "dilatation needs a vertex with neighbours".into(),
        ));
    }
    if let Some(c) = radius_cap {
        if !(c > 0.0) {
            return Err(Error::InvalidArgument("radius cap must be positive".into()));
        }
    }
    let cap = radius_cap.unwrap_or_else(|| default_radius_cap(f, x));
    let radii: Vec<f64> = src
        .radii_from(x)
        .into_iter()
        .filter(|&r| r > 0.0 && r <= cap + TOL)
        .collect();
    let rows = radii
        .iter()
        .map(|&r| {
            let mut outer: f64 = 0.0;
            let mut inner = f64::INFINITY;
            for y in 0..src.n() {
                let d = src.d(x, y);
                let dy = f.image_dist(x, y);
                if d <= r + TOL {
                    outer = outer.max(dy);
                }
                if y != x && d >= r - TOL {
                    inner = inner.min(dy);
                }
            }
            DilatationRow {
                r,
                outer,
                inner,
                ratio: ratio(outer, inner),
            }
        })
        .collect();
    Ok(aggregate(x, cap, rows, Vec::new()))
}

/// Inverse profile over target scales `s`: `∂U(x, f, s)` is the set of
/// vertices of the normal neighbourhood with a neighbour outside it, and
/// `L*`, `l*` are the largest and smallest distances from `x` to it.
pub fn inverse_dilatation_profile(
    f: &VertexMap,
    x: usize,
    scale_cap: Option<f64>,
) -> Result<DilatationProfile> {
    let src = f.source();
    src.check_vertex(x)?;
    let nr = f.normal_radius(x).radius;
    let cap = scale_cap.unwrap_or(nr);
    let z = f.apply(x);
    let scales: Vec<f64> = f
        .target()
        .radii_from(z)
        .into_iter()
        .filter(|&s| s > 0.0 && s <= cap + TOL)
        .collect();
    let mut flags = Vec::new();
    let mut rows = Vec::new();
    for s in scales {
        if s > nr + TOL {
            let fl = "nonlocal".to_string();
            if !flags.contains(&fl) {
                flags.push(fl);
            }
        }
        let u = f.u_component_closed(x, s);
        let mut inside = vec![false; src.n()];
        for &v in &u {
            inside[v] = true;
        }
        let boundary: Vec<usize> = u
            .iter()
            .copied()
            .filter(|&v| src.neighbors(v).iter().any(|&(w, _)| !inside[w]))
            .collect();
        if boundary.is_empty() {
            let fl = format!("degenerate boundary at scale {s}");
            flags.push(fl);
            continue;
        }
        let outer = boundary.iter().map(|&v| src.d(x, v)).fold(0.0, f64::max);
        let inner = boundary
            .iter()
            .map(|&v| src.d(x, v))
            .fold(f64::INFINITY, f64::min);
        rows.push(DilatationRow {
            r: s,
            outer,
            inner,
            ratio: ratio(outer, inner),
        });
    }
    Ok(aggregate(x, cap, rows, flags))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipschitzEntry {
    pub upper: f64,
    pub lower: f64,
}

/// Finest-scale slopes: max and min of `d(fx, fy)/d(x, y)` over neighbours.
pub fn lipschitz_field(f: &VertexMap) -> Vec<LipschitzEntry> {
    let src = f.source();
    par::map_range(src.n(), |x| {
        let mut upper: f64 = 0.0;
        let mut lower = f64::INFINITY;
        for &(y, _) in src.neighbors(x) {
            let s = f.image_dist(x, y) / src.d(x, y);
            upper = upper.max(s);
            lower = lower.min(s);
        }
        if src.neighbors(x).is_empty() {
            lower = 0.0;
        }
        LipschitzEntry { upper, lower }
    })
}

/// `max{L_f(x), 1/l_f(x)}` over all vertices; infinite when an edge collapses.
pub fn lipschitz_bound(field: &[LipschitzEntry]) -> f64 {
    field
        .iter()
        .map(|e| {
            let inv = if e.lower > 0.0 {
                1.0 / e.lower
            } else {
                f64::INFINITY
            };
            e.upper.max(inv)
        })
        .fold(1.0, f64::max)
}

/// Seeded random simple paths: self-avoiding walks of up to `max_edges`
/// steps from uniformly chosen start vertices.
pub fn random_paths(space: &Space, count: usize, max_edges: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    if space.n() < 2 {
        return out;
    }
    while out.len() < count {
        let mut path = vec![rng.gen_range(0..space.n())];
        let mut on = vec![false; space.n()];
        on[path[0]] = true;
        let steps = rng.gen_range(1..=max_edges.max(1));
        for _ in 0..steps {
            let u = *path.last().expect("nonempty");
            let next: Vec<usize> = space
                .neighbors(u)
                .iter()
                .map(|&(w, _)| w)
                .filter(|&w| !on[w])
                .collect();
            let Some(&w) = next.choose(&mut rng) else {
                break;
            };
            on[w] = true;
            path.push(w);
        }
        if path.len() >= 2 {
            out.push(path);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveBudget {
    /// Longest enumerated simple path, in edges.
    pub max_edges: usize,
    /// Cap on enumerated paths.
    pub enumerate: usize,
    /// Extra random paths.
    pub random: usize,
    pub seed: u64,
}

impl Default for CurveBudget {
    fn default() -> Self {
        Self {
            max_edges: 6,
            enumerate: 20_000,
            random: 200,
            seed: 0,
        }
    }
}

/// Enumerated simple paths followed by the random sample.
pub fn curve_battery(space: &Space, budget: CurveBudget) -> (Vec<Vec<usize>>, bool) {
    let (mut paths, complete) = simple_paths(space, budget.max_edges, budget.enumerate);
    paths.extend(random_paths(
        space,
        budget.random,
        4 * budget.max_edges.max(1),
        budget.seed,
    ));
    (paths, complete)
}

fn set_diam(d: impl Fn(usize, usize) -> f64, set: &[usize]) -> f64 {
    let mut m: f64 = 0.0;
    for (i, &a) in set.iter().enumerate() {
        for &b in &set[i + 1..] {
            m = m.max(d(a, b));
        }
    }
    m
}

fn two_sided(image: f64, source: f64) -> f64 {
    if source <= 0.0 {
        return 1.0;
    }
    if image <= 0.0 {
        return f64::INFINITY;
    }
    let r = image / source;
    r.max(1.0 / r)
}

fn curve_certificate(
    name: &str,
    f: &VertexMap,
    l: f64,
    budget: CurveBudget,
    measure: impl Fn(&[usize]) -> (f64, f64) + Sync + Send,
) -> Certificate {
    let src = f.source();
    let (paths, complete) = curve_battery(src, budget);
    let ratios = par::map_slice(&paths, |p| {
        let (s, i) = measure(p);
        two_sided(i, s)
    });
    let mut worst = 1.0;
    let mut at = None;
    for (k, &r) in ratios.iter().enumerate() {
        if r > worst {
            worst = r;
            at = Some(k);
        }
    }
    let mut cert = Certificate::new(name).with_constant(worst);
    cert.note(format!("{} curves, seed {}", paths.len(), budget.seed));
    if !complete {
        cert.flag("enumeration truncated");
    }
    if let Some(k) = at {
        let w = Witness::Curve {
            vertices: paths[k].iter().map(|&v| src.id(v).to_string()).collect(),
        };
        if worst > l + 1e-9 {
            cert.fail(w);
        } else {
            cert.witness = Some(w);
        }
    }
    cert
}

/// `L⁻¹ l(α) ≤ l(f∘α) ≤ L l(α)` over the curve battery.
pub fn bld_verify(f: &VertexMap, l: f64, budget: CurveBudget) -> Certificate {
    curve_certificate("bld", f, l, budget, |p| {
        (path_length(f.source(), p), image_length(f, p))
    })
}

/// `L⁻¹ diam α ≤ diam f(α) ≤ L diam α` over the curve battery.
pub fn bdd_verify(f: &VertexMap, l: f64, budget: CurveBudget) -> Certificate {
    curve_certificate("bdd", f, l, budget, |p| {
        (
            set_diam(|a, b| f.source().d(a, b), p),
            set_diam(|a, b| f.image_dist(a, b), p),
        )
    })
}

/// Smallest `L` with `B(fx, r/L) ⊂ f(B(x, r)) ⊂ B(fx, L r)` for all `x` and
/// all `r > 0`. Open balls are constant on the intervals between realized
/// distances, so each interval contributes its worst endpoint.
pub fn lq_verify(f: &VertexMap, l: f64) -> Certificate {
    let src = f.source();
    let tgt = f.target();
    let per_vertex = par::map_range(src.n(), |x| {
        let fx = f.apply(x);
        let mut ts = vec![0.0];
        ts.extend(src.radii_from(x).into_iter().filter(|&t| t > 0.0));
        let mut worst = (1.0, 0.0);
        for i in 0..ts.len() {
            let t = ts[i];
            let mut image = vec![false; tgt.n()];
            let mut outer: f64 = 0.0;
            for y in 0..src.n() {
                if src.d(x, y) <= t + TOL {
                    image[f.apply(y)] = true;
                    outer = outer.max(f.image_dist(x, y));
                }
            }
            if t > 0.0 && outer / t > worst.0 {
                worst = (outer / t, t);
            }
            if let Some(&next) = ts.get(i + 1) {
                let gap = (0..tgt.n())
                    .filter(|&z| !image[z])
                    .map(|z| tgt.d(fx, z))
                    .fold(f64::INFINITY, f64::min);
                if gap.is_finite() && next / gap > worst.0 {
                    worst = (next / gap, next);
                }
            }
        }
        worst
    });
    let mut best = 1.0;
    let mut at = None;
    for (x, &(v, r)) in per_vertex.iter().enumerate() {
        if v > best {
            best = v;
            at = Some((x, r));
        }
    }
    let mut cert = Certificate::new("lq").with_constant(best);
    if let Some((x, r)) = at {
        cert.note(format!("worst at {} radius {r}", src.id(x)));
        let w = Witness::Vertex {
            vertex: src.id(x).to_string(),
        };
        if best > l + 1e-9 {
            cert.fail(w);
        } else {
            cert.witness = Some(w);
        }
    }
    cert
}

fn profile_certificate(
    name: &str,
    f: &VertexMap,
    k: f64,
    profiles: Vec<Result<DilatationProfile>>,
) -> Result<Certificate> {
    let src = f.source();
    let mut cert = Certificate::new(name);
    let mut worst = f64::NEG_INFINITY;
    let mut worst_pos = f64::NEG_INFINITY;
    let mut at = None;
    for p in profiles {
        let p = p?;
        for fl in &p.flags {
            cert.flag(fl.split(" at ").next().unwrap_or(fl).to_string());
        }
        if p.rows.is_empty() {
            continue;
        }
        if p.max_ratio > worst {
            worst = p.max_ratio;
            at = Some(p.vertex);
        }
        if src.mass(p.vertex) > 0.0 {
            worst_pos = worst_pos.max(p.max_ratio);
        }
    }
    if let Some(x) = at {
        cert.constant = Some(worst);
        cert.note(format!("max over positive-mass vertices: {worst_pos}"));
        let w = Witness::Vertex {
            vertex: src.id(x).to_string(),
        };
        if worst > k + 1e-9 {
            cert.fail(w);
        } else {
            cert.witness = Some(w);
        }
    }
    Ok(cert)
}

/// `H_f(x) ≤ K` at every vertex.
pub fn metric_qr_certificate(
    f: &VertexMap,
    k: f64,
    radius_cap: Option<f64>,
) -> Result<Certificate> {
    let profiles = par::map_range(f.source().n(), |x| dilatation_profile(f, x, radius_cap));
    profile_certificate("metric_qr", f, k, profiles)
}

/// `H*_f(x) ≤ K` at every vertex.
pub fn inverse_qr_certificate(
    f: &VertexMap,
    k: f64,
    scale_cap: Option<f64>,
) -> Result<Certificate> {
    let profiles = par::map_range(f.source().n(), |x| {
        inverse_dilatation_profile(f, x, scale_cap)
    });
    profile_certificate("inverse_qr", f, k, profiles)
}

/// Connected vertex sets used by the quasisymmetry gauge: single edges,
/// connected closed balls, normal neighbourhoods and seeded random connected
/// sets, deduplicated and capped at `budget`.
pub fn continuum_sample(f: &VertexMap, budget: usize, seed: u64) -> Vec<VertexSet> {
    let src = f.source();
    let mut seen: BTreeSet<VertexSet> = BTreeSet::new();
    let mut out = Vec::new();
    let mut push = |mut s: VertexSet, out: &mut Vec<VertexSet>| {
        s.sort_unstable();
        s.dedup();
        if out.len() < budget && s.len() >= 2 && seen.insert(s.clone()) {
            out.push(s);
        }
    };
    for e in src.edges() {
        push(vec![e.u, e.v], &mut out);
    }
    for x in 0..src.n() {
        for t in src.radii_from(x) {
            let b = src.ball_closed(x, t).expect("valid vertex");
            if src.is_connected_set(&b) {
                push(b, &mut out);
            }
        }
    }
    for x in 0..src.n() {
        for t in f.target().radii_from(f.apply(x)) {
            push(f.u_component_closed(x, t), &mut out);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..budget {
        if out.len() >= budget {
            break;
        }
        let size = rng.gen_range(2..=src.n().max(2));
        let mut set = vec![rng.gen_range(0..src.n())];
        let mut on = vec![false; src.n()];
        on[set[0]] = true;
        while set.len() < size {
            let frontier: Vec<usize> = set
                .iter()
                .flat_map(|&v| src.neighbors(v).iter().map(|&(w, _)| w))
                .filter(|&w| !on[w])
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let Some(&w) = frontier.choose(&mut rng) else {
                break;
            };
            on[w] = true;
            set.push(w);
        }
        push(set, &mut out);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BqsGauge {
    /// `(t, η̂(t))`, increasing in `t`.
    pub steps: Vec<(f64, f64)>,
    pub pairs: usize,
    /// Pairs skipped because an image diameter vanished.
    pub collapsed: usize,
}

impl BqsGauge {
    /// `η̂(t)`: the step value at the largest sampled argument `≤ t`.
    pub fn eval(&self, t: f64) -> Option<f64> {
        self.steps
            .iter()
            .take_while(|(s, _)| *s <= t + 1e-12)
            .last()
            .map(|&(_, e)| e)
    }
}

/// Minimal monotone gauge consistent with the ratios
/// `diam f(E)/diam f(F)` against `diam E/diam F` over intersecting pairs.
pub fn bqs_gauge(f: &VertexMap, continua: &[VertexSet]) -> BqsGauge {
    let src = f.source();
    let diam: Vec<(f64, f64)> = par::map_slice(continua, |c| {
        (
            set_diam(|a, b| src.d(a, b), c),
            set_diam(|a, b| f.image_dist(a, b), c),
        )
    });
    let masks: Vec<Vec<bool>> = continua
        .iter()
        .map(|c| {
            let mut m = vec![false; src.n()];
            for &v in c {
                m[v] = true;
            }
            m
        })
        .collect();
    let rows = par::map_range(continua.len(), |i| {
        let mut pts = Vec::new();
        let mut collapsed = 0;
        for j in 0..continua.len() {
            if i == j || !continua[j].iter().any(|&v| masks[i][v]) {
                continue;
            }
            let (de, dfe) = diam[i];
            let (df, dff) = diam[j];
            if dff <= 0.0 {
                collapsed += 1;
                continue;
            }
            pts.push((de / df, dfe / dff));
        }
        (pts, collapsed)
    });
    let mut pts: Vec<(f64, f64)> = Vec::new();
    let mut collapsed = 0;
    for (p, c) in rows {
        pts.extend(p);
        collapsed += c;
    }
    let pairs = pts.len() + collapsed;
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let ts = distinct_sorted(pts.iter().map(|p| p.0));
    let mut steps = Vec::with_capacity(ts.len());
    let mut run = f64::NEG_INFINITY;
    let mut k = 0;
    for t in ts {
        while k < pts.len() && pts[k].0 <= t + TOL * t.max(1.0) {
            run = run.max(pts[k].1);
            k += 1;
        }
        steps.push((t, run));
    }
    BqsGauge {
        steps,
        pairs,
        collapsed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators;

    fn stretch() -> VertexMap {
        generators::stretch_edge(&generators::path(4), 1, 3.0).unwrap()
    }

    #[test]
    fn isometry_profiles() {
        let f = generators::identity(&generators::cycle(8));
        for x in 0..8 {
            let p = dilatation_profile(&f, x, Some(4.0)).unwrap();
            assert!(p.rows.iter().all(|r| (r.ratio - 1.0).abs() < 1e-12));
            let q = inverse_dilatation_profile(&f, x, None).unwrap();
            assert!(q.rows.iter().all(|r| (r.ratio - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn stretched_edge_profile() {
        let f = stretch();
        let p = dilatation_profile(&f, 1, Some(1.0)).unwrap();
        assert_eq!(p.rows.len(), 1);
        assert_eq!(p.rows[0].ratio, 3.0);
        let lf = lipschitz_field(&f);
        assert_eq!(lf[1].upper, 3.0);
        assert_eq!(lipschitz_bound(&lf), 3.0);
        let c = bld_verify(&f, 3.0, CurveBudget::default());
        assert!(c.pass);
        assert_eq!(c.constant, Some(3.0));
        assert!(!bld_verify(&f, 2.0, CurveBudget::default()).pass);
        assert_eq!(lq_verify(&f, 3.0).constant, Some(3.0));
    }

    #[test]
    fn covers_are_local_isometries() {
        let f = generators::cycle_cover(6, 2).unwrap();
        assert_eq!(
            bld_verify(&f, 1.0, CurveBudget::default()).constant,
            Some(1.0)
        );
        assert_eq!(lq_verify(&f, 1.0).constant, Some(1.0));
        let lf = lipschitz_field(&f);
        assert!(lf.iter().all(|e| e.upper == 1.0 && e.lower == 1.0));
    }

    #[test]
    fn collapse_is_flagged() {
        let f = generators::random_map(3, 7, 4, true).unwrap();
        let lf = lipschitz_field(&f);
        if lf.iter().any(|e| e.lower == 0.0) {
            assert!(lipschitz_bound(&lf).is_infinite());
            assert!(!bld_verify(&f, 1e6, CurveBudget::default()).pass);
            assert!(!bdd_verify(&f, 1e6, CurveBudget::default()).pass);
        }
    }

    #[test]
    fn nonlocal_scale_flagged() {
        let f = generators::cycle_cover(6, 2).unwrap();
        let q = inverse_dilatation_profile(&f, 0, Some(3.0)).unwrap();
        assert!(q.flags.iter().any(|s| s == "nonlocal"));
    }

    #[test]
    fn isometry_gauge_is_identity() {
        let f = generators::identity(&generators::grid(3, 3).unwrap());
        let g = bqs_gauge(&f, &continuum_sample(&f, 200, 1));
        assert!(!g.steps.is_empty());
        assert!(g.steps.iter().all(|&(t, e)| (t - e).abs() < 1e-12));
    }

    #[test]
    fn winding_center_profile_is_round() {
        let f = generators::winding(2, 4, 8).unwrap();
        let p = dilatation_profile(&f, 0, None).unwrap();
        assert!(!p.rows.is_empty());
        assert!((p.max_ratio - 1.0).abs() < 1e-9, "{}", p.max_ratio);
    }
}
