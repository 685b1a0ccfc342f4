//! Canonical example spaces and maps.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::covering::VertexMap;
use crate::error::{Error, Result};
use crate::space::{Edge, Space};

fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn edge(u: usize, v: usize, len: f64) -> Edge {
    Edge { u, v, len }
}

/// Unit path graph on `n` vertices with unit masses.
pub fn path(n: usize) -> Space {
    let edges = (1..n).map(|i| edge(i - 1, i, 1.0)).collect();
    Space::from_graph(ids("v", n), vec![1.0; n], edges).expect("path is connected")
}

/// Unit `n`-cycle with unit masses, `n ≥ 3`.
pub fn cycle(n: usize) -> Space {
    assert!(n >= 3, "a cycle needs at least three vertices");
    let edges = (0..n).map(|i| edge(i, (i + 1) % n, 1.0)).collect();
    Space::from_graph(ids("v", n), vec![1.0; n], edges).expect("cycle is connected")
}

/// Rectangular grid of `w × h` vertices with spacings `dx`, `dy`. Masses are
/// quarter areas of the incident cells.
pub fn grid_spaced(w: usize, h: usize, dx: f64, dy: f64) -> Result<Space> {
    if w < 1 || h < 1 || !(dx > 0.0) || !(dy > 0.0) {
        return Err(Error::InvalidArgument(
            "grid needs w, h ≥ 1 and positive spacing".into(),
        ));
    }
    let idx = |i: usize, j: usize| j * w + i;
    let mut edges = Vec::new();
    let mut masses = vec![0.0; w * h];
    for j in 0..h {
        for i in 0..w {
            if i + 1 < w {
                edges.push(edge(idx(i, j), idx(i + 1, j), dx));
            }
            if j + 1 < h {
                edges.push(edge(idx(i, j), idx(i, j + 1), dy));
            }
            if i + 1 < w && j + 1 < h {
                let q = dx * dy / 4.0;
                for v in [idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1)] {
                    masses[v] += q;
                }
            }
        }
    }
    if w * h == 1 {
        masses[0] = 1.0;
    }
    let names = (0..h)
        .flat_map(|j| (0..w).map(move |i| format!("g{i}_{j}")))
        .collect();
    Space::from_graph(names, masses, edges)
}

/// Grid of `w × h` vertices covering the unit-wide rectangle: spacing
/// `1/(w−1)` in both directions.
pub fn grid(w: usize, h: usize) -> Result<Space> {
    let s = if w > 1 { 1.0 / (w - 1) as f64 } else { 1.0 };
    grid_spaced(w, h, s, s)
}

/// Polar grid on the given ring radii (strictly increasing, positive) with
/// `sectors` angular divisions, optionally with a center vertex joined to
/// the innermost ring. Radial and angular edges carry Euclidean lengths
/// (angular edges are chords); masses are quarter areas of incident annular
/// cells, and the center carries the area of the inner disk.
pub fn polar_from_radii(radii: &[f64], sectors: usize, center: bool) -> Result<Space> {
    if sectors < 3 {
        return Err(Error::InvalidArgument(
            "polar grid needs at least 3 sectors".into(),
        ));
    }
    if radii.is_empty() || radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::InvalidArgument("ring radii must be positive".into()));
    }
    if radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(
            "ring radii must be strictly increasing".into(),
        ));
    }
    if !center && radii.len() < 2 {
        return Err(Error::InvalidArgument(
            "an annulus needs at least two rings".into(),
        ));
    }
    let off = usize::from(center);
    let n = off + radii.len() * sectors;
    let at = |i: usize, j: usize| off + i * sectors + (j % sectors);
    let dtheta = 2.0 * PI / sectors as f64;
    let mut names = Vec::with_capacity(n);
    if center {
        names.push("c".to_string());
    }
    for i in 0..radii.len() {
        for j in 0..sectors {
            names.push(format!("r{i}s{j}"));
        }
    }
    let mut masses = vec![0.0; n];
    let mut edges = Vec::new();
    if center {
        masses[0] = PI * radii[0] * radii[0];
        for j in 0..sectors {
            edges.push(edge(0, at(0, j), radii[0]));
        }
    }
    for (i, &r) in radii.iter().enumerate() {
        let chord = 2.0 * r * (dtheta / 2.0).sin();
        for j in 0..sectors {
            edges.push(edge(at(i, j), at(i, j + 1), chord));
            if i + 1 < radii.len() {
                edges.push(edge(at(i, j), at(i + 1, j), radii[i + 1] - r));
                let cell = dtheta / 2.0 * (radii[i + 1] * radii[i + 1] - r * r);
                for v in [at(i, j), at(i, j + 1), at(i + 1, j), at(i + 1, j + 1)] {
                    masses[v] += cell / 4.0;
                }
            }
        }
    }
    Space::from_graph(names, masses, edges)
}

/// Polar annulus grid: `levels` rings with radii evenly spaced from `r0` to
/// `r1`, `sectors` angular divisions.
pub fn polar_grid(levels: usize, sectors: usize, r0: f64, r1: f64) -> Result<Space> {
    if !(r1 > r0) || !(r0 > 0.0) {
        return Err(Error::InvalidArgument(
            "polar grid needs 0 < r0 < r1".into(),
        ));
    }
    if levels < 2 {
        return Err(Error::InvalidArgument(
            "polar grid needs at least two levels".into(),
        ));
    }
    let radii: Vec<f64> = (0..levels)
        .map(|i| r0 + (r1 - r0) * i as f64 / (levels - 1) as f64)
        .collect();
    polar_from_radii(&radii, sectors, false)
}

/// Polar disk grid of radius `r1` with a center vertex and `levels` evenly
/// spaced rings.
pub fn polar_disk(levels: usize, sectors: usize, r1: f64) -> Result<Space> {
    if levels < 1 || !(r1 > 0.0) {
        return Err(Error::InvalidArgument(
            "polar disk needs levels ≥ 1 and r1 > 0".into(),
        ));
    }
    let radii: Vec<f64> = (1..=levels)
        .map(|i| r1 * i as f64 / levels as f64)
        .collect();
    polar_from_radii(&radii, sectors, true)
}

/// Winding map `z ↦ z^k` of the unit disk. The target is the uniform polar
/// disk grid; the source has `k·sectors` angular divisions and ring radii
/// `ρ^{1/k}`, so that every grid vertex lands exactly on a target vertex.
pub fn winding(k: usize, levels: usize, sectors: usize) -> Result<VertexMap> {
    if k < 1 {
        return Err(Error::InvalidArgument("winding degree must be ≥ 1".into()));
    }
    let target = polar_disk(levels, sectors, 1.0)?;
    let radii: Vec<f64> = (1..=levels)
        .map(|i| (i as f64 / levels as f64).powf(1.0 / k as f64))
        .collect();
    let source = polar_from_radii(&radii, k * sectors, true)?;
    let mut assign = vec![0usize; source.n()];
    for i in 0..levels {
        for j in 0..k * sectors {
            assign[1 + i * k * sectors + j] = 1 + i * sectors + j % sectors;
        }
    }
    VertexMap::new(source, target, assign)
}

/// `m`-fold cyclic cover `t ↦ t mod n` of the unit `n`-cycle.
pub fn cycle_cover(n: usize, m: usize) -> Result<VertexMap> {
    if n < 3 || m < 1 {
        return Err(Error::InvalidArgument(
            "cycle cover needs n ≥ 3 and m ≥ 1".into(),
        ));
    }
    let source = cycle(m * n);
    let target = cycle(n);
    VertexMap::new(source, target, (0..m * n).map(|t| t % n).collect())
}

/// Identity vertex map of a space onto a copy of itself.
pub fn identity(space: &Space) -> VertexMap {
    VertexMap::new(space.clone(), space.clone(), (0..space.n()).collect())
        .expect("identity is a valid map")
}

/// Identity assignment from `space` onto the same graph with edge `e`
/// stretched by `factor` (target metric recomputed, masses kept).
pub fn stretch_edge(space: &Space, e: usize, factor: f64) -> Result<VertexMap> {
    if e >= space.edges().len() || !(factor > 0.0) {
        return Err(Error::InvalidArgument("bad edge index or factor".into()));
    }
    let mut edges = space.edges().to_vec();
    edges[e].len *= factor;
    let target = Space::from_graph(space.ids().to_vec(), space.masses().to_vec(), edges)?;
    VertexMap::new(space.clone(), target, (0..space.n()).collect())
}

/// Affine stretch `(x, y) ↦ (t·x, y)` of the unit-spaced `w × h` grid.
pub fn grid_stretch(w: usize, h: usize, t: f64) -> Result<VertexMap> {
    let source = grid(w, h)?;
    let s = if w > 1 { 1.0 / (w - 1) as f64 } else { 1.0 };
    let target = grid_spaced(w, h, t * s, s)?;
    VertexMap::new(source, target, (0..w * h).collect())
}

/// Seeded random connected graph: a random spanning tree plus extra edges,
/// edge lengths in `{1, 2, 3}`, masses in `{1, 2}`.
pub fn random_space(rng: &mut impl Rng, n: usize, extra: usize) -> Space {
    let mut edges: Vec<Edge> = Vec::new();
    for v in 1..n {
        let u = rng.gen_range(0..v);
        edges.push(edge(u, v, rng.gen_range(1..=3) as f64));
    }
    for _ in 0..extra {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u != v
            && !edges
                .iter()
                .any(|e| (e.u, e.v) == (u, v) || (e.u, e.v) == (v, u))
        {
            edges.push(edge(u, v, rng.gen_range(1..=3) as f64));
        }
    }
    let masses = (0..n).map(|_| rng.gen_range(1..=2) as f64).collect();
    Space::from_graph(ids("v", n), masses, edges).expect("spanning tree keeps it connected")
}

/// Seeded random valid map with `n_src ≥ n_tgt` source vertices. The source
/// is grown from a spanning tree whose edges map onto target edges, so the
/// result is surjective and edge-compatible; `collapse` allows edges whose
/// endpoints share an image.
pub fn random_map(seed: u64, n_src: usize, n_tgt: usize, collapse: bool) -> Result<VertexMap> {
    if n_tgt < 1 || n_src < n_tgt {
        return Err(Error::InvalidArgument("need 1 ≤ n_tgt ≤ n_src".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = random_space(&mut rng, n_tgt, n_tgt / 2);
    let tadj: Vec<Vec<usize>> = (0..n_tgt)
        .map(|y| target.neighbors(y).iter().map(|&(w, _)| w).collect())
        .collect();
    loop {
        let mut assign = vec![rng.gen_range(0..n_tgt)];
        let mut edges = Vec::new();
        let mut hit = vec![false; n_tgt];
        hit[assign[0]] = true;
        for x in 1..n_src {
            let remaining = n_src - x;
            let uncovered = hit.iter().filter(|h| !**h).count();
            let u = rng.gen_range(0..x);
            let fu = assign[u];
            let mut options: Vec<usize> = tadj[fu].clone();
            if collapse && rng.gen_bool(0.15) {
                options = vec![fu];
            }
            // Prefer uncovered targets when running out of vertices.
            if uncovered >= remaining {
                let fresh: Vec<usize> = options.iter().copied().filter(|&y| !hit[y]).collect();
                if !fresh.is_empty() {
                    options = fresh;
                }
            }
            let y = *options.choose(&mut rng).unwrap_or(&fu);
            hit[y] = true;
            assign.push(y);
            edges.push(edge(u, x, rng.gen_range(1..=3) as f64));
        }
        if hit.iter().any(|h| !h) {
            continue;
        }
        for _ in 0..n_src / 2 {
            let a = rng.gen_range(0..n_src);
            let b = rng.gen_range(0..n_src);
            let (fa, fb) = (assign[a], assign[b]);
            let compatible = (collapse && fa == fb) || tadj[fa].contains(&fb);
            if a != b
                && compatible
                && !edges
                    .iter()
                    .any(|e: &Edge| (e.u, e.v) == (a, b) || (e.u, e.v) == (b, a))
            {
                edges.push(edge(a, b, rng.gen_range(1..=3) as f64));
            }
        }
        let masses = (0..n_src).map(|_| rng.gen_range(1..=2) as f64).collect();
        let source = Space::from_graph(ids("x", n_src), masses, edges)?;
        return VertexMap::new(source, target, assign);
    }
}

/// Named maps used across tests and acceptance runs.
pub fn corpus() -> Vec<(&'static str, VertexMap)> {
    let mut out = vec![
        ("identity_cycle6", identity(&cycle(6))),
        ("identity_grid4", identity(&grid(4, 4).expect("grid"))),
        (
            "identity_polar",
            identity(&polar_grid(3, 6, 1.0, 2.0).expect("polar")),
        ),
        ("cycle_cover_6x2", cycle_cover(6, 2).expect("cover")),
        ("cycle_cover_5x3", cycle_cover(5, 3).expect("cover")),
        ("winding_2", winding(2, 2, 5).expect("winding")),
        ("winding_3", winding(3, 2, 4).expect("winding")),
    ];
    out.push((
        "stretch_path",
        stretch_edge(&path(5), 1, 3.0).expect("stretch"),
    ));
    out
}
