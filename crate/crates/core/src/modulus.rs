//! Discrete p-modulus of curve families with edge densities, solved by
//! constraint generation and dual coordinate ascent, plus the modulus-based
//! quasiregularity certificates.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::certificate::{Certificate, Witness};
use crate::covering::VertexMap;
use crate::error::{Error, Result};
use crate::measure::fsum;
use crate::par;
use crate::pullback::Factorization;
use crate::space::{Curve, Space, VertexSet, TOL};

#[derive(Debug, Clone, PartialEq)]
pub enum Weight {
    Unit,
    /// One weight per edge.
    Edge(Vec<f64>),
    /// One mass per vertex; converted to `w_e = (μ(a) + μ(b)) / (2·len_e)`.
    Vertex(Vec<f64>),
    /// Energy coefficients `c_e` given directly.
    Coefficient(Vec<f64>),
}

impl Weight {
    fn label(&self) -> &'static str {
        match self {
            Weight::Unit => "unit",
            Weight::Edge(_) => "edge",
            Weight::Coefficient(_) => "coefficient",
            Weight::Vertex(_) => "vertex",
        }
    }
}

/// Energy coefficients `c_e = w_e·len_e`, so that the energy is `Σ c_e ρ_e^p`.
pub fn energy_coefficients(space: &Space, weight: &Weight) -> Result<Vec<f64>> {
    let edges = space.edges();
    let c: Vec<f64> = match weight {
        Weight::Unit => edges.iter().map(|e| e.len).collect(),
        Weight::Edge(w) => {
            if w.len() != edges.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} edge weights for {} edges",
                    w.len(),
                    edges.len()
                )));
            }
            edges.iter().zip(w).map(|(e, w)| w * e.len).collect()
        }
        Weight::Coefficient(c) => {
            if c.len() != edges.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} coefficients for {} edges",
                    c.len(),
                    edges.len()
                )));
            }
            c.clone()
        }
        Weight::Vertex(mu) => {
            if mu.len() != space.n() {
                return Err(Error::InvalidArgument(format!(
                    "{} vertex weights for {} vertices",
                    mu.len(),
                    space.n()
                )));
            }
            edges.iter().map(|e| 0.5 * (mu[e.u] + mu[e.v])).collect()
        }
    };
    if c.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::InvalidArgument(
            "weights must be nonnegative reals".into(),
        ));
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq)]
pub enum CurveFamily {
    Explicit(Vec<Curve>),
    /// All curves inside `within` joining `e` to `f`, represented by their
    /// minimal members.
    Connecting {
        e: VertexSet,
        f: VertexSet,
        within: VertexSet,
    },
}

impl CurveFamily {
    pub fn connecting(e: VertexSet, f: VertexSet, within: VertexSet) -> Self {
        CurveFamily::Connecting { e, f, within }
    }

    fn validate(&self, space: &Space) -> Result<()> {
        match self {
            CurveFamily::Explicit(curves) => {
                if curves.is_empty() {
                    return Err(Error::InvalidArgument("empty explicit family".into()));
                }
                if curves.iter().any(|c| c.vertices().len() < 2) {
                    return Err(Error::InvalidCurve(
                        "constant curve has no admissible density".into(),
                    ));
                }
                Ok(())
            }
            CurveFamily::Connecting { e, f, within } => {
                if e.is_empty() || f.is_empty() {
                    return Err(Error::InvalidArgument("E and F must be nonempty".into()));
                }
                for &v in e.iter().chain(f).chain(within) {
                    space.check_vertex(v)?;
                }
                if e.iter().any(|v| f.contains(v)) {
                    return Err(Error::InvalidArgument("E and F must be disjoint".into()));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModulusResult {
    pub value: f64,
    /// Admissible density, one entry per edge of the space carrying it.
    pub density: Vec<f64>,
    pub p: f64,
    pub weight: String,
    pub iterations: usize,
    /// `value − dual lower bound`.
    pub gap: f64,
    pub dual: f64,
    pub curves_generated: usize,
    pub empty_family: bool,
    /// Converged to the requested tolerance.
    pub converged: bool,
}

/// Sparse curve: `(density edge, coefficient)`; the coefficient is the edge
/// length times the number of traversals.
type Sparse = Vec<(usize, f64)>;

fn to_sparse(items: impl Iterator<Item = usize>, len: &[f64]) -> Sparse {
    let mut v: Vec<usize> = items.collect();
    v.sort_unstable();
    let mut out: Sparse = Vec::new();
    for e in v {
        match out.last_mut() {
            Some((last, a)) if *last == e => *a += len[e],
            _ => out.push((e, len[e])),
        }
    }
    out
}

/// Graph walked by the most-violated-curve search. Each step may carry a
/// density edge; steps without one (collapsed edges) cost nothing.
struct Walk {
    adj: Vec<Vec<(usize, Option<usize>)>>,
    sources: Vec<bool>,
    sinks: Vec<bool>,
    allowed: Vec<bool>,
}

enum Oracle {
    Explicit(Vec<Sparse>),
    Walk(Walk),
}

#[derive(Clone, Copy)]
struct Key {
    cost: f64,
    geo: f64,
    hops: usize,
    v: usize,
}

impl PartialEq for Key {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Key {}
impl Ord for Key {
    fn cmp(&self, o: &Self) -> Ordering {
        // reversed for a min-heap
        o.cost
            .total_cmp(&self.cost)
            .then_with(|| o.geo.total_cmp(&self.geo))
            .then_with(|| o.hops.cmp(&self.hops))
            .then_with(|| o.v.cmp(&self.v))
    }
}
impl PartialOrd for Key {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl Key {
    fn better(&self, o: &Key) -> bool {
        // self strictly smaller than o in (cost, geo, hops)
        match self.cost.total_cmp(&o.cost) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => match self.geo.total_cmp(&o.geo) {
                Ordering::Less => true,
                Ordering::Greater => false,
                Ordering::Equal => self.hops < o.hops,
            },
        }
    }
}

impl Walk {
    /// Minimal-cost source-to-sink walk; ties by geometric length, hop count
    /// and vertex index. `None` when no sink is reachable.
    fn shortest(&self, cost: &[f64], len: &[f64]) -> Option<(f64, Vec<usize>)> {
        let n = self.adj.len();
        let inf = Key {
            cost: f64::INFINITY,
            geo: f64::INFINITY,
            hops: usize::MAX,
            v: usize::MAX,
        };
        let mut best = vec![inf; n];
        let mut prev: Vec<Option<(usize, Option<usize>)>> = vec![None; n];
        let mut heap = BinaryHeap::new();
        for v in 0..n {
            if self.sources[v] && self.allowed[v] {
                let k = Key {
                    cost: 0.0,
                    geo: 0.0,
                    hops: 0,
                    v,
                };
                best[v] = k;
                heap.push(k);
            }
        }
        let mut done = vec![false; n];
        while let Some(k) = heap.pop() {
            let u = k.v;
            if done[u] {
                continue;
            }
            done[u] = true;
            if self.sinks[u] {
                let mut edges = Vec::new();
                let mut cur = u;
                while let Some((p, e)) = prev[cur] {
                    if let Some(e) = e {
                        edges.push(e);
                    }
                    cur = p;
                }
                return Some((k.cost, edges));
            }
            for &(w, e) in &self.adj[u] {
                if !self.allowed[w] || done[w] {
                    continue;
                }
                let (c, g) = match e {
                    Some(e) => (cost[e], len[e]),
                    None => (0.0, 0.0),
                };
                let nk = Key {
                    cost: k.cost + c,
                    geo: k.geo + g,
                    hops: k.hops + 1,
                    v: w,
                };
                if nk.better(&best[w]) {
                    best[w] = nk;
                    prev[w] = Some((u, e));
                    heap.push(nk);
                }
            }
        }
        None
    }
}

impl Oracle {
    fn most_violated(&self, cost: &[f64], len: &[f64]) -> Option<(f64, Sparse)> {
        match self {
            Oracle::Explicit(curves) => {
                let mut best: Option<(f64, usize)> = None;
                for (k, c) in curves.iter().enumerate() {
                    let l = fsum(c.iter().map(|&(e, a)| a / len[e] * cost[e]));
                    if best.is_none_or(|(b, _)| l < b) {
                        best = Some((l, k));
                    }
                }
                best.map(|(l, k)| (l, curves[k].clone()))
            }
            Oracle::Walk(w) => w
                .shortest(cost, len)
                .map(|(c, edges)| (c, to_sparse(edges.into_iter(), len))),
        }
    }
}

/// Density edge carried by each source edge under `map_edge`.
fn walk_for(
    space: &Space,
    e: &[usize],
    f: &[usize],
    within: &[usize],
    map_edge: impl Fn(usize) -> Option<usize>,
) -> Walk {
    let n = space.n();
    let mut adj = vec![Vec::new(); n];
    for (k, edge) in space.edges().iter().enumerate() {
        let d = map_edge(k);
        adj[edge.u].push((edge.v, d));
        adj[edge.v].push((edge.u, d));
    }
    for a in &mut adj {
        a.sort_by_key(|&(w, d)| (w, d));
    }
    let mask = |set: &[usize]| {
        let mut m = vec![false; n];
        for &v in set {
            m[v] = true;
        }
        m
    };
    Walk {
        adj,
        sources: mask(e),
        sinks: mask(f),
        allowed: mask(within),
    }
}

/// Dual coordinate ascent state over the active curve set.
struct Dual<'a> {
    p: f64,
    q: f64,
    c: &'a [f64],
    s: Vec<f64>,
    rho: Vec<f64>,
    curves: Vec<Sparse>,
    lambda: Vec<f64>,
}

impl<'a> Dual<'a> {
    fn new(p: f64, c: &'a [f64]) -> Self {
        Self {
            p,
            q: 1.0 / (p - 1.0),
            c,
            s: vec![0.0; c.len()],
            rho: vec![0.0; c.len()],
            curves: Vec::new(),
            lambda: Vec::new(),
        }
    }

    #[inline]
    fn rho_of(&self, e: usize, s: f64) -> f64 {
        if s <= 0.0 {
            0.0
        } else {
            (s / (self.p * self.c[e])).powf(self.q)
        }
    }

    fn length(&self, k: usize) -> f64 {
        fsum(self.curves[k].iter().map(|&(e, a)| a * self.rho[e]))
    }

    /// Exact maximization of the dual along coordinate `k`.
    fn update(&mut self, k: usize) {
        let old = self.lambda[k];
        let curve = &self.curves[k];
        let base: Vec<f64> = curve.iter().map(|&(e, a)| self.s[e] - old * a).collect();
        let h = |t: f64| -> f64 {
            fsum(
                curve
                    .iter()
                    .zip(&base)
                    .map(|(&(e, a), &b)| a * self.rho_of(e, (b + t * a).max(0.0))),
            ) - 1.0
        };
        let t = if h(0.0) >= 0.0 {
            0.0
        } else if (self.p - 2.0).abs() < 1e-15 {
            // ρ is linear in λ: closed-form projection.
            let slope: f64 = fsum(curve.iter().map(|&(e, a)| a * a / (2.0 * self.c[e])));
            let at0 = h(0.0) + 1.0;
            (1.0 - at0) / slope
        } else {
            let dh = |t: f64| -> f64 {
                fsum(curve.iter().zip(&base).map(|(&(e, a), &b)| {
                    let s = (b + t * a).max(0.0);
                    if s <= 0.0 {
                        return 0.0;
                    }
                    let pc = self.p * self.c[e];
                    a * a * self.q * (s / pc).powf(self.q - 1.0) / pc
                }))
            };
            let mut lo = 0.0;
            let mut hi = old.max(1e-300);
            while h(hi) < 0.0 {
                lo = hi;
                hi *= 2.0;
                if !hi.is_finite() {
                    break;
                }
            }
            let mut t = old.clamp(lo, hi);
            for _ in 0..200 {
                let v = h(t);
                if v.abs() <= 1e-15 {
                    break;
                }
                if v < 0.0 {
                    lo = t;
                } else {
                    hi = t;
                }
                let d = dh(t);
                let mut next = if d > 0.0 { t - v / d } else { f64::NAN };
                if !(next > lo && next < hi) {
                    next = 0.5 * (lo + hi);
                }
                if (hi - lo) <= 1e-16 * hi.abs() {
                    t = next;
                    break;
                }
                t = next;
            }
            t
        };
        let t = t.max(0.0);
        self.lambda[k] = t;
        for (&(e, a), &b) in curve.iter().zip(&base) {
            let s = (b + t * a).max(0.0);
            self.s[e] = s;
        }
        for &(e, _) in &self.curves[k].clone() {
            self.rho[e] = self.rho_of(e, self.s[e]);
        }
    }

    fn energy(&self) -> f64 {
        fsum(self.rho.iter().zip(self.c).map(|(r, c)| c * r.powf(self.p)))
    }

    fn dual_value(&self) -> f64 {
        fsum(self.lambda.iter().copied()) - (self.p - 1.0) * self.energy()
    }

    /// KKT violation over the active set.
    fn violation(&self) -> f64 {
        (0..self.curves.len())
            .map(|k| {
                let l = self.length(k);
                if self.lambda[k] > 0.0 {
                    (1.0 - l).abs()
                } else {
                    (1.0 - l).max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }
}

fn solve(
    c_all: &[f64],
    len: &[f64],
    oracle: &Oracle,
    p: f64,
    weight: &str,
    opts: SolverOptions,
) -> Result<ModulusResult> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::InvalidArgument("p must be a real number > 1".into()));
    }
    let m = c_all.len();
    // Zero-weight edges are free: ρ_e = 1/len_e makes every curve through
    // them admissible at no cost, so the search treats them as blocked.
    let free: Vec<bool> = c_all.iter().map(|&c| c <= 0.0).collect();
    let c: Vec<f64> = c_all
        .iter()
        .map(|&c| if c > 0.0 { c } else { 1.0 })
        .collect();
    let mut dual = Dual::new(p, &c);
    let inner_tol = opts.tol * 1e-3;
    let mut iterations = 0;
    let mut empty = false;
    let mut converged = false;
    let mut min_len;
    let cost = |d: &Dual| -> Vec<f64> {
        (0..m)
            .map(|e| {
                if free[e] {
                    f64::INFINITY
                } else {
                    d.rho[e] * len[e]
                }
            })
            .collect()
    };
    loop {
        let found = oracle.most_violated(&cost(&dual), len);
        let Some((l, curve)) = found else {
            empty = dual.curves.is_empty();
            min_len = f64::INFINITY;
            converged = true;
            break;
        };
        min_len = l;
        if l.is_infinite() {
            converged = true;
            break;
        }
        let energy = dual.energy();
        if l >= 1.0 - opts.tol && l > 0.0 {
            let value = energy / l.powf(p);
            let gap = value - dual.dual_value();
            if gap <= 0.1 * opts.tol * value.max(1.0) {
                converged = true;
                break;
            }
        }
        if iterations >= opts.max_iter {
            break;
        }
        if l < 1.0 - inner_tol && !dual.curves.contains(&curve) {
            dual.curves.push(curve);
            dual.lambda.push(0.0);
        }
        // Sweeps over the active set.
        let mut sweeps = 0;
        loop {
            for k in 0..dual.curves.len() {
                dual.update(k);
            }
            iterations += 1;
            sweeps += 1;
            if dual.violation() <= inner_tol || iterations >= opts.max_iter || sweeps >= 10_000 {
                break;
            }
        }
    }
    let mut density: Vec<f64> = (0..m)
        .map(|e| {
            if free[e] {
                1.0 / len[e]
            } else if min_len.is_finite() && min_len > 0.0 {
                dual.rho[e] / min_len
            } else {
                dual.rho[e]
            }
        })
        .collect();
    let (value, dual_value) = if empty || min_len.is_infinite() {
        if empty {
            density.iter_mut().for_each(|d| *d = 0.0);
        }
        (0.0, 0.0)
    } else {
        let energy = fsum(
            (0..m)
                .filter(|&e| !free[e])
                .map(|e| c[e] * density[e].powf(p)),
        );
        (energy, dual.dual_value())
    };
    Ok(ModulusResult {
        value,
        density,
        p,
        weight: weight.to_string(),
        iterations,
        gap: (value - dual_value).max(0.0),
        dual: dual_value,
        curves_generated: dual.curves.len(),
        empty_family: empty,
        converged,
    })
}

/// `Mod_p(Γ)` on `space` with densities on its edges.
pub fn modulus(
    space: &Space,
    family: &CurveFamily,
    p: f64,
    weight: &Weight,
    opts: SolverOptions,
) -> Result<ModulusResult> {
    family.validate(space)?;
    let c = energy_coefficients(space, weight)?;
    let len: Vec<f64> = space.edges().iter().map(|e| e.len).collect();
    let oracle = match family {
        CurveFamily::Explicit(curves) => Oracle::Explicit(
            curves
                .iter()
                .map(|cv| to_sparse(cv.edges().iter().copied(), &len))
                .collect(),
        ),
        CurveFamily::Connecting { e, f, within } => {
            Oracle::Walk(walk_for(space, e, f, within, Some))
        }
    };
    solve(&c, &len, &oracle, p, weight.label(), opts)
}

/// `Mod_p(f(Γ))` for a family `Γ` in the source: densities live on target
/// edges and a source curve is measured through its image.
pub fn image_modulus(
    f: &VertexMap,
    family: &CurveFamily,
    p: f64,
    target_weight: &Weight,
    opts: SolverOptions,
) -> Result<ModulusResult> {
    family.validate(f.source())?;
    let tgt = f.target();
    let c = energy_coefficients(tgt, target_weight)?;
    let len: Vec<f64> = tgt.edges().iter().map(|e| e.len).collect();
    let src_edges = f.source().edges();
    let map_edge = |k: usize| {
        let e = src_edges[k];
        let (a, b) = (f.apply(e.u), f.apply(e.v));
        if a == b {
            None
        } else {
            tgt.edge_between(a, b)
        }
    };
    let oracle = match family {
        CurveFamily::Explicit(curves) => Oracle::Explicit(
            curves
                .iter()
                .map(|cv| to_sparse(cv.edges().iter().filter_map(|&k| map_edge(k)), &len))
                .collect(),
        ),
        CurveFamily::Connecting { e, f: ff, within } => {
            Oracle::Walk(walk_for(f.source(), e, ff, within, map_edge))
        }
    };
    if let Oracle::Explicit(curves) = &oracle {
        if curves.iter().any(|c| c.is_empty()) {
            return Err(Error::InvalidCurve(
                "a curve has a constant image; its image family has no admissible density".into(),
            ));
        }
    }
    solve(&c, &len, &oracle, p, target_weight.label(), opts)
}

/// Reference solver for small explicit families: primal log-barrier method
/// with dense Newton steps, cross-checked for `p = 2` by enumerating active
/// sets of the KKT system. At most 20 edges and 50 curves.
pub fn modulus_bruteforce(space: &Space, curves: &[Curve], p: f64, weight: &Weight) -> Result<f64> {
    let c_all = energy_coefficients(space, weight)?;
    let len: Vec<f64> = space.edges().iter().map(|e| e.len).collect();
    if curves.len() > 50 {
        return Err(Error::TooLarge {
            what: "brute-force modulus curves",
            size: curves.len(),
            cap: 50,
            hint: "use the constraint-generation solver",
        });
    }
    if curves.iter().any(|c| c.edges().is_empty()) {
        return Err(Error::InvalidCurve(
            "constant curve has no admissible density".into(),
        ));
    }
    // Curves through free edges are satisfied at no cost.
    let rows: Vec<Sparse> = curves
        .iter()
        .map(|cv| to_sparse(cv.edges().iter().copied(), &len))
        .filter(|s| s.iter().all(|&(e, _)| c_all[e] > 0.0))
        .collect();
    let mut used: Vec<usize> = rows.iter().flatten().map(|&(e, _)| e).collect();
    used.sort_unstable();
    used.dedup();
    if used.len() > 20 {
        return Err(Error::TooLarge {
            what: "brute-force modulus edges",
            size: used.len(),
            cap: 20,
            hint: "use the constraint-generation solver",
        });
    }
    if rows.is_empty() {
        return Ok(0.0);
    }
    let k = used.len();
    let pos = |e: usize| used.binary_search(&e).expect("used edge");
    let a = DMatrix::from_fn(rows.len(), k, |i, j| {
        rows[i]
            .iter()
            .find(|&&(e, _)| pos(e) == j)
            .map_or(0.0, |&(_, a)| a)
    });
    let c = DVector::from_iterator(k, used.iter().map(|&e| c_all[e]));
    let barrier = barrier_solve(&a, &c, p);
    if (p - 2.0).abs() < 1e-15 && rows.len() <= 12 {
        if let Some(exact) = active_set_p2(&a, &c) {
            let scale = exact.abs().max(1.0);
            if (exact - barrier).abs() > 1e-7 * scale {
                return Err(Error::Precondition(format!(
                    "brute-force cross-check disagrees: barrier {barrier}, active set {exact}"
                )));
            }
            return Ok(exact);
        }
    }
    Ok(barrier)
}

fn barrier_solve(a: &DMatrix<f64>, c: &DVector<f64>, p: f64) -> f64 {
    let (m, k) = a.shape();
    let energy = |r: &DVector<f64>| (0..k).map(|j| c[j] * r[j].powf(p)).sum::<f64>();
    // Strictly feasible start.
    let row_min = (0..m).map(|i| a.row(i).sum()).fold(f64::INFINITY, f64::min);
    let mut r = DVector::from_element(k, 2.0 / row_min);
    let mut t = 1.0;
    let phi = |r: &DVector<f64>, t: f64| -> f64 {
        let g = a * r;
        if r.iter().any(|&x| x <= 0.0) || g.iter().any(|&x| x <= 1.0) {
            return f64::INFINITY;
        }
        t * energy(r)
            - g.iter().map(|x| (x - 1.0).ln()).sum::<f64>()
            - r.iter().map(|x| x.ln()).sum::<f64>()
    };
    loop {
        for _ in 0..200 {
            let g = a * &r;
            let slack = g.map(|x| x - 1.0);
            let mut grad =
                DVector::from_fn(k, |j, _| t * p * c[j] * r[j].powf(p - 1.0) - 1.0 / r[j]);
            let mut hess = DMatrix::from_fn(k, k, |i, j| {
                if i == j {
                    t * p * (p - 1.0) * c[j] * r[j].powf(p - 2.0) + 1.0 / (r[j] * r[j])
                } else {
                    0.0
                }
            });
            for i in 0..m {
                let row = a.row(i).transpose();
                grad -= &row / slack[i];
                hess += &row * row.transpose() / (slack[i] * slack[i]);
            }
            let Some(chol) = hess.clone().cholesky() else {
                break;
            };
            let step = -chol.solve(&grad);
            let dec = -grad.dot(&step);
            if dec / 2.0 <= 1e-14 {
                break;
            }
            let f0 = phi(&r, t);
            let mut s = 1.0;
            loop {
                let cand = &r + &step * s;
                let fc = phi(&cand, t);
                if fc <= f0 - 0.25 * s * dec {
                    r = cand;
                    break;
                }
                s *= 0.5;
                if s < 1e-20 {
                    break;
                }
            }
            if s < 1e-20 {
                break;
            }
        }
        let e = energy(&r);
        if (m + k) as f64 / t <= 1e-12 * e.max(1e-300) {
            return e;
        }
        t *= 8.0;
        if t > 1e30 {
            return e;
        }
    }
}

/// Exact `p = 2` solution by enumerating active constraint sets: with
/// `ρ = D Aᵀλ`, `D = diag(1/(2c))`, a KKT point solves `A_S D A_Sᵀ λ = 1`.
fn active_set_p2(a: &DMatrix<f64>, c: &DVector<f64>) -> Option<f64> {
    let (m, k) = a.shape();
    let d = DVector::from_fn(k, |j, _| 1.0 / (2.0 * c[j]));
    let mut best: Option<f64> = None;
    for mask in 1u32..(1u32 << m) {
        let rows: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
        let a_s = DMatrix::from_fn(rows.len(), k, |i, j| a[(rows[i], j)]);
        let mm = &a_s * DMatrix::from_diagonal(&d) * a_s.transpose();
        let Some(lu) = mm
            .clone()
            .full_piv_lu()
            .solve(&DVector::from_element(rows.len(), 1.0))
        else {
            continue;
        };
        if (&mm * &lu - DVector::from_element(rows.len(), 1.0)).amax() > 1e-9 {
            continue;
        }
        if lu.iter().any(|&l| l < -1e-12) {
            continue;
        }
        let rho = DVector::from_fn(k, |j, _| d[j] * (a_s.transpose() * &lu)[j]);
        if (a * &rho).iter().any(|&g| g < 1.0 - 1e-9) {
            continue;
        }
        let e: f64 = (0..k).map(|j| c[j] * rho[j] * rho[j]).sum();
        best = Some(best.map_or(e, |b: f64| b.min(e)));
    }
    best
}

/// Connecting family between the shells `d ≤ r` and `d ≥ s` around `center`,
/// inside the closed ball of the smallest realized radius `≥ s`.
pub fn annulus_family(space: &Space, center: usize, r: f64, s: f64) -> Result<Option<CurveFamily>> {
    space.check_vertex(center)?;
    if r >= s - TOL {
        return Ok(None);
    }
    let row = space.dist().row(center);
    let s_hat = space.radii_from(center).into_iter().find(|&t| t >= s - TOL);
    let Some(s_hat) = s_hat else {
        return Ok(None);
    };
    let within: VertexSet = (0..space.n()).filter(|&v| row[v] <= s_hat + TOL).collect();
    let e: VertexSet = (0..space.n()).filter(|&v| row[v] <= r + TOL).collect();
    let f: VertexSet = within
        .iter()
        .copied()
        .filter(|&v| row[v] >= s - TOL)
        .collect();
    if e.is_empty() || f.is_empty() {
        return Ok(None);
    }
    Ok(Some(CurveFamily::connecting(e, f, within)))
}

pub fn annulus_modulus(
    space: &Space,
    center: usize,
    r: f64,
    s: f64,
    p: f64,
    weight: &Weight,
    opts: SolverOptions,
) -> Result<ModulusResult> {
    match annulus_family(space, center, r, s)? {
        Some(fam) => modulus(space, &fam, p, weight, opts),
        None => Ok(ModulusResult {
            value: 0.0,
            density: vec![0.0; space.edges().len()],
            p,
            weight: weight.label().into(),
            iterations: 0,
            gap: 0.0,
            dual: 0.0,
            curves_generated: 0,
            empty_family: true,
            converged: true,
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoewnerPoint {
    /// `dist(E, F) / min(diam E, diam F)`; infinite for a point continuum.
    pub zeta: f64,
    pub modulus: f64,
    pub empty_family: bool,
}

/// `(ζ(E, F), Mod_Q(Γ(E, F, X)))` for each pair of continua.
pub fn loewner_profile(
    space: &Space,
    pairs: &[(VertexSet, VertexSet)],
    q: f64,
    weight: &Weight,
    opts: SolverOptions,
) -> Result<Vec<LoewnerPoint>> {
    let all: VertexSet = (0..space.n()).collect();
    let rows = par::map_slice(pairs, |(e, f)| -> Result<LoewnerPoint> {
        let mut dist = f64::INFINITY;
        for &a in e {
            for &b in f {
                dist = dist.min(space.d(a, b));
            }
        }
        let dmin = space.diameter(e)?.min(space.diameter(f)?);
        let zeta = if dmin > 0.0 {
            dist / dmin
        } else {
            f64::INFINITY
        };
        let res = modulus(
            space,
            &CurveFamily::connecting(e.clone(), f.clone(), all.clone()),
            q,
            weight,
            opts,
        )?;
        Ok(LoewnerPoint {
            zeta,
            modulus: res.value,
            empty_family: res.empty_family,
        })
    });
    rows.into_iter().collect()
}

/// `g_e = |u(a) − u(b)| / len_e`, the smallest edge density that is an upper
/// gradient of `u`.
pub fn minimal_upper_gradient(space: &Space, u: &[f64]) -> Result<Vec<f64>> {
    if u.len() != space.n() {
        return Err(Error::InvalidArgument(
            "one value per vertex required".into(),
        ));
    }
    Ok(space
        .edges()
        .iter()
        .map(|e| (u[e.u] - u[e.v]).abs() / e.len)
        .collect())
}

/// `|u(end) − u(start)| ≤ ∫_γ g ds` along a curve.
pub fn upper_gradient_holds(space: &Space, u: &[f64], g: &[f64], curve: &Curve) -> bool {
    let vs = curve.vertices();
    let lhs = (u[*vs.last().expect("nonempty")] - u[vs[0]]).abs();
    let rhs: f64 = curve
        .edges()
        .iter()
        .map(|&e| g[e] * space.edges()[e].len)
        .sum();
    lhs <= rhs + TOL
}

/// A family in the source used by the modulus certificates, with the open
/// set `Ω0` it lives in (defaults to the whole source).
#[derive(Debug, Clone, PartialEq)]
pub struct FamilySample {
    pub label: String,
    pub family: CurveFamily,
    pub omega: Option<VertexSet>,
}

fn ratio_certificate(
    name: &str,
    ratios: Vec<Result<(f64, bool)>>,
    samples: &[FamilySample],
    k: Option<f64>,
) -> Result<Certificate> {
    let mut cert = Certificate::new(name);
    let mut worst: Option<(f64, usize)> = None;
    for (i, r) in ratios.into_iter().enumerate() {
        let (ratio, empty) = r?;
        if empty {
            cert.flag(format!("empty family: {}", samples[i].label));
            continue;
        }
        cert.note(format!("{}: {ratio}", samples[i].label));
        if worst.is_none_or(|(w, _)| ratio > w) {
            worst = Some((ratio, i));
        }
    }
    if let Some((w, i)) = worst {
        cert.constant = Some(w);
        cert.witness = Some(Witness::Family {
            label: samples[i].label.clone(),
        });
        if let Some(k) = k {
            cert.pass = w <= k + 1e-12;
        }
    }
    Ok(cert)
}

/// Number of source edges inside `omega` lying over each target edge.
pub fn edge_multiplicities(f: &VertexMap, omega: &[usize]) -> Vec<usize> {
    let mut inside = vec![false; f.source().n()];
    for &x in omega {
        inside[x] = true;
    }
    let mut out = vec![0; f.target().edges().len()];
    for e in f.source().edges() {
        if inside[e.u] && inside[e.v] {
            if let Some(t) = f.target().edge_between(f.apply(e.u), f.apply(e.v)) {
                out[t] += 1;
            }
        }
    }
    out
}

/// `K̂_O = max Mod_Q(Γ) / min_ρ Σ N(e, f, Ω0)·ρ_e^Q·c_e` over samples, with
/// `ρ` admissible for `f(Γ)` and `N(e, f, Ω0)` counting source edges over
/// `e`. Densities live on edges, so the multiplicity is taken there too.
pub fn ko_certificate(
    f: &VertexMap,
    samples: &[FamilySample],
    q: f64,
    mu: &[f64],
    nu: &[f64],
    k: Option<f64>,
    opts: SolverOptions,
) -> Result<Certificate> {
    let ratios = par::map_slice(samples, |s| -> Result<(f64, bool)> {
        let omega = s.omega.clone().unwrap_or_else(|| f.all_source());
        let mult = edge_multiplicities(f, &omega);
        let c: Vec<f64> = f
            .target()
            .edges()
            .iter()
            .zip(&mult)
            .map(|(e, &n)| 0.5 * (nu[e.u] + nu[e.v]) * n as f64)
            .collect();
        let src = modulus(f.source(), &s.family, q, &Weight::Vertex(mu.to_vec()), opts)?;
        let img = image_modulus(f, &s.family, q, &Weight::Coefficient(c), opts)?;
        if src.empty_family {
            return Ok((0.0, true));
        }
        Ok((src.value / img.value, false))
    });
    let mut cert = ratio_certificate("k_o", ratios, samples, k)?;
    if !f.target().edges_are_geodesic() {
        cert.flag("target edges not geodesic");
    }
    Ok(cert)
}

/// Poletsky's inequality: `K̂_I = max Mod_Q(f(Γ)) / Mod_Q(Γ)`.
pub fn ki_certificate(
    f: &VertexMap,
    samples: &[FamilySample],
    q: f64,
    mu: &[f64],
    nu: &[f64],
    k: Option<f64>,
    opts: SolverOptions,
) -> Result<Certificate> {
    let ratios = par::map_slice(samples, |s| -> Result<(f64, bool)> {
        let src = modulus(f.source(), &s.family, q, &Weight::Vertex(mu.to_vec()), opts)?;
        let img = image_modulus(f, &s.family, q, &Weight::Vertex(nu.to_vec()), opts)?;
        if src.empty_family {
            return Ok((0.0, true));
        }
        Ok((img.value / src.value, false))
    });
    ratio_certificate("k_i", ratios, samples, k)
}

/// Väisälä's inequality `Mod_Q(Γ') ≤ (K/m)·Mod_Q(Γ)` for explicit families
/// with a supplied lift structure: `lifts[i]` lists `m` curves of `Γ`
/// (indices into `gamma`) whose images are subcurves of `gamma_prime[i]`.
#[allow(clippy::too_many_arguments)]
pub fn vaisala_certificate(
    f: &VertexMap,
    gamma: &[Curve],
    gamma_prime: &[Curve],
    lifts: &[Vec<usize>],
    m: usize,
    q: f64,
    k: f64,
    mu: &[f64],
    nu: &[f64],
    opts: SolverOptions,
) -> Result<Certificate> {
    if lifts.len() != gamma_prime.len() {
        return Err(Error::Precondition(
            "one lift list per curve of Γ' required".into(),
        ));
    }
    for (i, ls) in lifts.iter().enumerate() {
        if ls.len() != m {
            return Err(Error::Precondition(format!(
                "curve {i} of Γ' has {} lifts, expected {m}",
                ls.len()
            )));
        }
        let target: Vec<usize> = gamma_prime[i].vertices().to_vec();
        let mut offsets = Vec::with_capacity(m);
        for &j in ls {
            let g = gamma
                .get(j)
                .ok_or_else(|| Error::Precondition(format!("lift index {j} out of range")))?;
            let img: Vec<usize> = g.vertices().iter().map(|&v| f.apply(v)).collect();
            let off = (0..=target.len().saturating_sub(img.len()))
                .find(|&o| target[o..o + img.len()] == img[..])
                .ok_or_else(|| {
                    Error::Precondition(format!("lift {j} is not a subcurve lift of Γ' curve {i}"))
                })?;
            offsets.push((off, g.vertices().to_vec()));
        }
        // Distinct lifts may meet at isolated parameters but never along a
        // shared parameter interval.
        for a in 0..m {
            for b in (a + 1)..m {
                let (oa, va) = &offsets[a];
                let (ob, vb) = &offsets[b];
                let at = |o: usize, v: &Vec<usize>, s: usize| -> Option<usize> {
                    (s >= o && s - o < v.len()).then(|| v[s - o])
                };
                for s in 0..target.len().saturating_sub(1) {
                    let same = |t: usize| match (at(*oa, va, t), at(*ob, vb, t)) {
                        (Some(x), Some(y)) => x == y,
                        _ => false,
                    };
                    if same(s) && same(s + 1) {
                        return Err(Error::Precondition(format!(
                            "lifts {} and {} of Γ' curve {i} coincide on a parameter interval",
                            lifts[i][a], lifts[i][b]
                        )));
                    }
                }
            }
        }
    }
    let tgt = modulus(
        f.target(),
        &CurveFamily::Explicit(gamma_prime.to_vec()),
        q,
        &Weight::Vertex(nu.to_vec()),
        opts,
    )?;
    let src = modulus(
        f.source(),
        &CurveFamily::Explicit(gamma.to_vec()),
        q,
        &Weight::Vertex(mu.to_vec()),
        opts,
    )?;
    let ratio = m as f64 * tgt.value / src.value;
    let mut cert = Certificate::new("vaisala").with_constant(ratio);
    cert.note(format!("Mod(Γ') = {}, Mod(Γ) = {}", tgt.value, src.value));
    if ratio > k + opts.tol {
        cert.fail(Witness::Family {
            label: "Γ'".into()
        });
    }
    Ok(cert)
}

/// `K̂ = max |∇f|(x)^Q / J_f(x)` over `μ`-positive vertices, with
/// `|∇f|(x)` the largest edge slope at `x`. Vertices in `exclude` are
/// reported separately and not counted.
pub fn analytic_qr_constant(
    f: &VertexMap,
    mu: &[f64],
    nu: &[f64],
    q: f64,
    exclude: &[usize],
    k: Option<f64>,
) -> Result<Certificate> {
    let src = f.source();
    let mut cert = Certificate::new("analytic_qr");
    let mut worst: f64 = 0.0;
    let mut at = None;
    for x in 0..src.n() {
        if mu[x] <= 0.0 {
            continue;
        }
        let grad = src
            .neighbors(x)
            .iter()
            .map(|&(w, e)| f.image_dist(x, w) / src.edges()[e].len)
            .fold(0.0, f64::max);
        let jac = nu[f.apply(x)] / mu[x];
        let val = if jac > 0.0 {
            grad.powf(q) / jac
        } else if grad > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        if exclude.contains(&x) {
            cert.note(format!("excluded {}: {val}", src.id(x)));
            continue;
        }
        if val > worst || at.is_none() {
            worst = val;
            at = Some(x);
        }
    }
    cert.constant = Some(worst);
    if let Some(x) = at {
        cert.witness = Some(Witness::Vertex {
            vertex: src.id(x).into(),
        });
    }
    if let Some(k) = k {
        cert.pass = worst <= k + 1e-12;
    }
    Ok(cert)
}

/// For an exact factorization `f = π∘g`, `Mod_Q(Γ)` in the pullback space is
/// bounded by the energy of any admissible density of `π(Γ)` weighted by
/// `N(y, π, Ω)·ν`; checked per sample with the solver's optimal density.
pub fn projection_modulus_check(
    fact: &Factorization,
    samples: &[FamilySample],
    q: f64,
    opts: SolverOptions,
) -> Result<Certificate> {
    let pi = &fact.projection;
    let mut cert = ko_certificate(
        pi,
        samples,
        q,
        pi.source().masses(),
        pi.target().masses(),
        Some(1.0 + 10.0 * opts.tol),
        opts,
    )?;
    cert.name = "projection_modulus".into();
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators;

    fn opts() -> SolverOptions {
        SolverOptions {
            tol: 1e-9,
            max_iter: 100_000,
        }
    }

    #[test]
    fn single_curve() {
        let p = generators::path(3);
        let c = Curve::new(&p, vec![0, 1, 2]).unwrap();
        let fam = CurveFamily::Explicit(vec![c.clone()]);
        let r = modulus(&p, &fam, 2.0, &Weight::Unit, opts()).unwrap();
        assert!((r.value - 0.5).abs() < 1e-9, "{}", r.value);
        let b = modulus_bruteforce(&p, &[c], 2.0, &Weight::Unit).unwrap();
        assert!((b - 0.5).abs() < 1e-9, "{b}");
    }

    #[test]
    fn parallel_single_edges() {
        // Star: center joined to 4 leaves; curves are the 4 single edges.
        let edges = (1..5)
            .map(|i| crate::space::Edge {
                u: 0,
                v: i,
                len: 1.0,
            })
            .collect();
        let s = Space::from_graph(
            (0..5).map(|i| format!("v{i}")).collect(),
            vec![1.0; 5],
            edges,
        )
        .unwrap();
        let curves: Vec<Curve> = (1..5)
            .map(|i| Curve::new(&s, vec![0, i]).unwrap())
            .collect();
        for p in [1.5, 2.0, 3.0] {
            let r = modulus(
                &s,
                &CurveFamily::Explicit(curves.clone()),
                p,
                &Weight::Unit,
                opts(),
            )
            .unwrap();
            assert!((r.value - 4.0).abs() < 1e-8, "p {p}: {}", r.value);
        }
    }

    #[test]
    fn empty_family() {
        let p = generators::path(4);
        let fam = CurveFamily::connecting(vec![0], vec![3], vec![0, 1, 3]);
        let r = modulus(&p, &fam, 2.0, &Weight::Unit, opts()).unwrap();
        assert!(r.empty_family);
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn shared_edge_kkt() {
        // Two curves a-b-c and a-b-d sharing edge a-b, unit lengths, p = 2.
        // By symmetry ρ_ab = x, ρ_bc = ρ_bd = 1 − x; energy x² + 2(1−x)² is
        // minimized at x = 2/3, value 2/3.
        let edges = vec![
            crate::space::Edge {
                u: 0,
                v: 1,
                len: 1.0,
            },
            crate::space::Edge {
                u: 1,
                v: 2,
                len: 1.0,
            },
            crate::space::Edge {
                u: 1,
                v: 3,
                len: 1.0,
            },
        ];
        let s = Space::from_graph(
            (0..4).map(|i| format!("v{i}")).collect(),
            vec![1.0; 4],
            edges,
        )
        .unwrap();
        let curves = vec![
            Curve::new(&s, vec![0, 1, 2]).unwrap(),
            Curve::new(&s, vec![0, 1, 3]).unwrap(),
        ];
        let r = modulus(
            &s,
            &CurveFamily::Explicit(curves.clone()),
            2.0,
            &Weight::Unit,
            opts(),
        )
        .unwrap();
        assert!((r.value - 2.0 / 3.0).abs() < 1e-9);
        let b = modulus_bruteforce(&s, &curves, 2.0, &Weight::Unit).unwrap();
        assert!((b - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn length_scaling() {
        let a = generators::path(4);
        let edges2: Vec<_> = a
            .edges()
            .iter()
            .map(|e| crate::space::Edge {
                len: 2.0 * e.len,
                ..*e
            })
            .collect();
        let b = Space::from_graph(a.ids().to_vec(), a.masses().to_vec(), edges2).unwrap();
        for p in [1.5, 2.0, 3.0] {
            let fam = CurveFamily::connecting(vec![0], vec![3], vec![0, 1, 2, 3]);
            let ma = modulus(&a, &fam, p, &Weight::Unit, opts()).unwrap().value;
            let mb = modulus(&b, &fam, p, &Weight::Unit, opts()).unwrap().value;
            assert!((mb - 2f64.powf(1.0 - p) * ma).abs() < 1e-8);
        }
    }

    #[test]
    fn upper_gradient_examples() {
        let c = generators::cycle(5);
        assert_eq!(minimal_upper_gradient(&c, &[3.0; 5]).unwrap(), vec![0.0; 5]);
        let u: Vec<f64> = (0..5).map(|v| c.d(0, v)).collect();
        assert!(minimal_upper_gradient(&c, &u)
            .unwrap()
            .iter()
            .all(|&g| g <= 1.0));
    }

    #[test]
    fn identity_certificates_are_one() {
        let g = generators::grid(4, 4).unwrap();
        let id = generators::identity(&g);
        let samples = vec![FamilySample {
            label: "sides".into(),
            family: CurveFamily::connecting(
                vec![0, 4, 8, 12],
                vec![3, 7, 11, 15],
                (0..16).collect(),
            ),
            omega: None,
        }];
        let m = g.masses();
        let ko = ko_certificate(&id, &samples, 2.0, m, m, Some(1.0), opts()).unwrap();
        assert_eq!(ko.constant, Some(1.0));
        let ki = ki_certificate(&id, &samples, 2.0, m, m, Some(1.0), opts()).unwrap();
        assert_eq!(ki.constant, Some(1.0));
    }

    #[test]
    fn vaisala_cycle_cover() {
        let n = 5;
        let f = generators::cycle_cover(n, 2).unwrap();
        let loop_t = Curve::new(f.target(), (0..=n).map(|i| i % n).collect()).unwrap();
        let lift0 = Curve::new(f.source(), (0..=n).collect()).unwrap();
        let lift1 = Curve::new(f.source(), (n..=2 * n).map(|i| i % (2 * n)).collect()).unwrap();
        let mu = f.source().masses().to_vec();
        let nu = f.target().masses().to_vec();
        let cert = vaisala_certificate(
            &f,
            &[lift0.clone(), lift1],
            &[loop_t.clone()],
            &[vec![0, 1]],
            2,
            2.0,
            1.0,
            &mu,
            &nu,
            opts(),
        )
        .unwrap();
        assert!(cert.pass);
        assert!((cert.constant.unwrap() - 1.0).abs() < 1e-6);
        let dup = vaisala_certificate(
            &f,
            &[lift0.clone(), lift0],
            &[loop_t],
            &[vec![0, 1]],
            2,
            2.0,
            1.0,
            &mu,
            &nu,
            opts(),
        );
        assert!(matches!(dup, Err(Error::Precondition(_))));
    }

    #[test]
    fn analytic_constant_examples() {
        let c = generators::cycle(6);
        let id = generators::identity(&c);
        let cert = analytic_qr_constant(&id, c.masses(), c.masses(), 2.0, &[], Some(1.0)).unwrap();
        assert_eq!(cert.constant, Some(1.0));
        let st = generators::stretch_edge(&generators::path(4), 1, 3.0).unwrap();
        let m = st.source().masses();
        let cert = analytic_qr_constant(&st, m, m, 2.0, &[], None).unwrap();
        assert_eq!(cert.constant, Some(9.0));
    }
}
