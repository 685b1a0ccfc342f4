//! Bi-Lipschitz embedding `ψ = f × φ: X → Y × ℝ^{c·(N−1)}` of the domain of a
//! finite-multiplicity map, built from per-level radii, nets, colour classes
//! and fiber labels.

use serde::Serialize;

use crate::certificate::{Certificate, Witness};
use crate::covering::VertexMap;
use crate::error::{Error, Result};
use crate::par;
use crate::pullback::{factorize, MetricChoice};
use crate::space::{VertexSet, TOL};

/// `R^k(y)` for every target vertex: a fifth of the smallest target distance
/// `t` such that the preimage of the closed ball `B̄(y, t)` has at most `k`
/// components, i.e. the infimum of the radii `R` for which the preimage of
/// the open ball `B(y, 5R)` does.
pub fn rk_radii(f: &VertexMap, k: usize) -> Vec<f64> {
    let tgt = f.target();
    let src = f.source();
    par::map_range(tgt.n(), |y| {
        for t in tgt.radii_from(y) {
            let mask: Vec<bool> = (0..src.n())
                .map(|x| tgt.d(y, f.apply(x)) <= t + TOL)
                .collect();
            if src.components_of_mask(&mask).len() <= k {
                return t / 5.0;
            }
        }
        f64::INFINITY
    })
}

/// Greedy maximal subset of `{R > 0}` with `d(y, y') ≥ max(R(y), R(y'))/2`,
/// inserted by decreasing radius, then by vertex index.
pub fn build_net(f: &VertexMap, radii: &[f64]) -> Vec<usize> {
    let tgt = f.target();
    let mut order: Vec<usize> = (0..tgt.n()).filter(|&y| radii[y] > 0.0).collect();
    order.sort_by(|&a, &b| radii[b].total_cmp(&radii[a]).then(a.cmp(&b)));
    let mut net: Vec<usize> = Vec::new();
    for y in order {
        if net
            .iter()
            .all(|&z| tgt.d(y, z) >= 0.5 * radii[y].max(radii[z]) - TOL)
        {
            net.push(y);
        }
    }
    net
}

/// Whether the open balls `B(y, R(y))` over the net cover `{R > 0}`.
pub fn net_covers(f: &VertexMap, radii: &[f64], net: &[usize]) -> bool {
    let tgt = f.target();
    (0..tgt.n())
        .filter(|&y| radii[y] > 0.0)
        .all(|y| net.iter().any(|&z| tgt.d(y, z) < radii[z] - TOL))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coloring {
    pub classes: Vec<Vec<usize>>,
    /// `1 +` the largest number of overlapping inflated balls met by a net point.
    pub degree_bound: usize,
}

fn inflated_meet(f: &VertexMap, radii: &[f64], a: usize, b: usize) -> bool {
    let tgt = f.target();
    (0..tgt.n()).any(|z| tgt.d(a, z) < 2.0 * radii[a] - TOL && tgt.d(b, z) < 2.0 * radii[b] - TOL)
}

/// Greedy colouring of the net so that the inflated balls `B(y, 2R(y))` in
/// one class are pairwise disjoint.
pub fn color_net(f: &VertexMap, radii: &[f64], net: &[usize]) -> Coloring {
    let m = net.len();
    let adj: Vec<Vec<bool>> = par::map_range(m, |i| {
        (0..m)
            .map(|j| i != j && inflated_meet(f, radii, net[i], net[j]))
            .collect()
    });
    let mut color = vec![usize::MAX; m];
    let mut classes: Vec<Vec<usize>> = Vec::new();
    let mut degree = 0;
    for i in 0..m {
        degree = degree.max(adj[i].iter().filter(|&&b| b).count());
        let used: Vec<usize> = (0..m)
            .filter(|&j| adj[i][j] && color[j] != usize::MAX)
            .map(|j| color[j])
            .collect();
        let c = (0..).find(|c| !used.contains(c)).expect("free colour");
        color[i] = c;
        if c == classes.len() {
            classes.push(Vec::new());
        }
        classes[c].push(net[i]);
    }
    Coloring {
        classes,
        degree_bound: degree + 1,
    }
}

/// One inflated neighbourhood `2U_x` with its label and radius.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabeledSet {
    pub center: usize,
    pub members: VertexSet,
    pub label: usize,
    pub radius: f64,
}

/// Labels over the fiber of each net point in a class: equal inflated
/// neighbourhoods share a label, distinct ones get `1, 2, …` ordered by their
/// smallest member. One entry per distinct set.
pub fn assign_labels(f: &VertexMap, radii: &[f64], class: &[usize]) -> Result<Vec<LabeledSet>> {
    let mut out = Vec::new();
    for &y in class {
        let r = radii[y];
        let mut sets: Vec<(VertexSet, usize)> = Vec::new();
        for &x in f.fiber(y) {
            let u = f.u_component(x, 2.0 * r)?.members;
            if !sets.iter().any(|(s, _)| *s == u) {
                sets.push((u, x));
            }
        }
        sets.sort_by_key(|(s, _)| s[0]);
        for (i, (members, x)) in sets.into_iter().enumerate() {
            out.push(LabeledSet {
                center: x,
                members,
                label: i + 1,
                radius: r,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Level {
    pub k: usize,
    pub radii: Vec<f64>,
    pub net: Vec<usize>,
    pub covers: bool,
    pub coloring: Coloring,
    /// Labelled sets per colour class.
    pub labels: Vec<Vec<LabeledSet>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddingPlan {
    pub multiplicity: usize,
    /// Colour count used for the coordinate layout.
    pub colors: usize,
    /// Bound on the colour count derived from the doubling constant of `Y`.
    pub doubling_bound: f64,
    pub levels: Vec<Level>,
}

impl EmbeddingPlan {
    pub fn dimension(&self) -> usize {
        self.colors * self.multiplicity.saturating_sub(1)
    }

    /// Coordinate slot of level `k ≥ 1`, class `j ≥ 1`.
    pub fn slot(&self, k: usize, j: usize) -> usize {
        (k - 1) * self.colors + (j - 1)
    }
}

pub fn plan(f: &VertexMap) -> Result<EmbeddingPlan> {
    let n_max = f.fiber_sizes().into_iter().max().unwrap_or(0);
    let mut levels = Vec::new();
    for k in 1..n_max {
        let radii = rk_radii(f, k);
        let net = build_net(f, &radii);
        let covers = net_covers(f, &radii, &net);
        let coloring = color_net(f, &radii, &net);
        let labels = coloring
            .classes
            .iter()
            .map(|c| assign_labels(f, &radii, c))
            .collect::<Result<Vec<_>>>()?;
        levels.push(Level {
            k,
            radii,
            net,
            covers,
            coloring,
            labels,
        });
    }
    let colors = levels
        .iter()
        .map(|l| l.coloring.classes.len())
        .max()
        .unwrap_or(0)
        .max(1);
    // Points whose inflated balls meet a given one lie in a ball of radius
    // 20R/3 and are 3R/14-separated, so `M^s` with `2^s ≥ 280/9` bounds them.
    let m = f.target().doubling_constant().value as f64;
    Ok(EmbeddingPlan {
        multiplicity: n_max,
        colors,
        doubling_bound: m.powi(5),
        levels,
    })
}

/// `φ(x)`: coordinate `(k, j)` is `Σ η·min{d(x, X∖2U), R}` over the labelled
/// sets of class `j` at level `k`.
pub fn phi(f: &VertexMap, plan: &EmbeddingPlan, x: usize) -> Vec<f64> {
    let src = f.source();
    let mut out = vec![0.0; plan.dimension()];
    for level in &plan.levels {
        for (j, sets) in level.labels.iter().enumerate() {
            let mut v = 0.0;
            for s in sets {
                let mut inside = vec![false; src.n()];
                for &m in &s.members {
                    inside[m] = true;
                }
                let to_out = (0..src.n())
                    .filter(|&w| !inside[w])
                    .map(|w| src.d(x, w))
                    .fold(f64::INFINITY, f64::min);
                v += s.label as f64 * to_out.min(s.radius);
            }
            out[plan.slot(level.k, j + 1)] = v;
        }
    }
    out
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Distortion {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddingResult {
    pub plan: EmbeddingPlan,
    pub image: Vec<usize>,
    pub coords: Vec<Vec<f64>>,
    /// Normalization used the exact pullback metric.
    pub exact: bool,
    pub injective: bool,
    /// Distortion of `ψ` against the normalized metric.
    pub distortion: Distortion,
    /// Distortion of `ψ` against the original source metric.
    pub source_distortion: Distortion,
    /// Largest per-coordinate Lipschitz constant of `φ`.
    pub phi_lipschitz: f64,
    /// Smallest `|φ(x1) − φ(x2)|∞ / d(x1, x2)` over fiber pairs.
    pub fiber_lower: f64,
    pub certificates: Vec<Certificate>,
}

fn distortion(
    n: usize,
    d: impl Fn(usize, usize) -> f64 + Sync,
    psi: impl Fn(usize, usize) -> f64 + Sync,
) -> Distortion {
    let rows = par::map_range(n, |a| {
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for b in (a + 1)..n {
            let r = psi(a, b) / d(a, b);
            lo = lo.min(r);
            hi = hi.max(r);
        }
        (lo, hi)
    });
    let lower = rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let upper = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    Distortion { lower, upper }
}

/// Every fiber pair has a level `k` with `d/2 ≤ 5R^k(y) ≤ d`; the right
/// inequality is allowed one transition step of slack, which is reported.
pub fn fiber_scale_check(f: &VertexMap, plan: &EmbeddingPlan) -> Certificate {
    let src = f.source();
    let tgt = f.target();
    let mut cert = Certificate::new("fiber_scale");
    let mut worst_slack: f64 = 0.0;
    for y in 0..tgt.n() {
        let fib = f.fiber(y);
        let radii = tgt.radii_from(y);
        for (i, &a) in fib.iter().enumerate() {
            for &b in &fib[i + 1..] {
                let d = src.d(a, b);
                let mut best: Option<(f64, f64)> = None;
                for level in &plan.levels {
                    let t = 5.0 * level.radii[y];
                    if t <= 0.0 {
                        continue;
                    }
                    let slack = (t - d).max(0.5 * d - t).max(0.0);
                    let prev = radii
                        .iter()
                        .copied()
                        .filter(|&s| s < t - TOL)
                        .fold(0.0, f64::max);
                    if best.is_none_or(|(s, _)| slack < s) {
                        best = Some((slack, t - prev));
                    }
                }
                match best {
                    Some((slack, step)) => {
                        worst_slack = worst_slack.max(slack);
                        if slack > step + TOL {
                            cert.fail(Witness::Pair {
                                a: src.id(a).into(),
                                b: src.id(b).into(),
                            });
                        }
                    }
                    None => cert.fail(Witness::Pair {
                        a: src.id(a).into(),
                        b: src.id(b).into(),
                    }),
                }
            }
        }
    }
    cert.constant = Some(worst_slack);
    cert.note("constant is the largest grid slack");
    cert
}

/// With `φ` `L`-Lipschitz and `ε`-expanding on fibers, every pair satisfies
/// `min{ε(1−δ) − Lδ, δ}·d ≤ max{|Δφ|∞, d_Y}`; the best `δ = ε/(1+ε+L)` gives
/// the predicted lower constant, compared with the measured one.
pub fn composition_bound_check(
    f: &VertexMap,
    coords: &[Vec<f64>],
    eps: f64,
    l: f64,
) -> Certificate {
    let src = f.source();
    let delta = eps / (1.0 + eps + l);
    let predicted = delta.min(eps * (1.0 - delta) - l * delta);
    let measured = distortion(
        src.n(),
        |a, b| src.d(a, b),
        |a, b| sup_diff(&coords[a], &coords[b]).max(f.image_dist(a, b)),
    )
    .lower;
    let mut cert = Certificate::new("composition_bound").with_constant(predicted);
    cert.note(format!("measured lower constant {measured}, δ = {delta}"));
    if !(predicted <= measured + 1e-12) {
        cert.fail(Witness::Note {
            text: format!("predicted {predicted} exceeds measured {measured}"),
        });
    }
    cert
}

/// Full pipeline: normalize through the pullback factorization, build the
/// plan, evaluate `φ`, and run the checks.
pub fn embed(f: &VertexMap, exact_cap: usize) -> Result<EmbeddingResult> {
    let (fact, exact) = match factorize(f, MetricChoice::Exact, exact_cap) {
        Ok(fact) => (fact, true),
        Err(Error::TooLarge { .. }) => (factorize(f, MetricChoice::Lower, exact_cap)?, false),
        Err(e) => return Err(e),
    };
    let pi = &fact.projection;
    let x = pi.source();
    let plan = plan(pi)?;
    let coords: Vec<Vec<f64>> = par::map_range(x.n(), |v| phi(pi, &plan, v));
    let n = x.n();
    let image: Vec<usize> = (0..n).map(|v| pi.apply(v)).collect();

    let mut injective = true;
    let mut phi_lip: f64 = 0.0;
    let mut fiber_lower = f64::INFINITY;
    let mut fiber_ok = true;
    let mut lip_ok = true;
    let mut fiber_witness = None;
    let mut lip_witness = None;
    let nn = plan.multiplicity as f64;
    for a in 0..n {
        for b in (a + 1)..n {
            let d = x.d(a, b);
            let dphi = sup_diff(&coords[a], &coords[b]);
            for (ca, cb) in coords[a].iter().zip(&coords[b]) {
                let r = (ca - cb).abs() / d;
                phi_lip = phi_lip.max(r);
                if r > nn + 1e-9 && lip_ok {
                    lip_ok = false;
                    lip_witness = Some((a, b));
                }
            }
            if image[a] == image[b] {
                if dphi <= 0.0 {
                    injective = false;
                }
                fiber_lower = fiber_lower.min(dphi / d);
                if d > 12.0 * dphi + 1e-9 && fiber_ok {
                    fiber_ok = false;
                    fiber_witness = Some((a, b));
                }
            }
        }
    }
    let pair = |(a, b): (usize, usize)| Witness::Pair {
        a: x.id(a).into(),
        b: x.id(b).into(),
    };
    let mut lip = Certificate::new("phi_lipschitz").with_constant(phi_lip);
    if let Some(w) = lip_witness {
        lip.fail(pair(w));
    }
    let mut fib = Certificate::new("fiber_separation").with_constant(fiber_lower);
    if let Some(w) = fiber_witness {
        fib.fail(pair(w));
    }
    let mut inj = Certificate::new("injective");
    if !injective {
        inj.fail(Witness::Note {
            text: "two points share image and coordinates".into(),
        });
    }
    let mut plan_cert = Certificate::new("plan").with_constant(plan.colors as f64);
    for level in &plan.levels {
        if !level.covers {
            plan_cert.fail(Witness::Note {
                text: format!("net of level {} does not cover", level.k),
            });
        }
        let lip5 = radius_lipschitz_slack(pi, &level.radii);
        if lip5 > 0.0 {
            plan_cert.flag("radius grid slack");
            plan_cert.note(format!("level {}: 5R Lipschitz slack {lip5}", level.k));
        }
    }
    if plan.colors as f64 > plan.doubling_bound {
        plan_cert.flag("colour count above doubling bound");
    }
    if !exact {
        plan_cert.flag("approximate normalization");
    }
    let mut certificates = vec![
        f.openness_scan(),
        plan_cert,
        inj,
        lip,
        fib,
        fiber_scale_check(pi, &plan),
    ];
    let eps = if fiber_lower.is_finite() {
        fiber_lower
    } else {
        1.0
    };
    let l = phi_lip;
    certificates.push(composition_bound_check(pi, &coords, eps, l));

    let psi = |a: usize, b: usize| sup_diff(&coords[a], &coords[b]).max(pi.image_dist(a, b));
    let distortion_x = distortion(n, |a, b| x.d(a, b), psi);
    let source_distortion = distortion(n, |a, b| f.source().d(a, b), psi);
    Ok(EmbeddingResult {
        plan,
        image,
        coords,
        exact,
        injective,
        distortion: distortion_x,
        source_distortion,
        phi_lipschitz: phi_lip,
        fiber_lower,
        certificates,
    })
}

/// Largest `|5R(y) − 5R(y')| − d(y, y')` over pairs, clamped at zero.
pub fn radius_lipschitz_slack(f: &VertexMap, radii: &[f64]) -> f64 {
    let tgt = f.target();
    let mut worst: f64 = 0.0;
    for a in 0..tgt.n() {
        for b in (a + 1)..tgt.n() {
            worst = worst.max((5.0 * (radii[a] - radii[b])).abs() - tgt.d(a, b));
        }
    }
    worst.max(0.0)
}

/// Comparability of intersecting balls: `B(y, R)` meeting `B(y', R')`
/// forces `R'/R ∈ [2/3, 3/2]`, and for the doubled balls `[3/7, 7/3]`.
/// Returns the number of violating pairs for each.
pub fn comparability_violations(f: &VertexMap, radii: &[f64]) -> (usize, usize) {
    let tgt = f.target();
    let pos: Vec<usize> = (0..tgt.n()).filter(|&y| radii[y] > 0.0).collect();
    let meet = |a: usize, b: usize, s: f64| {
        (0..tgt.n()).any(|z| tgt.d(a, z) < s * radii[a] - TOL && tgt.d(b, z) < s * radii[b] - TOL)
    };
    let (mut one, mut two) = (0, 0);
    for (i, &a) in pos.iter().enumerate() {
        for &b in &pos[i + 1..] {
            let q = radii[b] / radii[a];
            if meet(a, b, 1.0) && !(2.0 / 3.0 - 1e-12..=1.5 + 1e-12).contains(&q) {
                one += 1;
            }
            if meet(a, b, 2.0) && !(3.0 / 7.0 - 1e-12..=7.0 / 3.0 + 1e-12).contains(&q) {
                two += 1;
            }
        }
    }
    (one, two)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators;

    #[test]
    fn injective_map_has_empty_plan() {
        let f = generators::identity(&generators::cycle(5));
        let p = plan(&f).unwrap();
        assert_eq!(p.dimension(), 0);
        let r = embed(&f, 14).unwrap();
        assert!(r.injective);
        assert!(r.coords.iter().all(|c| c.is_empty()));
        assert!((r.distortion.lower - 1.0).abs() < 1e-12);
        assert!((r.distortion.upper - 1.0).abs() < 1e-12);
    }

    #[test]
    fn double_cover_radii_are_uniform() {
        let f = generators::cycle_cover(8, 2).unwrap();
        let fact = factorize(&f, MetricChoice::Exact, 20).unwrap();
        let r = rk_radii(&fact.projection, 1);
        // Preimage of an arc reconnects once the arc is the whole 8-cycle.
        assert!(r.iter().all(|&v| (v - 4.0 / 5.0).abs() < 1e-12));
        let fiber_d = fact.pullback_space.d(0, 8);
        assert!((5.0 * r[0] - fiber_d).abs() < 1e-12);
    }

    #[test]
    fn labels_and_colours() {
        let f = generators::cycle_cover(6, 2).unwrap();
        let radii = vec![0.5; 6];
        let net = build_net(&f, &radii);
        assert_eq!(net.len(), 6);
        let col = color_net(&f, &radii, &net);
        // Doubled balls of radius 1 are single vertices: all disjoint.
        assert_eq!(col.classes.len(), 1);
        let labels = assign_labels(&f, &radii, &[0]).unwrap();
        assert_eq!(
            labels.iter().map(|l| l.label).collect::<Vec<_>>(),
            vec![1, 2]
        );
        let wide = vec![1.0; 6];
        let col = color_net(&f, &wide, &build_net(&f, &wide));
        assert!(col.classes.len() >= 2);
    }

    #[test]
    fn double_cover_embeds() {
        let f = generators::cycle_cover(8, 2).unwrap();
        let r = embed(&f, 20).unwrap();
        assert!(r.injective);
        assert!(r.distortion.lower > 0.0 && r.distortion.upper.is_finite());
        for c in &r.certificates {
            assert!(c.pass, "{c:?}");
        }
    }
}
