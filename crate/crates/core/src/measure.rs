//! Pullback measures, Jacobians, the essential index and Conditions N, N⁻¹.
//! Everything here is an exact vertex sum.

use serde::Serialize;

use crate::certificate::{Certificate, Witness};
use crate::covering::VertexMap;
use crate::error::{Error, Result};
use crate::par;
use crate::space::TOL;

/// Compensated (Neumaier) sum.
pub fn fsum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{what} has {got} entries, expected {want}"
        )))
    }
}

/// Per-vertex pullback measure `ψ*ν({x}) = ν({f(x)})`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PullbackMeasure {
    pub values: Vec<f64>,
}

impl PullbackMeasure {
    pub fn of(&self, set: &[usize]) -> f64 {
        fsum(set.iter().map(|&x| self.values[x]))
    }

    pub fn total(&self) -> f64 {
        fsum(self.values.iter().copied())
    }
}

pub fn pullback_measure(f: &VertexMap, nu: &[f64]) -> Result<PullbackMeasure> {
    check_len("nu", nu.len(), f.target().n())?;
    Ok(PullbackMeasure {
        values: f.assignment().iter().map(|&y| nu[y]).collect(),
    })
}

/// `Σ_x ρ(x)·ψ*ν(x) = Σ_y [Σ_{x ∈ f⁻¹(y)} ρ(x)]·ν(y)` to `1e-12` relative.
pub fn change_of_variables_check(f: &VertexMap, rho: &[f64], nu: &[f64]) -> Result<Certificate> {
    check_len("rho", rho.len(), f.source().n())?;
    let pm = pullback_measure(f, nu)?;
    let lhs = fsum(rho.iter().zip(&pm.values).map(|(r, m)| r * m));
    let rhs = fsum((0..f.target().n()).map(|y| fsum(f.fiber(y).iter().map(|&x| rho[x])) * nu[y]));
    let rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
    let mut cert = Certificate::new("change_of_variables").with_constant(rel);
    if rel > 1e-12 && (lhs - rhs).abs() > 0.0 {
        cert.fail(Witness::Note {
            text: format!("lhs {lhs} rhs {rhs}"),
        });
    }
    Ok(cert)
}

/// `J_f = ν(f x)/μ(x)` and `J_{f⁻¹} = μ(x)/ν(f x)`. Zero denominators give
/// `+∞` (flagged); `0/0` is recorded as `0` and flagged indeterminate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JacobianField {
    pub forward: Vec<f64>,
    pub inverse: Vec<f64>,
    pub forward_infinite: Vec<bool>,
    pub inverse_infinite: Vec<bool>,
    pub indeterminate: Vec<bool>,
}

fn ratio(a: f64, b: f64) -> (f64, bool, bool) {
    match (a > 0.0, b > 0.0) {
        (_, true) => (a / b, false, false),
        (true, false) => (f64::INFINITY, true, false),
        (false, false) => (0.0, false, true),
    }
}

pub fn jacobians(f: &VertexMap, mu: &[f64], nu: &[f64]) -> Result<JacobianField> {
    check_len("mu", mu.len(), f.source().n())?;
    check_len("nu", nu.len(), f.target().n())?;
    let n = f.source().n();
    let mut out = JacobianField {
        forward: Vec::with_capacity(n),
        inverse: Vec::with_capacity(n),
        forward_infinite: Vec::with_capacity(n),
        inverse_infinite: Vec::with_capacity(n),
        indeterminate: Vec::with_capacity(n),
    };
    for x in 0..n {
        let v = nu[f.apply(x)];
        let (j, jinf, ind) = ratio(v, mu[x]);
        let (ji, jiinf, _) = ratio(mu[x], v);
        out.forward.push(j);
        out.inverse.push(ji);
        out.forward_infinite.push(jinf);
        out.inverse_infinite.push(jiinf);
        out.indeterminate.push(ind);
    }
    Ok(out)
}

/// `Σ ρ·J_f·μ ≤ Σ_y Σ(ρ, y, f, X)·ν`; terms with `μ(x) = 0` drop out of the
/// left side. Reports whether equality holds.
pub fn area_inequality_check(
    f: &VertexMap,
    rho: &[f64],
    mu: &[f64],
    nu: &[f64],
) -> Result<Certificate> {
    check_len("rho", rho.len(), f.source().n())?;
    let jac = jacobians(f, mu, nu)?;
    let lhs = fsum((0..f.source().n()).map(|x| {
        if mu[x] > 0.0 {
            rho[x] * jac.forward[x] * mu[x]
        } else {
            0.0
        }
    }));
    let rhs = fsum((0..f.target().n()).map(|y| fsum(f.fiber(y).iter().map(|&x| rho[x])) * nu[y]));
    let scale = lhs.abs().max(rhs.abs()).max(1.0);
    let mut cert = Certificate::new("area_inequality").with_constant(rhs - lhs);
    if lhs > rhs + 1e-12 * scale {
        cert.fail(Witness::Note {
            text: format!("lhs {lhs} exceeds rhs {rhs}"),
        });
    }
    if (lhs - rhs).abs() <= 1e-12 * scale {
        cert.flag("equality");
    } else {
        cert.flag("strict");
    }
    Ok(cert)
}

/// Condition N: every `μ`-null vertex maps to a `ν`-null vertex.
pub fn condition_n_check(f: &VertexMap, mu: &[f64], nu: &[f64]) -> Result<Certificate> {
    check_len("mu", mu.len(), f.source().n())?;
    check_len("nu", nu.len(), f.target().n())?;
    let mut cert = Certificate::new("condition_n");
    if let Some(x) = (0..f.source().n()).find(|&x| mu[x] <= 0.0 && nu[f.apply(x)] > 0.0) {
        cert.fail(Witness::Vertex {
            vertex: f.source().id(x).into(),
        });
    }
    Ok(cert)
}

/// Condition N⁻¹: every `μ`-positive vertex maps to a `ν`-positive vertex.
pub fn condition_n_inverse_check(f: &VertexMap, mu: &[f64], nu: &[f64]) -> Result<Certificate> {
    check_len("mu", mu.len(), f.source().n())?;
    check_len("nu", nu.len(), f.target().n())?;
    let mut cert = Certificate::new("condition_n_inverse");
    if let Some(x) = (0..f.source().n()).find(|&x| mu[x] > 0.0 && nu[f.apply(x)] <= 0.0) {
        cert.fail(Witness::Vertex {
            vertex: f.source().id(x).into(),
        });
    }
    Ok(cert)
}

/// `ψ*ν(U(x, f, r)) / ν(B(f(x), r))` for the open radius `r`; `None` when
/// the ball is `ν`-null.
pub fn essential_index(f: &VertexMap, x: usize, nu: &[f64], r: f64) -> Result<Option<f64>> {
    let u = f.u_component(x, r)?;
    let ball = f.target().ball(f.apply(x), r)?;
    let pm = pullback_measure(f, nu)?;
    let den = fsum(ball.iter().map(|&y| nu[y]));
    Ok((den > 0.0).then(|| pm.of(&u.members) / den))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EssentialIndex {
    pub value: f64,
    /// Closed-ball radius attaining the maximum.
    pub at_radius: f64,
    pub radius_cap: f64,
}

/// Maximum of the essential-index ratio over closed balls `B̄(f(x), t)` with
/// `t` a target distance from `f(x)` not exceeding `cap` (defaults to the
/// normal radius of `f(x)`). The sweep stops at the first radius where `f`
/// takes some value more than `i(x)` times on `U(x, f, t)`.
pub fn essential_index_profile(
    f: &VertexMap,
    x: usize,
    nu: &[f64],
    cap: Option<f64>,
) -> Result<EssentialIndex> {
    f.source().check_vertex(x)?;
    check_len("nu", nu.len(), f.target().n())?;
    let z = f.apply(x);
    let cap = cap.unwrap_or_else(|| f.normal_radius_at(z).radius);
    let mut best = EssentialIndex {
        value: 1.0,
        at_radius: 0.0,
        radius_cap: cap,
    };
    let mut first = true;
    let index = f.local_index(x);
    for t in f.target().radii_from(z) {
        if t > cap + TOL {
            break;
        }
        let u = f.u_component_closed(x, t);
        if f.max_multiplicity(&u) > index {
            break;
        }
        let den = fsum(
            (0..f.target().n())
                .filter(|&y| f.target().d(z, y) <= t + TOL)
                .map(|y| nu[y]),
        );
        if den <= 0.0 {
            continue;
        }
        let val = fsum(u.iter().map(|&v| nu[f.apply(v)])) / den;
        if first || val > best.value {
            best.value = val;
            best.at_radius = t;
            first = false;
        }
    }
    Ok(best)
}

/// Essential-index profile at every source vertex.
pub fn essential_index_field(f: &VertexMap, nu: &[f64]) -> Result<Vec<EssentialIndex>> {
    check_len("nu", nu.len(), f.target().n())?;
    let table = f.normal_radius_table();
    par::map_range(f.source().n(), |x| {
        essential_index_profile(f, x, nu, Some(table.radius(f.apply(x))))
    })
    .into_iter()
    .collect()
}
