use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::ValueEnum;
use rand::{Rng, SeedableRng};
use serde_json::json;

use qrmms::covering::map_findings;
use qrmms::dilatation::{self, CurveBudget};
use qrmms::embedding;
use qrmms::generators;
use qrmms::io::{self, FamilyFile, MapFile, SpaceFile};
use qrmms::measure;
use qrmms::modulus::{self, CurveFamily, FamilySample, SolverOptions, Weight};
use qrmms::pullback::{self, MetricChoice};
use qrmms::{Certificate, Curve, Error, Space, VertexMap};

use crate::report::{digest, emit, num, Report, Sidecars, SCHEMA_VERSION};
use crate::{CliError, Cmd, Common, GenKind, Metric, Property, VerifyArgs, WeightKind};

struct Ctx {
    inputs: BTreeMap<String, String>,
    sidecars: Sidecars,
    certificates: Vec<Certificate>,
}

impl Ctx {
    fn input(&mut self, path: &Path) -> Result<(), CliError> {
        self.inputs
            .insert(path.display().to_string(), digest(path)?);
        Ok(())
    }

    fn map(&mut self, path: &Path) -> Result<VertexMap, CliError> {
        self.input(path)?;
        let file: MapFile = serde_json::from_slice(&std::fs::read(path)?).map_err(Error::from)?;
        let (s, t) = io::map_parts(path, &file);
        self.input(&s)?;
        self.input(&t)?;
        Ok(VertexMap::from_pairs(
            io::read_space(&s)?,
            io::read_space(&t)?,
            &file.pairs,
        )?)
    }

    fn space(&mut self, path: &Path) -> Result<Space, CliError> {
        self.input(path)?;
        Ok(io::read_space(path)?)
    }

    fn family(&mut self, path: &Path, space: &Space) -> Result<CurveFamily, CliError> {
        self.input(path)?;
        Ok(io::read_family(path, space)?)
    }
}

/// Runs one command and writes its report. `Ok(false)` when a certificate
/// failed.
pub fn run(cmd: &Cmd, common: &Common, echo: Vec<String>) -> Result<bool, CliError> {
    let start = Instant::now();
    let mut ctx = Ctx {
        inputs: BTreeMap::new(),
        sidecars: Sidecars::default(),
        certificates: Vec::new(),
    };
    let results = match cmd {
        Cmd::Validate { file } => validate(&mut ctx, file),
        Cmd::Pullback {
            map,
            metric,
            max_edges,
        } => pullback_cmd(&mut ctx, common, map, *metric, *max_edges),
        Cmd::Measure { map } => measure_cmd(&mut ctx, common, map),
        Cmd::Modulus {
            space,
            family,
            p,
            max_iter,
            weight,
        } => modulus_cmd(&mut ctx, common, space, family, *p, *max_iter, *weight),
        Cmd::Verify(args) => verify_cmd(&mut ctx, common, args),
        Cmd::Embed { map } => embed_cmd(&mut ctx, common, map),
        Cmd::Gen { kind } => gen_cmd(&mut ctx, common, kind),
    };
    let (results, deferred) = match results {
        Ok(v) => (v, None),
        Err(Deferred::Report(v, e)) => (v, Some(e)),
        Err(Deferred::Now(e)) => return Err(e),
    };
    let pass = ctx.certificates.iter().all(|c| c.pass);
    let report = Report {
        schema_version: SCHEMA_VERSION,
        command: echo,
        inputs: ctx.inputs,
        seed: common.seed,
        results,
        certificates: ctx.certificates,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    emit(&report, ctx.sidecars, common.out.as_ref())?;
    match deferred {
        Some(e) => Err(e),
        None => Ok(pass),
    }
}

/// An error raised before a report exists, or one reported first and then
/// turned into the exit status.
enum Deferred {
    Now(CliError),
    Report(serde_json::Value, CliError),
}

impl<E: Into<CliError>> From<E> for Deferred {
    fn from(e: E) -> Self {
        Deferred::Now(e.into())
    }
}

type Out = Result<serde_json::Value, Deferred>;

fn validate(ctx: &mut Ctx, file: &Path) -> Out {
    ctx.input(file)?;
    let value: serde_json::Value =
        serde_json::from_slice(&std::fs::read(file)?).map_err(Error::from)?;
    let is_map = value.get("pairs").is_some();
    let findings: Vec<String>;
    let kind;
    if is_map {
        kind = "map";
        let mf: MapFile = serde_json::from_value(value).map_err(Error::from)?;
        let (s, t) = io::map_parts(file, &mf);
        ctx.input(&s)?;
        ctx.input(&t)?;
        let src = io::read_space(&s);
        let tgt = io::read_space(&t);
        findings = match (src, tgt) {
            (Ok(src), Ok(tgt)) => {
                let mut assign = vec![None; src.n()];
                let mut found = Vec::new();
                for (a, b) in &mf.pairs {
                    match (src.vertex(a), tgt.vertex(b)) {
                        (Ok(x), Ok(y)) => assign[x] = Some(y),
                        (Err(_), _) => found.push(format!("unknown source vertex `{a}`")),
                        (_, Err(_)) => found.push(format!("unknown target vertex `{b}`")),
                    }
                }
                found.extend(map_findings(&src, &tgt, &assign));
                found
            }
            (s, t) => {
                let mut found = Vec::new();
                for (side, r) in [("source", s), ("target", t)] {
                    if let Err(e) = r {
                        found.push(format!("{side}: {e}"));
                    }
                }
                found
            }
        };
    } else {
        kind = "space";
        let sf: SpaceFile = serde_json::from_value(value).map_err(Error::from)?;
        findings = match sf.into_space() {
            Ok(s) => s.findings(),
            Err(Error::InvalidSpace(f)) => f,
            Err(e) => vec![e.to_string()],
        };
    }
    let results = json!({ "kind": kind, "valid": findings.is_empty(), "findings": findings });
    if findings.is_empty() {
        Ok(results)
    } else {
        let err = if is_map {
            Error::InvalidMap(findings)
        } else {
            Error::InvalidSpace(findings)
        };
        Err(Deferred::Report(results, err.into()))
    }
}

fn matrix_csv(space: &Space, rows: &[Vec<f64>]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["vertex".to_string()];
    header.extend(space.ids().iter().cloned());
    let body = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut line = vec![space.id(i).to_string()];
            line.extend(r.iter().map(|&x| num(x)));
            line
        })
        .collect();
    (header, body)
}

fn pullback_cmd(
    ctx: &mut Ctx,
    common: &Common,
    map: &Path,
    metric: Metric,
    max_edges: usize,
) -> Out {
    let f = ctx.map(map)?;
    let choice = match metric {
        Metric::Exact => MetricChoice::Exact,
        Metric::Lower => MetricChoice::Lower,
    };
    let bracket = match choice {
        MetricChoice::Exact => pullback::exact_bracket(&f, common.exact_cap)?,
        MetricChoice::Lower => pullback::bracket(&f)?,
    };
    let discrete = pullback::is_discrete(&f);
    let (h, b) = matrix_csv(f.source(), &bracket.lower.rows());
    let name = if bracket.exact {
        "exact.csv"
    } else {
        "lower.csv"
    };
    ctx.sidecars.csv(name, &h, b);
    let mut results = json!({
        "exact": bracket.exact,
        "discrete": discrete,
        "matrix": name,
        "upper_factor": if bracket.exact { 1.0 } else { 2.0 },
        "constant_components": pullback::constant_components(&f)
            .iter()
            .map(|c| c.iter().map(|&v| f.source().id(v).to_string()).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
    });
    if discrete {
        let fact = pullback::factorize(&f, choice, common.exact_cap)?;
        let curves = pullback::curve_sample(f.source(), max_edges, 20_000);
        ctx.certificates
            .push(pullback::verify_projection(&fact, &curves));
        ctx.certificates.push(pullback::bld_bdd_transfer_check(
            &f,
            &fact,
            &curves,
            f64::INFINITY,
        ));
        if bracket.exact {
            ctx.certificates
                .push(pullback::length_chain_check(&f, common.exact_cap)?);
        }
        results["curves_checked"] = json!(curves.len());
    }
    Ok(results)
}

fn measure_cmd(ctx: &mut Ctx, common: &Common, map: &Path) -> Out {
    let f = ctx.map(map)?;
    let mu = f.source().masses().to_vec();
    let nu = f.target().masses().to_vec();
    let jac = measure::jacobians(&f, &mu, &nu)?;
    let pm = measure::pullback_measure(&f, &nu)?;
    let ess = measure::essential_index_field(&f, &nu)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(common.seed);
    let rho: Vec<f64> = (0..f.source().n())
        .map(|_| rng.gen_range(0.0..1.0))
        .collect();
    ctx.certificates
        .push(measure::change_of_variables_check(&f, &rho, &nu)?);
    ctx.certificates
        .push(measure::area_inequality_check(&f, &rho, &mu, &nu)?);
    ctx.certificates
        .push(measure::condition_n_check(&f, &mu, &nu)?);
    ctx.certificates
        .push(measure::condition_n_inverse_check(&f, &mu, &nu)?);
    let header: Vec<String> = [
        "vertex",
        "image",
        "mu",
        "pullback",
        "jacobian",
        "inverse_jacobian",
        "flags",
        "local_index",
        "essential_index",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let rows = (0..f.source().n())
        .map(|x| {
            let mut flags = Vec::new();
            if jac.forward_infinite[x] {
                flags.push("forward_infinite");
            }
            if jac.inverse_infinite[x] {
                flags.push("inverse_infinite");
            }
            if jac.indeterminate[x] {
                flags.push("indeterminate");
            }
            vec![
                f.source().id(x).to_string(),
                f.target().id(f.apply(x)).to_string(),
                num(mu[x]),
                num(pm.values[x]),
                num(jac.forward[x]),
                num(jac.inverse[x]),
                flags.join("|"),
                f.local_index(x).to_string(),
                num(ess[x].value),
            ]
        })
        .collect();
    ctx.sidecars.csv("jacobians.csv", &header, rows);
    Ok(json!({
        "jacobians": "jacobians.csv",
        "pullback_total": pm.total(),
        "branch_set": f.branch_set().iter().map(|&v| f.source().id(v).to_string()).collect::<Vec<_>>(),
    }))
}

fn density_csv(space: &Space, density: &[f64]) -> (Vec<String>, Vec<Vec<String>>) {
    let header = ["u", "v", "len", "density"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows = space
        .edges()
        .iter()
        .zip(density)
        .map(|(e, &d)| {
            vec![
                space.id(e.u).to_string(),
                space.id(e.v).to_string(),
                num(e.len),
                num(d),
            ]
        })
        .collect();
    (header, rows)
}

fn solver(common: &Common, max_iter: usize) -> SolverOptions {
    SolverOptions {
        tol: common.tol,
        max_iter,
    }
}

fn modulus_cmd(
    ctx: &mut Ctx,
    common: &Common,
    space: &Path,
    family: &Path,
    p: f64,
    max_iter: usize,
    weight: WeightKind,
) -> Out {
    let s = ctx.space(space)?;
    let fam = ctx.family(family, &s)?;
    let w = match weight {
        WeightKind::Unit => Weight::Unit,
        WeightKind::Mass => Weight::Vertex(s.masses().to_vec()),
    };
    let r = modulus::modulus(&s, &fam, p, &w, solver(common, max_iter))?;
    let (h, b) = density_csv(&s, &r.density);
    ctx.sidecars.csv("density.csv", &h, b);
    Ok(json!({
        "value": r.value,
        "gap": r.gap,
        "dual": r.dual,
        "p": r.p,
        "weight": r.weight,
        "iterations": r.iterations,
        "curves_generated": r.curves_generated,
        "empty_family": r.empty_family,
        "converged": r.converged,
        "density": "density.csv",
    }))
}

fn samples(ctx: &mut Ctx, paths: &[PathBuf], space: &Space) -> Result<Vec<FamilySample>, CliError> {
    if paths.is_empty() {
        return Err(CliError::Usage(
            "this property needs at least one --family file".into(),
        ));
    }
    paths
        .iter()
        .map(|p| {
            Ok(FamilySample {
                label: p.display().to_string(),
                family: ctx.family(p, space)?,
                omega: None,
            })
        })
        .collect()
}

fn explicit(fam: CurveFamily) -> Result<Vec<Curve>, CliError> {
    match fam {
        CurveFamily::Explicit(c) => Ok(c),
        _ => Err(CliError::Usage(
            "vaisala needs explicit curve families".into(),
        )),
    }
}

fn verify_cmd(ctx: &mut Ctx, common: &Common, a: &VerifyArgs) -> Out {
    let f = ctx.map(&a.map)?;
    let k = a.constant;
    let kk = k.unwrap_or(f64::INFINITY);
    let budget = CurveBudget {
        max_edges: a.max_edges,
        enumerate: 20_000,
        random: a.random_curves,
        seed: common.seed,
    };
    let mu = f.source().masses().to_vec();
    let nu = f.target().masses().to_vec();
    let opts = solver(common, 100_000);
    let mut results =
        json!({ "property": a.property.to_possible_value().map(|v| v.get_name().to_string()) });
    let cert = match a.property {
        Property::Bld => dilatation::bld_verify(&f, kk, budget),
        Property::Bdd => dilatation::bdd_verify(&f, kk, budget),
        Property::Lq => dilatation::lq_verify(&f, kk),
        Property::MetricQr => dilatation::metric_qr_certificate(&f, kk, a.radius_cap)?,
        Property::InverseQr => dilatation::inverse_qr_certificate(&f, kk, a.radius_cap)?,
        Property::Bqs => {
            let continua = dilatation::continuum_sample(&f, a.continua, common.seed);
            let g = dilatation::bqs_gauge(&f, &continua);
            let mut c = Certificate::new("bqs");
            c.constant = g.steps.last().map(|s| s.1);
            c.note(format!(
                "{} intersecting pairs, {} collapsed",
                g.pairs, g.collapsed
            ));
            let header = vec!["t".to_string(), "eta".to_string()];
            let rows = g.steps.iter().map(|&(t, e)| vec![num(t), num(e)]).collect();
            ctx.sidecars.csv("gauge.csv", &header, rows);
            results["gauge"] = json!("gauge.csv");
            results["continua"] = json!(continuum_count(&continua));
            c
        }
        Property::Ko => {
            let s = samples(ctx, &a.family, f.source())?;
            modulus::ko_certificate(&f, &s, a.p, &mu, &nu, k, opts)?
        }
        Property::Ki => {
            let s = samples(ctx, &a.family, f.source())?;
            modulus::ki_certificate(&f, &s, a.p, &mu, &nu, k, opts)?
        }
        Property::Vaisala => {
            let [fam] = a.family.as_slice() else {
                return Err(CliError::Usage("vaisala needs exactly one --family".into()).into());
            };
            let Some(img) = &a.image_family else {
                return Err(CliError::Usage("vaisala needs --image-family".into()).into());
            };
            let gamma = explicit(ctx.family(fam, f.source())?)?;
            let gamma_prime = explicit(ctx.family(img, f.target())?)?;
            let lifts = find_lifts(&f, &gamma, &gamma_prime, a.lifts)?;
            modulus::vaisala_certificate(
                &f,
                &gamma,
                &gamma_prime,
                &lifts,
                a.lifts,
                a.p,
                kk,
                &mu,
                &nu,
                opts,
            )?
        }
        Property::AnalyticQr => {
            let branch = f.branch_set();
            let src = f.source();
            let exclude: Vec<usize> = (0..src.n())
                .filter(|&x| {
                    branch
                        .iter()
                        .any(|&b| src.d(b, x) < a.exclude_radius - qrmms::TOL || b == x)
                })
                .collect();
            modulus::analytic_qr_constant(&f, &mu, &nu, a.p, &exclude, k)?
        }
    };
    results["constant"] = json!(cert.constant);
    results["pass"] = json!(cert.pass);
    ctx.certificates.push(cert);
    Ok(results)
}

fn continuum_count(c: &[Vec<usize>]) -> usize {
    c.len()
}

/// For each image curve, the first `m` source curves whose images are
/// contiguous subcurves of it.
fn find_lifts(
    f: &VertexMap,
    gamma: &[Curve],
    gamma_prime: &[Curve],
    m: usize,
) -> Result<Vec<Vec<usize>>, CliError> {
    gamma_prime
        .iter()
        .enumerate()
        .map(|(i, gp)| {
            let t = gp.vertices();
            let found: Vec<usize> = gamma
                .iter()
                .enumerate()
                .filter(|(_, g)| {
                    let img: Vec<usize> = g.vertices().iter().map(|&v| f.apply(v)).collect();
                    img.len() <= t.len() && t.windows(img.len()).any(|w| w == img.as_slice())
                })
                .map(|(j, _)| j)
                .take(m)
                .collect();
            if found.len() < m {
                Err(CliError::Lib(Error::Precondition(format!(
                    "image curve {i} has {} lifts, expected {m}",
                    found.len()
                ))))
            } else {
                Ok(found)
            }
        })
        .collect()
}

fn embed_cmd(ctx: &mut Ctx, common: &Common, map: &Path) -> Out {
    let f = ctx.map(map)?;
    let r = embedding::embed(&f, common.exact_cap)?;
    let dim = r.plan.dimension();
    let mut header = vec!["vertex".to_string(), "image".to_string()];
    header.extend((0..dim).map(|i| format!("c{i}")));
    let rows = (0..f.source().n())
        .map(|x| {
            let mut line = vec![
                f.source().id(x).to_string(),
                f.target().id(r.image[x]).to_string(),
            ];
            line.extend(r.coords[x].iter().map(|&c| num(c)));
            line
        })
        .collect();
    ctx.sidecars.csv("coords.csv", &header, rows);
    ctx.sidecars.json("plan.json", &r.plan);
    ctx.certificates.extend(r.certificates.iter().cloned());
    Ok(json!({
        "coords": "coords.csv",
        "plan": "plan.json",
        "dimension": dim,
        "colors": r.plan.colors,
        "multiplicity": r.plan.multiplicity,
        "exact": r.exact,
        "injective": r.injective,
        "distortion": r.distortion,
        "source_distortion": r.source_distortion,
        "phi_lipschitz": r.phi_lipschitz,
        "fiber_lower": r.fiber_lower,
    }))
}

fn gen_dir(common: &Common) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn write_space(dir: &Path, name: &str, s: &Space) -> Result<String, CliError> {
    std::fs::create_dir_all(dir)?;
    let file = format!("{name}.json");
    io::write_json(&dir.join(&file), &SpaceFile::from_space(s))?;
    Ok(file)
}

fn write_map(dir: &Path, name: &str, f: &VertexMap) -> Result<String, CliError> {
    std::fs::create_dir_all(dir)?;
    io::write_map(dir, name, f)?;
    Ok(format!("{name}.json"))
}

fn gen_cmd(ctx: &mut Ctx, common: &Common, kind: &GenKind) -> Out {
    let dir = gen_dir(common);
    let (name, files) = match kind {
        GenKind::PolarGrid {
            levels,
            sectors,
            r0,
            r1,
            name,
        } => {
            let s = generators::polar_grid(*levels, *sectors, *r0, *r1)?;
            let file = write_space(&dir, name, &s)?;
            let n = s.n();
            let rings = CurveFamily::connecting(
                (0..*sectors).collect(),
                (n - sectors..n).collect(),
                (0..n).collect(),
            );
            let rf = format!("{name}.rings.json");
            io::write_json(&dir.join(&rf), &FamilyFile::from_family(&s, &rings))?;
            (name, vec![file, rf])
        }
        GenKind::PolarDisk {
            levels,
            sectors,
            r1,
            name,
        } => (
            name,
            vec![write_space(
                &dir,
                name,
                &generators::polar_disk(*levels, *sectors, *r1)?,
            )?],
        ),
        GenKind::Cycle { n, name } => {
            (name, vec![write_space(&dir, name, &generators::cycle(*n))?])
        }
        GenKind::Path { n, name } => (name, vec![write_space(&dir, name, &generators::path(*n))?]),
        GenKind::Grid { w, h, name } => (
            name,
            vec![write_space(&dir, name, &generators::grid(*w, *h)?)?],
        ),
        GenKind::CycleCover { n, m, name } => (
            name,
            vec![write_map(&dir, name, &generators::cycle_cover(*n, *m)?)?],
        ),
        GenKind::Winding {
            k,
            levels,
            sectors,
            name,
        } => (
            name,
            vec![write_map(
                &dir,
                name,
                &generators::winding(*k, *levels, *sectors)?,
            )?],
        ),
        GenKind::Stretch {
            n,
            edge,
            factor,
            name,
        } => (
            name,
            vec![write_map(
                &dir,
                name,
                &generators::stretch_edge(&generators::path(*n), *edge, *factor)?,
            )?],
        ),
        GenKind::RandomMap {
            n_src,
            n_tgt,
            collapse,
            name,
        } => (
            name,
            vec![write_map(
                &dir,
                name,
                &generators::random_map(common.seed, *n_src, *n_tgt, *collapse)?,
            )?],
        ),
        GenKind::PullbackSpace { map, name } => {
            let f = ctx.map(map)?;
            let fact = pullback::factorize(&f, MetricChoice::Exact, common.exact_cap)?;
            (name, vec![write_space(&dir, name, &fact.pullback_space)?])
        }
    };
    Ok(json!({ "name": name, "files": files }))
}
