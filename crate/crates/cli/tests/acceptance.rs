//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! fails if any criterion fails.
//!
//! cargo test -p qrmms-cli --release --test acceptance -- --nocapture

use std::f64::consts::{E, PI};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qrmms::dilatation::{self, CurveBudget};
use qrmms::embedding;
use qrmms::generators::{self, corpus};
use qrmms::measure;
use qrmms::modulus::{self, CurveFamily, FamilySample, SolverOptions, Weight};
use qrmms::pullback::{self, MetricChoice};
use qrmms::{Curve, Space, VertexMap, TOL};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn ring_modulus(r1: f64) -> f64 {
    let s = generators::polar_grid(64, 64, 1.0, r1).unwrap();
    let n = s.n();
    let fam = CurveFamily::connecting((0..64).collect(), (n - 64..n).collect(), (0..n).collect());
    modulus::modulus(
        &s,
        &fam,
        2.0,
        &Weight::Vertex(s.masses().to_vec()),
        SolverOptions::default(),
    )
    .unwrap()
    .value
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let a = ring_modulus(E);
    let secs = start.elapsed().as_secs_f64();
    let b = ring_modulus(E * E);
    let rel = (a - 2.0 * PI).abs() / (2.0 * PI);
    ensure(
        rel <= 0.05,
        format!("Mod_2 = {a}, off 2π by {:.2}%", rel * 100.0),
    )?;
    ensure(secs <= 60.0, format!("took {secs:.1} s"))?;
    let (sa, sb) = (a * 1.0, b * 2.0);
    let scale = (sa - sb).abs() / sa.max(sb);
    ensure(scale <= 0.10, format!("scaling mismatch {sa} vs {sb}"))?;
    Ok(format!(
        "Mod_2 = {a:.4} (2π {:+.2}%, {secs:.2} s); scaling {sa:.4} vs {sb:.4}",
        (a / (2.0 * PI) - 1.0) * 100.0
    ))
}

fn criterion_2() -> Check {
    let mut discrete = 0;
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_src = rng.gen_range(2..=12);
        let n_tgt = rng.gen_range(1..=n_src.min(6));
        let f = generators::random_map(seed, n_src, n_tgt, seed % 3 == 0).unwrap();
        let lower = pullback::bracket(&f).unwrap().lower;
        let exact = pullback::exact(&f, 12).unwrap();
        for i in 0..n_src {
            for j in 0..n_src {
                let (l, d) = (lower.get(i, j), exact.get(i, j));
                ensure(
                    l <= d + TOL && d <= 2.0 * l + TOL,
                    format!("seed {seed}: ({i},{j}) lower {l} exact {d}"),
                )?;
            }
        }
        if pullback::is_discrete(&f) {
            discrete += 1;
            let findings = exact.metric_findings(true);
            ensure(findings.is_empty(), format!("seed {seed}: {findings:?}"))?;
        }
    }
    Ok(format!(
        "200 maps, {discrete} discrete, bracket and metric axioms hold"
    ))
}

fn criterion_3() -> Check {
    let f = generators::winding(2, 2, 5).unwrap();
    let fact = pullback::factorize(&f, MetricChoice::Exact, 64).map_err(|e| e.to_string())?;
    let curves = pullback::curve_sample(f.source(), 6, 50_000);
    let proj = pullback::verify_projection(&fact, &curves);
    ensure(proj.pass, format!("projection: {:?}", proj.notes))?;
    ensure(proj.constant.unwrap() <= 1.0 + TOL, "π not 1-Lipschitz")?;
    let chain = pullback::length_chain_check(&f, 64).map_err(|e| e.to_string())?;
    ensure(chain.pass, "length chain fails")?;
    let n = f.max_multiplicity(&f.all_source());
    ensure(n == 2, format!("N = {n}"))?;
    Ok(format!(
        "{} vertices, {} paths, length chain ratio {:.4} ≤ 2N−1 = 3",
        f.source().n(),
        curves.len(),
        chain.constant.unwrap()
    ))
}

fn criterion_4() -> Check {
    let mut worst: f64 = 0.0;
    for seed in 0..500u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_src = rng.gen_range(2..=12);
        let n_tgt = rng.gen_range(1..=n_src.min(6));
        let f = generators::random_map(seed, n_src, n_tgt, rng.gen_bool(0.5)).unwrap();
        let rho: Vec<f64> = (0..n_src).map(|_| rng.gen_range(0.0..10.0)).collect();
        let nu: Vec<f64> = (0..n_tgt)
            .map(|_| {
                if rng.gen_bool(0.1) {
                    0.0
                } else {
                    rng.gen_range(0.0..5.0)
                }
            })
            .collect();
        let mu: Vec<f64> = (0..n_src)
            .map(|_| {
                if rng.gen_bool(0.1) {
                    0.0
                } else {
                    rng.gen_range(0.0..5.0)
                }
            })
            .collect();
        let c = measure::change_of_variables_check(&f, &rho, &nu).unwrap();
        ensure(
            c.pass,
            format!("seed {seed}: relative error {:?}", c.constant),
        )?;
        worst = worst.max(c.constant.unwrap());
        let j = measure::jacobians(&f, &mu, &nu).unwrap();
        for x in 0..n_src {
            let (a, b) = (j.forward[x], j.inverse[x]);
            if a > 0.0 && a.is_finite() && b.is_finite() {
                ensure(
                    (a * b - 1.0).abs() <= 1e-12,
                    format!("seed {seed}: J·J⁻¹ = {}", a * b),
                )?;
            } else {
                ensure(
                    j.forward_infinite[x] || j.inverse_infinite[x] || j.indeterminate[x],
                    format!("seed {seed}: unflagged degenerate Jacobian at {x}"),
                )?;
            }
        }
    }
    let mut vertices = 0;
    for (name, f) in corpus() {
        let field = measure::essential_index_field(&f, f.target().masses()).unwrap();
        for (x, e) in field.iter().enumerate() {
            let i = f.local_index(x) as f64;
            ensure(
                1.0 - TOL <= e.value && e.value <= i + TOL,
                format!("{name}: i_ess = {} at {x}, i = {i}", e.value),
            )?;
            vertices += 1;
        }
    }
    Ok(format!(
        "500 instances, worst relative error {worst:.1e}; index chain on {vertices} corpus vertices"
    ))
}

fn random_curves(rng: &mut ChaCha8Rng, s: &Space, count: usize) -> Vec<Curve> {
    let paths = dilatation::random_paths(s, count * 4, 4, rng.gen());
    let mut out: Vec<Curve> = Vec::new();
    for p in paths {
        if p.len() >= 2 && !out.iter().any(|c| c.vertices() == p.as_slice()) {
            out.push(Curve::new(s, p).unwrap());
        }
        if out.len() == count {
            break;
        }
    }
    out
}

fn tight() -> SolverOptions {
    SolverOptions {
        tol: 1e-9,
        max_iter: 1_000_000,
    }
}

fn solve(s: &Space, curves: &[Curve], p: f64, w: &Weight) -> modulus::ModulusResult {
    modulus::modulus(s, &CurveFamily::Explicit(curves.to_vec()), p, w, tight()).unwrap()
}

fn admissible(s: &Space, curves: &[Curve], density: &[f64]) -> bool {
    curves.iter().all(|c| {
        let l: f64 = c
            .edges()
            .iter()
            .map(|&e| density[e] * s.edges()[e].len)
            .sum();
        l >= 1.0 - 1e-6
    })
}

fn criterion_5() -> Check {
    let mut cases = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..40u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let n = rng.gen_range(3..=7);
        let s = generators::random_space(&mut rng, n, 3);
        let k = rng.gen_range(1..=6);
        let curves = random_curves(&mut rng, &s, k);
        let w = Weight::Vertex(s.masses().to_vec());
        for p in [1.5, 2.0, 3.0] {
            let r = solve(&s, &curves, p, &w);
            let bf = modulus::modulus_bruteforce(&s, &curves, p, &w).map_err(|e| e.to_string())?;
            let err = (r.value - bf).abs();
            worst = worst.max(err);
            ensure(
                err <= 1e-6,
                format!("seed {seed} p {p}: solver {} oracle {bf}", r.value),
            )?;
            ensure(
                admissible(&s, &curves, &r.density),
                format!("seed {seed} p {p}: inadmissible density"),
            )?;

            // adding curves cannot lower the modulus
            let more = random_curves(&mut rng, &s, 3);
            let mut bigger = curves.clone();
            bigger.extend(more.into_iter().filter(|c| !curves.contains(c)));
            let rb = solve(&s, &bigger, p, &w);
            ensure(
                rb.value >= r.value - 1e-6,
                format!("seed {seed} p {p}: monotonicity"),
            )?;

            // longer curves containing the originals have smaller modulus
            let longer: Vec<Curve> = curves
                .iter()
                .map(|c| {
                    let mut v = c.vertices().to_vec();
                    let last = *v.last().unwrap();
                    if let Some(&(w, _)) = s.neighbors(last).iter().find(|(w, _)| !v.contains(w)) {
                        v.push(w);
                    }
                    Curve::new(&s, v).unwrap()
                })
                .collect();
            let rl = solve(&s, &longer, p, &w);
            ensure(
                rl.value <= r.value + 1e-6,
                format!("seed {seed} p {p}: carrier monotonicity"),
            )?;
            cases += 1;
        }
    }
    Ok(format!(
        "{cases} oracle cases, worst |solver − oracle| = {worst:.1e}"
    ))
}

fn criterion_6() -> Check {
    let opts = SolverOptions::default();
    let mut spaces = 0;
    for (name, f) in corpus() {
        for s in [f.source(), f.target()] {
            let id = generators::identity(s);
            let far = (0..s.n())
                .max_by(|&a, &b| s.d(0, a).total_cmp(&s.d(0, b)))
                .unwrap();
            let samples = vec![FamilySample {
                label: "ends".into(),
                family: CurveFamily::connecting(vec![0], vec![far], (0..s.n()).collect()),
                omega: None,
            }];
            let m = s.masses();
            let ko = modulus::ko_certificate(&id, &samples, 2.0, m, m, Some(1.0), opts).unwrap();
            let ki = modulus::ki_certificate(&id, &samples, 2.0, m, m, Some(1.0), opts).unwrap();
            ensure(
                ko.constant == Some(1.0) && ki.constant == Some(1.0),
                format!(
                    "{name}: identity K_O {:?} K_I {:?}",
                    ko.constant, ki.constant
                ),
            )?;
            spaces += 1;
        }
    }
    let mut kos = Vec::new();
    let mut kis = Vec::new();
    let mut qr = Vec::new();
    for res in [16, 32] {
        let f = generators::winding(2, res, res).unwrap();
        let src = f.source();
        let samples: Vec<FamilySample> = [(0.3, 0.8), (0.5, 1.0), (0.2, 0.6)]
            .iter()
            .map(|&(r, s)| FamilySample {
                label: format!("annulus {r}-{s}"),
                family: modulus::annulus_family(src, 0, r, s).unwrap().unwrap(),
                omega: None,
            })
            .collect();
        let (mu, nu) = (src.masses(), f.target().masses());
        kos.push(
            modulus::ko_certificate(&f, &samples, 2.0, mu, nu, Some(1.2), opts)
                .unwrap()
                .constant
                .unwrap(),
        );
        kis.push(
            modulus::ki_certificate(&f, &samples, 2.0, mu, nu, Some(1.2), opts)
                .unwrap()
                .constant
                .unwrap(),
        );
        let exclude: Vec<usize> = (0..src.n()).filter(|&x| src.d(0, x) < 0.5).collect();
        qr.push(
            modulus::analytic_qr_constant(&f, mu, nu, 2.0, &exclude, None)
                .unwrap()
                .constant
                .unwrap(),
        );
    }
    ensure(
        kos.iter().chain(&kis).all(|&k| k <= 1.2),
        format!("K_O {kos:?} K_I {kis:?}"),
    )?;
    ensure(
        kos[1] < kos[0] && kis[1] < kis[0],
        format!("not decreasing: K_O {kos:?} K_I {kis:?}"),
    )?;
    ensure(qr[1] <= 1.2, format!("analytic constant {qr:?}"))?;
    Ok(format!(
        "identity exact on {spaces} spaces; w_2 K_O {:.5}→{:.5}, K_I {:.4}→{:.4}, analytic {:.4}→{:.4}",
        kos[0], kos[1], kis[0], kis[1], qr[0], qr[1]
    ))
}

fn criterion_7() -> Check {
    let n = 12;
    let f = generators::cycle_cover(n, 2).unwrap();
    let (src, tgt) = (f.source(), f.target());
    let mut gamma_prime = Vec::new();
    let mut gamma = Vec::new();
    let mut lifts = Vec::new();
    for len in [3, 5, n] {
        for start in 0..n {
            let t: Vec<usize> = (start..=start + len).map(|i| i % n).collect();
            gamma_prime.push(Curve::new(tgt, t).unwrap());
            let base = gamma.len();
            for sheet in 0..2 {
                let v: Vec<usize> = (start..=start + len)
                    .map(|i| (i + sheet * n) % (2 * n))
                    .collect();
                gamma.push(Curve::new(src, v).unwrap());
            }
            lifts.push(vec![base, base + 1]);
        }
    }
    let opts = tight();
    let cert = modulus::vaisala_certificate(
        &f,
        &gamma,
        &gamma_prime,
        &lifts,
        2,
        2.0,
        1.0,
        src.masses(),
        tgt.masses(),
        opts,
    )
    .map_err(|e| e.to_string())?;
    let m_img = modulus::modulus(
        tgt,
        &CurveFamily::Explicit(gamma_prime),
        2.0,
        &Weight::Vertex(tgt.masses().to_vec()),
        opts,
    )
    .unwrap()
    .value;
    let m_src = modulus::modulus(
        src,
        &CurveFamily::Explicit(gamma),
        2.0,
        &Weight::Vertex(src.masses().to_vec()),
        opts,
    )
    .unwrap()
    .value;
    ensure(
        (m_img - m_src / 2.0).abs() <= 1e-6,
        format!("Mod(Γ') = {m_img}, Mod(Γ)/2 = {}", m_src / 2.0),
    )?;
    ensure(cert.pass, "Väisälä certificate fails")?;
    Ok(format!(
        "Mod(Γ') = {m_img:.9}, Mod(Γ)/2 = {:.9}",
        m_src / 2.0
    ))
}

fn criterion_8() -> Check {
    let mut out = Vec::new();
    for (name, f) in [
        ("cycle_cover(16,2)", generators::cycle_cover(16, 2).unwrap()),
        ("w_2", generators::winding(2, 2, 5).unwrap()),
    ] {
        let r = embedding::embed(&f, 64).map_err(|e| e.to_string())?;
        for c in &r.certificates {
            ensure(c.pass, format!("{name}: {} fails {:?}", c.name, c.notes))?;
        }
        ensure(r.injective, format!("{name}: not injective"))?;
        ensure(r.exact, format!("{name}: approximate normalization"))?;
        out.push(format!(
            "{name} dim {} lower {:.3}",
            r.plan.dimension(),
            r.distortion.lower
        ));
    }
    Ok(out.join("; "))
}

fn criterion_9() -> Check {
    let budget = CurveBudget::default();
    let mut geodesic = 0;
    for (name, f) in corpus() {
        let bld = dilatation::bld_verify(&f, f64::INFINITY, budget)
            .constant
            .unwrap();
        if f.source().edges_are_geodesic() {
            let lip = dilatation::lipschitz_bound(&dilatation::lipschitz_field(&f));
            ensure(
                (bld - lip).abs() <= 1e-9,
                format!("{name}: bld {bld} vs lipschitz {lip}"),
            )?;
            geodesic += 1;
        }
        let fact = pullback::factorize(&f, MetricChoice::Exact, 64).map_err(|e| e.to_string())?;
        let g = VertexMap::new(
            f.source().clone(),
            fact.pullback_space.clone(),
            fact.lift.clone(),
        )
        .unwrap();
        let bld_g = dilatation::bld_verify(&g, f64::INFINITY, budget)
            .constant
            .unwrap();
        ensure(
            (bld - bld_g).abs() <= 1e-9,
            format!("{name}: bld(f) {bld} vs bld(g) {bld_g}"),
        )?;
        let lq = dilatation::lq_verify(&f, f64::INFINITY).constant.unwrap();
        ensure(lq <= bld + 1e-9, format!("{name}: lq {lq} > bld {bld}"))?;
    }
    Ok(format!(
        "{} corpus maps, {geodesic} with geodesic sources",
        corpus().len()
    ))
}

fn qrmms(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_qrmms"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn strip_time(bytes: &[u8]) -> String {
    let text = String::from_utf8_lossy(bytes);
    text.lines()
        .filter(|l| !l.contains("\"wall_time_ms\""))
        .collect::<Vec<_>>()
        .join("\n")
}

fn criterion_10() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let gen = qrmms(
        d,
        &[
            "--out",
            ".",
            "--seed",
            "7",
            "gen",
            "random-map",
            "--n-src",
            "10",
            "--n-tgt",
            "4",
        ],
    );
    ensure(gen.status.success(), "gen failed")?;
    let runs: [&[&str]; 4] = [
        &[
            "--seed",
            "7",
            "verify",
            "--map",
            "random_map.json",
            "--property",
            "bqs",
            "--continua",
            "100",
        ],
        &[
            "--seed",
            "7",
            "verify",
            "--map",
            "random_map.json",
            "--property",
            "bld",
        ],
        &["--seed", "7", "measure", "--map", "random_map.json"],
        &[
            "--seed",
            "7",
            "pullback",
            "--map",
            "random_map.json",
            "--metric",
            "lower",
        ],
    ];
    for args in runs {
        let a = qrmms(d, args);
        let b = qrmms(d, args);
        ensure(
            a.status.code() == b.status.code(),
            format!("{args:?}: exit codes differ"),
        )?;
        ensure(
            strip_time(&a.stdout) == strip_time(&b.stdout),
            format!("{args:?}: reports differ"),
        )?;
    }
    Ok("4 commands, byte-identical reports apart from wall time".into())
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("annulus modulus", criterion_1),
        ("pullback bracket soundness", criterion_2),
        ("factorization invariants", criterion_3),
        ("measure identities", criterion_4),
        ("modulus oracle equivalence", criterion_5),
        ("conformal ground truth", criterion_6),
        ("Väisälä exact case", criterion_7),
        ("embedding pipeline", criterion_8),
        ("BLD battery", criterion_9),
        ("determinism", criterion_10),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name} [{secs:.1}s]: {detail}", i + 1),
            Err(detail) => {
                println!("criterion {:>2} FAIL {name} [{secs:.1}s]: {detail}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
