use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qrmms::dilatation::{self, CurveBudget};
use qrmms::embedding;
use qrmms::generators::{self, corpus};
use qrmms::measure;
use qrmms::modulus::{self, CurveFamily, FamilySample, SolverOptions, Weight};
use qrmms::pullback::{self, MetricChoice};
use qrmms::{Curve, Space, VertexMap, TOL};

fn space(seed: u64, n: usize, extra: usize) -> Space {
    generators::random_space(&mut ChaCha8Rng::seed_from_u64(seed), n, extra)
}

fn map(seed: u64) -> VertexMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let n_src = rng.gen_range(2..=10);
    let n_tgt = rng.gen_range(1..=n_src.min(5));
    generators::random_map(seed, n_src, n_tgt, rng.gen_bool(0.3)).unwrap()
}

fn subset(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|v| b.contains(v))
}

fn random_set(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    (0..n).filter(|_| rng.gen_bool(0.5)).collect()
}

fn curves(s: &Space, seed: u64, count: usize) -> Vec<Curve> {
    let mut out: Vec<Curve> = Vec::new();
    for p in dilatation::random_paths(s, count * 4, 4, seed) {
        if p.len() >= 2 && !out.iter().any(|c| c.vertices() == p.as_slice()) {
            out.push(Curve::new(s, p).unwrap());
        }
        if out.len() == count {
            break;
        }
    }
    out
}

// Every target edge at f(x) is the image of a source edge at x.
fn lifts_edges(f: &VertexMap) -> bool {
    let (s, t) = (f.source(), f.target());
    (0..s.n()).all(|x| {
        t.neighbors(f.apply(x))
            .iter()
            .all(|&(z, _)| s.neighbors(x).iter().any(|&(y, _)| f.apply(y) == z))
    })
}

fn opts() -> SolverOptions {
    SolverOptions {
        tol: 1e-9,
        max_iter: 1_000_000,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn path_metric_spaces_are_valid(seed in any::<u64>(), n in 1usize..12, extra in 0usize..8) {
        let s = space(seed, n, extra);
        prop_assert!(s.findings().is_empty());
        prop_assert!(s.is_path_metric());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn diameter_below_total_length(seed in any::<u64>(), n in 2usize..12) {
        let s = space(seed, n, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let set = random_set(&mut rng, n);
        prop_assume!(!set.is_empty());
        let total: f64 = s.edges().iter().map(|e| e.len).sum();
        prop_assert!(s.diameter(&set).unwrap() <= total + TOL);
    }

    #[test]
    fn balls_grow_with_radius(seed in any::<u64>(), n in 2usize..12, r1 in 0.0f64..6.0, dr in 0.0f64..6.0) {
        let s = space(seed, n, 4);
        for x in 0..n {
            prop_assert!(subset(&s.ball(x, r1).unwrap(), &s.ball(x, r1 + dr).unwrap()));
            prop_assert!(subset(&s.ball(x, r1).unwrap(), &s.ball_closed(x, r1).unwrap()));
        }
    }

    #[test]
    fn greedy_doubling_below_exact(seed in any::<u64>(), n in 2usize..12) {
        let d = space(seed, n, 5).doubling_constant();
        prop_assert!(d.exact);
        prop_assert!(d.greedy_lower <= d.value);
    }

    #[test]
    fn local_index_bounded_by_multiplicity(seed in any::<u64>()) {
        let f = map(seed);
        let top = f.max_multiplicity(&f.all_source());
        for x in 0..f.source().n() {
            let i = f.local_index(x);
            prop_assert!(1 <= i && i <= top);
        }
    }

    #[test]
    fn fiber_decomposition_partitions_level(seed in any::<u64>()) {
        let f = map(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = random_set(&mut rng, f.source().n());
        if set.is_empty() {
            set.push(0);
        }
        let top = f.max_multiplicity(&set);
        for n in 1..=top {
            let dec = f.decompose_fibers(&set, n).unwrap();
            let mut union: Vec<usize> = dec.parts.iter().flatten().copied().collect();
            let total = union.len();
            union.sort_unstable();
            union.dedup();
            prop_assert_eq!(total, union.len());
            prop_assert_eq!(&union, &dec.level);
            for part in &dec.parts {
                prop_assert!(f.max_multiplicity(part) <= 1);
            }
        }
    }

    #[test]
    fn greedy_cover_disjoint_and_covering(seed in any::<u64>()) {
        let f = map(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let family: Vec<(usize, f64)> = (0..rng.gen_range(1..6))
            .map(|_| (rng.gen_range(0..f.source().n()), rng.gen_range(0.1..3.0)))
            .collect();
        let cover = f.greedy_cover(&family, None).unwrap();
        prop_assert!(cover.disjoint);
        prop_assert!(cover.covers);
    }

    #[test]
    fn bracket_sandwich_and_detector(seed in any::<u64>()) {
        let f = map(seed);
        let b = pullback::bracket(&f).unwrap();
        let d = pullback::exact(&f, 12).unwrap();
        let n = f.source().n();
        let constant = pullback::constant_components(&f);
        for i in 0..n {
            for j in 0..n {
                prop_assert!(b.lower.get(i, j) <= d.get(i, j) + TOL);
                prop_assert!(d.get(i, j) <= 2.0 * b.lower.get(i, j) + TOL);
                if i != j {
                    let together = constant.iter().any(|c| c.contains(&i) && c.contains(&j));
                    prop_assert_eq!(d.get(i, j) <= TOL, together);
                }
            }
        }
        if pullback::is_discrete(&f) {
            prop_assert!(d.metric_findings(true).is_empty());
        }
    }

    #[test]
    fn exact_pullback_preserves_path_diameters(seed in any::<u64>()) {
        let f = map(seed);
        prop_assume!(pullback::is_discrete(&f));
        let fact = pullback::factorize(&f, MetricChoice::Exact, 12).unwrap();
        let paths = pullback::curve_sample(f.source(), 5, 5000);
        let cert = pullback::verify_projection(&fact, &paths);
        prop_assert!(cert.pass, "{:?}", cert.notes);
    }

    #[test]
    fn pullback_measure_total(seed in any::<u64>()) {
        let f = map(seed);
        let nu = f.target().masses();
        let pm = measure::pullback_measure(&f, nu).unwrap();
        let all = f.all_source();
        let expect: f64 = (0..f.target().n()).map(|y| f.multiplicity(y, &all) as f64 * nu[y]).sum();
        prop_assert!((pm.total() - expect).abs() <= 1e-12 * expect.max(1.0));
    }

    #[test]
    fn essential_index_chain(seed in any::<u64>()) {
        let f = map(seed);
        for (x, e) in measure::essential_index_field(&f, f.target().masses()).unwrap().iter().enumerate() {
            prop_assert!(e.value >= 1.0 - TOL);
            prop_assert!(e.value <= f.local_index(x) as f64 + TOL);
        }
    }

    #[test]
    fn dilatation_rows_ordered(seed in any::<u64>()) {
        let f = map(seed);
        for x in 0..f.source().n() {
            let p = dilatation::dilatation_profile(&f, x, None).unwrap();
            for row in &p.rows {
                prop_assert!(row.inner <= row.outer + TOL);
            }
        }
    }

    #[test]
    fn bld_survives_exact_pullback(seed in any::<u64>()) {
        let f = map(seed);
        prop_assume!(pullback::is_discrete(&f));
        let fact = pullback::factorize(&f, MetricChoice::Exact, 12).unwrap();
        let g = VertexMap::new(f.source().clone(), fact.pullback_space.clone(), fact.lift.clone()).unwrap();
        let budget = CurveBudget { seed, ..CurveBudget::default() };
        let lf = dilatation::bld_verify(&f, f64::INFINITY, budget).constant.unwrap();
        let lg = dilatation::bld_verify(&g, f64::INFINITY, budget).constant.unwrap();
        prop_assert!((lf - lg).abs() <= 1e-9 * lf.max(1.0) || (lf.is_infinite() && lg.is_infinite()));
    }

    #[test]
    fn lq_below_bld_on_geodesic_sources(seed in any::<u64>()) {
        let f = map(seed);
        prop_assume!(f.source().edges_are_geodesic() && lifts_edges(&f));
        let bld = dilatation::bld_verify(&f, f64::INFINITY, CurveBudget::default()).constant.unwrap();
        let lq = dilatation::lq_verify(&f, f64::INFINITY).constant.unwrap();
        prop_assert!(lq <= bld + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn modulus_monotone_and_subadditive(seed in any::<u64>(), n in 3usize..8, p in prop::sample::select(vec![1.5, 2.0, 3.0])) {
        let s = space(seed, n, 3);
        let w = Weight::Vertex(s.masses().to_vec());
        let a = curves(&s, seed, 3);
        let b = curves(&s, seed.wrapping_add(1), 3);
        let mut both = a.clone();
        both.extend(b.iter().filter(|c| !a.contains(c)).cloned());
        let m = |c: &[Curve]| modulus::modulus(&s, &CurveFamily::Explicit(c.to_vec()), p, &w, opts()).unwrap();
        let (ma, mb, mab) = (m(&a), m(&b), m(&both));
        prop_assert!(ma.value <= mab.value + 1e-6);
        prop_assert!(mab.value <= ma.value + mb.value + 1e-6);
        for c in &both {
            let l: f64 = c.edges().iter().map(|&e| mab.density[e] * s.edges()[e].len).sum();
            prop_assert!(l >= 1.0 - 1e-6);
        }
    }

    #[test]
    fn connecting_modulus_grows_with_carrier(seed in any::<u64>(), n in 4usize..9) {
        let s = space(seed, n, 4);
        let w = Weight::Vertex(s.masses().to_vec());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (e, f) = (vec![0], vec![n - 1]);
        let small: Vec<usize> = (0..n).filter(|&v| v == 0 || v == n - 1 || rng.gen_bool(0.6)).collect();
        let all: Vec<usize> = (0..n).collect();
        let m = |within: Vec<usize>| {
            modulus::modulus(&s, &CurveFamily::connecting(e.clone(), f.clone(), within), 2.0, &w, opts())
                .unwrap()
                .value
        };
        prop_assert!(m(small) <= m(all) + 1e-6);
    }

    #[test]
    fn projection_modulus_bound(seed in any::<u64>()) {
        let f = map(seed);
        prop_assume!(pullback::is_discrete(&f) && f.source().n() >= 2 && f.openness_scan().pass);
        prop_assume!(f.target().edges_are_geodesic());
        let fact = pullback::factorize(&f, MetricChoice::Exact, 12).unwrap();
        let n = f.source().n();
        let samples = vec![FamilySample {
            label: "ends".into(),
            family: CurveFamily::connecting(vec![0], vec![n - 1], (0..n).collect()),
            omega: None,
        }];
        let cert = modulus::projection_modulus_check(&fact, &samples, 2.0, opts()).unwrap();
        prop_assert!(cert.pass, "{:?}", cert.notes);
    }

    #[test]
    fn upper_gradient_is_minimal(seed in any::<u64>(), n in 2usize..9) {
        let s = space(seed, n, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let g = modulus::minimal_upper_gradient(&s, &u).unwrap();
        for c in curves(&s, seed, 10) {
            prop_assert!(modulus::upper_gradient_holds(&s, &u, &g, &c));
        }
        // lowering g on any edge breaks it on that edge
        for (e, edge) in s.edges().iter().enumerate() {
            if g[e] > 1e-6 {
                let mut h = g.clone();
                h[e] *= 0.5;
                let c = Curve::new(&s, vec![edge.u, edge.v]).unwrap();
                prop_assert!(!modulus::upper_gradient_holds(&s, &u, &h, &c));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn embedding_invariants(seed in any::<u64>()) {
        let f = map(seed);
        prop_assume!(pullback::is_discrete(&f) && f.max_multiplicity(&f.all_source()) >= 2);
        prop_assume!(f.openness_scan().pass);
        let r = embedding::embed(&f, 12).unwrap();
        prop_assert!(r.injective);
        let phi = r.certificates.iter().find(|c| c.name == "phi_lipschitz").unwrap();
        prop_assert!(phi.pass);
        prop_assert!(r.distortion.lower > 0.0 && r.distortion.upper.is_finite());
    }
}

#[test]
fn corpus_passes_validators() {
    for (name, f) in corpus() {
        assert!(f.source().findings().is_empty(), "{name}");
        assert!(f.target().findings().is_empty(), "{name}");
    }
}

#[test]
fn winding_observations() {
    for k in 1..=3 {
        let f = generators::winding(k, 3, 6).unwrap();
        assert_eq!(f.max_multiplicity(&f.all_source()), k);
        let branch = f.branch_set();
        if k == 1 {
            assert!(branch.is_empty());
        } else {
            assert_eq!(branch, vec![0]);
            assert_eq!(f.local_index(0), k);
        }
        // Jacobian is constant on rings and monotone outward
        let jac = measure::jacobians(&f, f.source().masses(), f.target().masses()).unwrap();
        let per_ring: Vec<f64> = (0..3).map(|ring| jac.forward[1 + ring * k * 6]).collect();
        assert!(
            per_ring.windows(2).all(|w| w[0] <= w[1] + 1e-12)
                || per_ring.windows(2).all(|w| w[0] >= w[1] - 1e-12)
        );
    }
}

#[test]
fn net_radii_lipschitz_and_comparable() {
    for f in [
        generators::cycle_cover(12, 2).unwrap(),
        generators::winding(2, 2, 5).unwrap(),
    ] {
        let fact = pullback::factorize(&f, MetricChoice::Exact, 64).unwrap();
        let pi = &fact.projection;
        for k in 1..pi.max_multiplicity(&pi.all_source()) {
            let radii = embedding::rk_radii(pi, k);
            assert!(embedding::radius_lipschitz_slack(pi, &radii) <= 1e-9);
            assert_eq!(embedding::comparability_violations(pi, &radii), (0, 0));
        }
    }
}
