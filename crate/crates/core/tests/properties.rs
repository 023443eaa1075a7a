use nalgebra::DMatrix;
use netcsd::bifurcation::{find_alpha_star, linearization_fiedler, reference_equilibrium};
use netcsd::detection::{
    detect_and_localize, gamma_matrices, lambda3_lower_bound, perturbation_segment,
    theoretical_covariance_trace, DetectionConfig, TraceValue,
};
use netcsd::graph::{
    build_incidence, cut_from_signs, laplacian, pseudoinverse, spectral_decomp, CutSet, Graph,
};
use netcsd::models::{attraction_repulsion_field, kuramoto_field, ModelSpec};
use netcsd::simulation::integrate;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

mod common;
use common::{ar_instance, ar_tree_instance, co_cubic_instance, co_instance, random_tree};

fn connected_graph(seed: u64, n: usize) -> Graph {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let tree = random_tree(&mut rng, n);
    let mut triples: Vec<(usize, usize, f64)> =
        tree.edges().iter().map(|e| (e.head + 1, e.tail + 1, e.weight)).collect();
    for _ in 0..n {
        let (a, b) = (rng.random_range(1..=n), rng.random_range(1..=n));
        if a != b && !triples.iter().any(|&(u, v, _)| (u, v) == (a, b) || (u, v) == (b, a)) {
            triples.push((a, b, rng.random_range(0.1..3.0)));
        }
    }
    Graph::from_triples(n, &triples).unwrap()
}

fn normals(rng: &mut ChaCha20Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn laplacian_is_incidence_product(seed in any::<u64>(), n in 2usize..12) {
        let g = connected_graph(seed, n);
        let b = build_incidence(&g).into_inner();
        let w = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(g.weights()));
        let diff = (&b * w * b.transpose() - laplacian(&g)).abs().max();
        prop_assert!(diff <= 1e-12);
    }

    #[test]
    fn spectral_reconstruction(seed in any::<u64>(), n in 1usize..15) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-5.0..5.0));
        let m = (&a + a.transpose()) * 0.5;
        let s = spectral_decomp(&m).unwrap();
        prop_assert!((s.reconstruct() - &m).norm() <= 1e-8 * m.norm().max(1.0));
        prop_assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn moore_penrose_identities(seed in any::<u64>(), n in 2usize..=12) {
        let g = connected_graph(seed, n);
        let l = laplacian(&g);
        let p = pseudoinverse(&l).unwrap();
        let scale = l.norm().max(1.0) * p.norm().max(1.0);
        prop_assert!((&l * &p * &l - &l).norm() <= 1e-9 * scale * l.norm());
        prop_assert!((&p * &l * &p - &p).norm() <= 1e-9 * scale * p.norm());
        prop_assert!(((&l * &p) - (&l * &p).transpose()).norm() <= 1e-9 * scale);
        prop_assert!(((&p * &l) - (&p * &l).transpose()).norm() <= 1e-9 * scale);
    }

    #[test]
    fn indicator_signs_recover_tree_cuts(seed in any::<u64>(), n in 2usize..=12) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let g = random_tree(&mut rng, n);
        let k = rng.random_range(0..g.edge_count());
        let cut = CutSet::from_bridge(&g, k).unwrap();
        let found = cut_from_signs(&g, &cut.indicator, 0.0).unwrap();
        prop_assert_eq!(&found.nodes, &cut.nodes);
        prop_assert_eq!(&found.boundary_edges, &vec![k]);
        prop_assert!(found.is_two_cutset);
    }

    #[test]
    fn swarm_field_conserves_the_mean(seed in any::<u64>(), n in 2usize..10, alpha in 0.0f64..0.5) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (spec, _) = ar_instance(&mut rng, n);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let f = attraction_repulsion_field(&x, alpha, &spec).unwrap();
        let scale = f.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
        prop_assert!(f.iter().sum::<f64>().abs() <= 1e-12 * scale);
    }

    #[test]
    fn oscillator_field_is_shift_invariant(seed in any::<u64>(), n in 2usize..10, c in -10.0f64..10.0) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (spec, _) = co_instance(&mut rng, n);
        let theta: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let shifted: Vec<f64> = theta.iter().map(|t| t + c).collect();
        let a = kuramoto_field(&theta, 0.3, &spec).unwrap();
        let b = kuramoto_field(&shifted, 0.3, &spec).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn swarm_lyapunov_decay_and_mean_conservation(seed in any::<u64>(), n in 2usize..8, frac in 0.0f64..0.95) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (spec, alpha_star) = {
            let (s, _, a) = ar_tree_instance(&mut rng, n);
            (s, a)
        };
        let alpha = frac * alpha_star;
        let field = spec.at(alpha).unwrap();
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let traj = integrate(|x, out| field.eval_into(x, out), &x0, 40.0, 1e-2).unwrap();
        let sum0: f64 = x0.iter().sum();
        let mut last_v = f64::INFINITY;
        for (_, x) in traj.rows() {
            let sum: f64 = x.iter().sum();
            prop_assert!((sum - sum0).abs() <= 1e-6);
            let v: f64 = x.iter().map(|v| v * v).sum();
            prop_assert!(v <= last_v + 1e-9, "V rose from {last_v} to {v}");
            last_v = v;
        }
        let mean = sum0 / n as f64;
        let spread = traj.last_state().iter().fold(0.0f64, |a, v| a.max((v - mean).abs()));
        let rate = linearization_fiedler(alpha, &spec).unwrap().lambda2;
        // Converges at least as fast as the slowest linear mode allows.
        if rate * 40.0 > 12.0 {
            prop_assert!(spread < 1e-3, "spread {spread}");
        }
    }
}

#[test]
fn fiedler_value_falls_toward_the_crossing() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    for _ in 0..40 {
        let n = rng.random_range(3..=10);
        let (co, _) = co_instance(&mut rng, n);
        let (ar, _, ar_star) = ar_tree_instance(&mut rng, n);
        for (spec, star) in [(co, 1.0), (ar, ar_star)] {
            let mut last = f64::INFINITY;
            for i in 0..=20 {
                let alpha = star * (0.999 * i as f64 / 20.0);
                let l2 = linearization_fiedler(alpha, &spec).unwrap().lambda2;
                assert!(l2 <= last * (1.0 + 1e-9), "lambda2 rose to {l2} from {last}");
                last = l2;
            }
        }
    }
}

#[test]
fn covariance_trace_finite_before_and_divergent_at_the_crossing() {
    let mut rng = ChaCha20Rng::seed_from_u64(12);
    for _ in 0..30 {
        let n = rng.random_range(2..=10);
        let (spec, _, _) = ar_tree_instance(&mut rng, n);
        let ModelSpec::AttractionRepulsion(m) = &spec else { unreachable!() };
        let cut_edge = m.attraction.direction.iter().position(|d| *d != 0.0).unwrap();
        let cut = CutSet::from_bridge(&m.graph, cut_edge).unwrap();
        let star = find_alpha_star(&spec, (0.0, 3.0), Some(&cut)).unwrap();
        for frac in [0.0, 0.5, 0.9, 0.999] {
            let g = gamma_matrices(frac * star, &spec, 1.0).unwrap();
            assert!(matches!(theoretical_covariance_trace(&g.gamma_bar, 1.0).unwrap(), TraceValue::Finite(v) if v > 0.0));
        }
        let g = gamma_matrices(star, &spec, 1.0).unwrap();
        assert_eq!(theoretical_covariance_trace(&g.gamma_bar, 1.0).unwrap(), TraceValue::Divergent);
    }
}

/// Seeded perturbation of a planted-cut instance at 0.99 alpha*; true when
/// the detector flags it and returns exactly the planted edge.
fn localizes(spec: &ModelSpec, cut_edge: usize, alpha_star: f64, rng: &mut ChaCha20Rng) -> bool {
    let g = spec.graph().unwrap();
    let n = g.node_count();
    let grid: Vec<f64> = (0..=100).map(|i| 0.99 * alpha_star * i as f64 / 100.0).collect();
    let l3 = lambda3_lower_bound(spec, &grid).unwrap();
    let alpha = 0.99 * alpha_star;
    let eq = reference_equilibrium(alpha, spec).unwrap();
    let mut eps0 = normals(rng, n);
    let norm = eps0.iter().map(|v| v * v).sum::<f64>().sqrt();
    eps0.iter_mut().for_each(|v| *v *= 0.05 / norm);
    let x0: Vec<f64> = eq.iter().zip(&eps0).map(|(a, b)| a + b).collect();
    // The most the non-Fiedler modes can leave at t*.
    let zeta: f64 = 0.01;
    let cfg = DetectionConfig {
        zeta,
        delta: n as f64 * zeta * zeta * 0.05,
        sign_tol: None,
        lambda3_lb: Some(l3),
        read_window: None,
    };
    let t_star = cfg.read_time().unwrap();
    let dt = 1e-2;
    let horizon = ((t_star + 1.0) / dt).ceil() * dt;
    let field = spec.at(alpha).unwrap();
    let traj = integrate(|x, out| field.eval_into(x, out), &x0, horizon, dt).unwrap();
    let seg = perturbation_segment(&traj, &eq, 0.0, spec.is_oscillator()).unwrap();
    let report = detect_and_localize(&seg, &eps0, &cfg, g).unwrap();
    let e = g.edges()[cut_edge];
    report.bifurcating && report.boundary_edges == Some(vec![(e.head + 1, e.tail + 1)])
}

#[test]
fn localization_recovers_planted_cuts() {
    let mut rng = ChaCha20Rng::seed_from_u64(13);
    let trials = 200;
    let mut hits = 0;
    for i in 0..trials {
        let n = rng.random_range(3..=12);
        let (spec, cut, star) = if i % 2 == 0 {
            let (s, c) = co_cubic_instance(&mut rng, n);
            (s, c, 1.0)
        } else {
            ar_tree_instance(&mut rng, n)
        };
        hits += localizes(&spec, cut, star, &mut rng) as usize;
    }
    let rate = hits as f64 / trials as f64;
    assert!(rate >= 0.95, "localized {hits}/{trials}");
}
