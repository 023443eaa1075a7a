//! Random instances shared by the integration tests.
#![allow(dead_code)]

use netcsd::graph::Graph;
use netcsd::models::{AttractionRepulsion, CoupledOscillators, ModelSpec, ParamSchedule};
use rand::Rng;
use rand_chacha::ChaCha20Rng;

pub fn random_tree(rng: &mut ChaCha20Rng, n: usize) -> Graph {
    let triples: Vec<(usize, usize, f64)> = (2..=n)
        .map(|v| (rng.random_range(1..v), v, rng.random_range(0.5..2.0)))
        .collect();
    Graph::from_triples(n, &triples).unwrap()
}

/// `B A f`, assembled node by node.
pub fn injections(graph: &Graph, flows: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; graph.node_count()];
    for (e, f) in graph.edges().iter().zip(flows) {
        out[e.head] += e.weight * f;
        out[e.tail] -= e.weight * f;
    }
    out
}

/// An oscillator tree whose flow on `cut` rises affinely from [0, 0.3) to 1 at alpha = 1
/// while every other flow stays fixed below 0.5 in magnitude.
pub fn co_instance(rng: &mut ChaCha20Rng, n: usize) -> (ModelSpec, usize) {
    let g = random_tree(rng, n);
    let m = g.edge_count();
    let cut = rng.random_range(0..m);
    let mut fb: Vec<f64> = (0..m).map(|_| rng.random_range(-0.45..0.45)).collect();
    fb[cut] = rng.random_range(0.0..0.3);
    let mut fd = vec![0.0; m];
    fd[cut] = 1.0 - fb[cut];
    let omega = ParamSchedule::affine(injections(&g, &fb), injections(&g, &fd)).unwrap();
    (ModelSpec::CoupledOscillators(CoupledOscillators::new(g, omega).unwrap()), cut)
}

/// A swarm on a random connected graph whose first edge's attraction falls
/// by `alpha` toward the repulsion level.
pub fn ar_instance(rng: &mut ChaCha20Rng, n: usize) -> (ModelSpec, f64) {
    let tree = random_tree(rng, n);
    let mut triples: Vec<(usize, usize, f64)> =
        tree.edges().iter().map(|e| (e.head + 1, e.tail + 1, 1.0)).collect();
    for _ in 0..n / 2 {
        let (a, b) = (rng.random_range(1..=n), rng.random_range(1..=n));
        if a != b && !triples.iter().any(|&(u, v, _)| (u, v) == (a, b) || (u, v) == (b, a)) {
            triples.push((a, b, 1.0));
        }
    }
    let g = Graph::from_triples(n, &triples).unwrap();
    let m = g.edge_count();
    let base: Vec<f64> = (0..m).map(|_| rng.random_range(1.5..3.0)).collect();
    let mut dir = vec![0.0; m];
    dir[0] = -1.0;
    let alpha_max = 0.9 * (base[0] - 1.0);
    let att = ParamSchedule::affine(base, dir).unwrap();
    let spec = ModelSpec::AttractionRepulsion(AttractionRepulsion::new(g, att, vec![1.0; m], 1.0).unwrap());
    (spec, alpha_max)
}


/// A swarm on a random tree whose attraction on `cut` falls by `alpha`,
/// reaching the unit repulsion at the returned alpha*.
pub fn ar_tree_instance(rng: &mut ChaCha20Rng, n: usize) -> (ModelSpec, usize, f64) {
    let g = random_tree(rng, n);
    let m = g.edge_count();
    let cut = rng.random_range(0..m);
    let base: Vec<f64> = (0..m).map(|_| rng.random_range(1.5..3.0)).collect();
    let mut dir = vec![0.0; m];
    dir[cut] = -1.0;
    let alpha_star = base[cut] - 1.0;
    let att = ParamSchedule::affine(base, dir).unwrap();
    let spec = ModelSpec::AttractionRepulsion(AttractionRepulsion::new(g, att, vec![1.0; m], 1.0).unwrap());
    (spec, cut, alpha_star)
}

/// An oscillator tree whose flow on `cut` follows `1 + (1 - f) (alpha - 1)^3`
/// from `f` in [0, 0.3): a tangent crossing at alpha* = 1. Other flows stay
/// fixed below 0.45 in magnitude.
pub fn co_cubic_instance(rng: &mut ChaCha20Rng, n: usize) -> (ModelSpec, usize) {
    let g = random_tree(rng, n);
    let m = g.edge_count();
    let cut = rng.random_range(0..m);
    let mut fb: Vec<f64> = (0..m).map(|_| rng.random_range(-0.45..0.45)).collect();
    fb[cut] = rng.random_range(0.0..0.3);
    let c = 1.0 - fb[cut];
    let on_cut = |k: f64| {
        let mut f = vec![0.0; m];
        f[cut] = k * c;
        injections(&g, &f)
    };
    let omega =
        ParamSchedule::polynomial(injections(&g, &fb), on_cut(3.0), vec![on_cut(-3.0), on_cut(1.0)]).unwrap();
    (ModelSpec::CoupledOscillators(CoupledOscillators::new(g, omega).unwrap()), cut)
}
