//! Weighted undirected graphs with a fixed edge orientation, and the
//! incidence/Laplacian/spectral machinery built on top of them.

mod cut;
mod spectral;

pub use cut::{cut_from_signs, CutSet};
pub use spectral::{
    fiedler_pair, projection_matrix, pseudoinverse, spectral_decomp, FiedlerPair,
    SpectralDecomposition, PSEUDOINVERSE_CLAMP,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One oriented edge. Node indices are 0-based internally.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub head: usize,
    pub tail: usize,
    pub weight: f64,
}

/// Undirected weighted graph; edge `k` is oriented `head -> tail`.
///
/// Serialized as `{"n": int, "edges": [{"u": int, "v": int, "w": real}]}`
/// with 1-based node indices, `u` the head and `v` the tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
}

#[derive(Serialize, Deserialize)]
struct EdgeRepr {
    u: usize,
    v: usize,
    w: f64,
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    n: usize,
    edges: Vec<EdgeRepr>,
}

impl TryFrom<GraphRepr> for Graph {
    type Error = Error;

    fn try_from(repr: GraphRepr) -> Result<Self> {
        let mut edges = Vec::with_capacity(repr.edges.len());
        for (k, e) in repr.edges.iter().enumerate() {
            if e.u == 0 || e.v == 0 {
                return Err(Error::InvalidGraph(format!(
                    "edge {} uses node 0; indices are 1-based",
                    k + 1
                )));
            }
            edges.push(Edge {
                head: e.u - 1,
                tail: e.v - 1,
                weight: e.w,
            });
        }
        Graph::new(repr.n, edges)
    }
}

impl From<Graph> for GraphRepr {
    fn from(g: Graph) -> Self {
        GraphRepr {
            n: g.n,
            edges: g
                .edges
                .iter()
                .map(|e| EdgeRepr {
                    u: e.head + 1,
                    v: e.tail + 1,
                    w: e.weight,
                })
                .collect(),
        }
    }
}

/// Displays an edge with 1-based node labels, e.g. `(2, 3)`.
pub struct EdgeLabel<'a>(pub &'a Edge);

impl std::fmt::Display for EdgeLabel<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.0.head + 1, self.0.tail + 1)
    }
}

impl Graph {
    /// Validates and builds a graph from 0-based edges.
    pub fn new(n: usize, edges: Vec<Edge>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("node count must be positive".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for (k, e) in edges.iter().enumerate() {
            if e.head >= n || e.tail >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge {} references a node outside 1..={n}",
                    k + 1
                )));
            }
            if e.head == e.tail {
                return Err(Error::InvalidGraph(format!("edge {} is a self-loop", k + 1)));
            }
            if !(e.weight.is_finite() && e.weight > 0.0) {
                return Err(Error::InvalidGraph(format!(
                    "edge {} has weight {}, must be positive",
                    k + 1,
                    e.weight
                )));
            }
            let key = (e.head.min(e.tail), e.head.max(e.tail));
            if !seen.insert(key) {
                return Err(Error::InvalidGraph(format!(
                    "edge {} duplicates the pair ({}, {})",
                    k + 1,
                    key.0 + 1,
                    key.1 + 1
                )));
            }
        }
        Ok(Graph { n, edges })
    }

    /// Convenience constructor from 1-based `(u, v, w)` triples.
    pub fn from_triples(n: usize, triples: &[(usize, usize, f64)]) -> Result<Self> {
        let repr = GraphRepr {
            n,
            edges: triples
                .iter()
                .map(|&(u, v, w)| EdgeRepr { u, v, w })
                .collect(),
        };
        Graph::try_from(repr)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn weights(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.weight).collect()
    }

    /// Same topology and orientation, new weights.
    pub fn with_weights(&self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.edges.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} weights, got {}",
                self.edges.len(),
                weights.len()
            )));
        }
        let edges = self
            .edges
            .iter()
            .zip(weights)
            .map(|(e, &w)| Edge { weight: w, ..*e })
            .collect();
        Graph::new(self.n, edges)
    }

    /// Finds the edge joining `a` and `b` (0-based, either orientation).
    pub fn find_edge(&self, a: usize, b: usize) -> Option<usize> {
        self.edges
            .iter()
            .position(|e| (e.head == a && e.tail == b) || (e.head == b && e.tail == a))
    }

    /// `B^T x`: per-edge difference `x[head] - x[tail]`.
    pub fn edge_differences(&self, x: &[f64]) -> Vec<f64> {
        self.edges.iter().map(|e| x[e.head] - x[e.tail]).collect()
    }

    /// `B y` accumulated into `out` (which is overwritten).
    pub fn scatter_edges(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (e, &val) in self.edges.iter().zip(y) {
            out[e.head] += val;
            out[e.tail] -= val;
        }
    }

    /// Number of connected components, ignoring the edges flagged in `removed`.
    pub fn component_count_without(&self, removed: &[bool]) -> usize {
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        let mut components = self.n;
        for (k, e) in self.edges.iter().enumerate() {
            if removed.get(k).copied().unwrap_or(false) {
                continue;
            }
            let (a, b) = (find(&mut parent, e.head), find(&mut parent, e.tail));
            if a != b {
                parent[a] = b;
                components -= 1;
            }
        }
        components
    }

    pub fn is_connected(&self) -> bool {
        self.component_count_without(&[]) == 1
    }

    /// A connected graph with exactly `n - 1` edges.
    pub fn is_tree(&self) -> bool {
        self.edges.len() + 1 == self.n && self.is_connected()
    }
}

/// Node-edge incidence matrix `B` (n x m): `+1` at the head, `-1` at the tail.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix(DMatrix<f64>);

impl IncidenceMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

pub fn build_incidence(graph: &Graph) -> IncidenceMatrix {
    let mut b = DMatrix::zeros(graph.n, graph.edges.len());
    for (k, e) in graph.edges.iter().enumerate() {
        b[(e.head, k)] = 1.0;
        b[(e.tail, k)] = -1.0;
    }
    IncidenceMatrix(b)
}

/// Weighted Laplacian `B W B^T` assembled edge by edge.
pub fn laplacian(graph: &Graph) -> DMatrix<f64> {
    weighted_laplacian(graph, &graph.weights())
}

/// `B diag(weights) B^T` for arbitrary (possibly non-positive) edge weights.
///
/// Used for the perturbation-dynamics Laplacians, whose weights vanish at
/// the bifurcation.
pub fn weighted_laplacian(graph: &Graph, weights: &[f64]) -> DMatrix<f64> {
    assert_eq!(weights.len(), graph.edges.len(), "one weight per edge");
    let mut l = DMatrix::zeros(graph.n, graph.n);
    for (e, &w) in graph.edges.iter().zip(weights) {
        l[(e.head, e.head)] += w;
        l[(e.tail, e.tail)] += w;
        l[(e.head, e.tail)] -= w;
        l[(e.tail, e.head)] -= w;
    }
    l
}

/// Per-edge minimum of `family(alpha)` over `alpha_grid`.
///
/// The result keeps the topology and orientation of `graph`. Any minimum
/// that is not strictly positive is an error.
pub fn lower_bound_graph<F>(graph: &Graph, family: F, alpha_grid: &[f64]) -> Result<Graph>
where
    F: Fn(f64) -> Result<Vec<f64>>,
{
    if alpha_grid.is_empty() {
        return Err(Error::InvalidArgument("alpha grid is empty".into()));
    }
    let mut lower = vec![f64::INFINITY; graph.edge_count()];
    for &alpha in alpha_grid {
        let w = family(alpha)?;
        if w.len() != lower.len() {
            return Err(Error::InvalidArgument(format!(
                "weight family returned {} weights for {} edges",
                w.len(),
                lower.len()
            )));
        }
        for (lo, wi) in lower.iter_mut().zip(w) {
            *lo = lo.min(wi);
        }
    }
    if let Some((edge, &value)) = lower
        .iter()
        .enumerate()
        .find(|(_, &v)| !(v > 0.0 && v.is_finite()))
    {
        return Err(Error::NonpositiveWeight { edge, value });
    }
    graph.with_weights(&lower)
}

/// `v` as a column vector.
pub(crate) fn column(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn p3() -> Graph {
        Graph::from_triples(3, &[(1, 2, 1.0), (2, 3, 1.0)]).unwrap()
    }

    #[test]
    fn incidence_single_edge() {
        let g = Graph::from_triples(2, &[(1, 2, 1.0)]).unwrap();
        let b = build_incidence(&g);
        assert_eq!(b.matrix(), &DMatrix::from_row_slice(2, 1, &[1.0, -1.0]));
    }

    #[test]
    fn incidence_path() {
        let b = build_incidence(&p3());
        let expected = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, -1.0, 1.0, 0.0, -1.0]);
        assert_eq!(b.matrix(), &expected);
        for col in b.matrix().column_iter() {
            assert_eq!(col.sum(), 0.0);
        }
    }

    #[test]
    fn laplacian_small_cases() {
        let g = Graph::from_triples(2, &[(1, 2, 2.0)]).unwrap();
        assert_eq!(
            laplacian(&g),
            DMatrix::from_row_slice(2, 2, &[2.0, -2.0, -2.0, 2.0])
        );
        let expected =
            DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]);
        assert_eq!(laplacian(&p3()), expected);
    }

    #[test]
    fn laplacian_matches_incidence_product() {
        let g = Graph::from_triples(4, &[(1, 2, 0.5), (3, 2, 2.0), (4, 1, 1.5), (3, 4, 0.2)])
            .unwrap();
        let b = build_incidence(&g).into_inner();
        let w = DMatrix::from_diagonal(&column(&g.weights()));
        let l = &b * w * b.transpose();
        assert_abs_diff_eq!(laplacian(&g), l, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_graphs() {
        assert!(Graph::from_triples(2, &[(1, 1, 1.0)]).is_err());
        assert!(Graph::from_triples(2, &[(1, 3, 1.0)]).is_err());
        assert!(Graph::from_triples(2, &[(1, 2, 0.0)]).is_err());
        assert!(Graph::from_triples(3, &[(1, 2, 1.0), (2, 1, 1.0)]).is_err());
        assert!(Graph::from_triples(0, &[]).is_err());
        assert!(Graph::from_triples(2, &[(0, 1, 1.0)]).is_err());
    }

    #[test]
    fn json_roundtrip_is_one_based() {
        let g = p3();
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(
            s,
            r#"{"n":3,"edges":[{"u":1,"v":2,"w":1.0},{"u":2,"v":3,"w":1.0}]}"#
        );
        let back: Graph = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<Graph>(r#"{"n":2,"edges":[{"u":1,"v":1,"w":1}]}"#).is_err());
    }

    #[test]
    fn tree_and_connectivity() {
        assert!(p3().is_tree());
        let tri = Graph::from_triples(3, &[(1, 2, 1.0), (2, 3, 1.0), (1, 3, 1.0)]).unwrap();
        assert!(tri.is_connected() && !tri.is_tree());
        let split = Graph::from_triples(4, &[(1, 2, 1.0), (3, 4, 1.0)]).unwrap();
        assert!(!split.is_connected());
    }

    #[test]
    fn lower_bound_constant_is_identity() {
        let g = p3();
        let lb = lower_bound_graph(&g, |_| Ok(vec![1.0, 1.0]), &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(lb, g);
    }

    #[test]
    fn lower_bound_takes_grid_minimum() {
        let g = Graph::from_triples(2, &[(1, 2, 1.0)]).unwrap();
        let lb = lower_bound_graph(
            &g,
            |a: f64| Ok(vec![a.asin().cos()]),
            &[0.0, 0.5, 0.9],
        )
        .unwrap();
        assert_abs_diff_eq!(lb.edges()[0].weight, 0.9f64.asin().cos(), epsilon = 1e-15);
        assert_abs_diff_eq!(lb.edges()[0].weight, 0.4359, epsilon = 1e-4);
    }

    #[test]
    fn lower_bound_rejects_nonpositive() {
        let g = Graph::from_triples(2, &[(1, 2, 1.0)]).unwrap();
        let err = lower_bound_graph(&g, |a| Ok(vec![1.0 - a]), &[0.0, 0.5, 1.5]).unwrap_err();
        assert!(matches!(err, Error::NonpositiveWeight { edge: 0, .. }));
    }
}
