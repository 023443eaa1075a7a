use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};

/// A node set `S`, its boundary edges, and its `+1/-1` indicator vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutSet {
    /// Nodes in `S` (0-based, ascending).
    pub nodes: Vec<usize>,
    /// Indices of edges with exactly one endpoint in `S`.
    pub boundary_edges: Vec<usize>,
    pub indicator: Vec<f64>,
    /// True iff removing `boundary_edges` leaves exactly two components.
    pub is_two_cutset: bool,
    /// Nodes whose sign could not be classified (only from `cut_from_signs`).
    #[serde(default)]
    pub undetermined: Vec<usize>,
}

impl CutSet {
    /// Builds the cut induced by `nodes` (0-based).
    pub fn from_nodes(graph: &Graph, nodes: &[usize]) -> Result<Self> {
        let n = graph.node_count();
        let mut member = vec![false; n];
        for &i in nodes {
            if i >= n {
                return Err(Error::InvalidArgument(format!(
                    "node {} is outside the graph",
                    i + 1
                )));
            }
            member[i] = true;
        }
        Ok(Self::from_membership(graph, &member, Vec::new()))
    }

    /// Cut from 1-based node labels, as used in scenario files.
    pub fn from_labels(graph: &Graph, labels: &[usize]) -> Result<Self> {
        if labels.contains(&0) {
            return Err(Error::InvalidArgument("node labels are 1-based".into()));
        }
        let nodes: Vec<usize> = labels.iter().map(|l| l - 1).collect();
        Self::from_nodes(graph, &nodes)
    }

    /// The side of a single edge containing its head, after removing that
    /// edge from a tree. Errors if the edge is not a bridge.
    pub fn from_bridge(graph: &Graph, edge: usize) -> Result<Self> {
        let e = graph
            .edges()
            .get(edge)
            .ok_or_else(|| Error::InvalidArgument(format!("edge index {edge} out of range")))?;
        let n = graph.node_count();
        let mut adjacency = vec![Vec::new(); n];
        for (k, other) in graph.edges().iter().enumerate() {
            if k != edge {
                adjacency[other.head].push(other.tail);
                adjacency[other.tail].push(other.head);
            }
        }
        let mut member = vec![false; n];
        let mut stack = vec![e.head];
        member[e.head] = true;
        while let Some(i) = stack.pop() {
            for &j in &adjacency[i] {
                if !member[j] {
                    member[j] = true;
                    stack.push(j);
                }
            }
        }
        if member[e.tail] {
            return Err(Error::InvalidArgument(format!(
                "edge {} is not a bridge",
                edge + 1
            )));
        }
        Ok(Self::from_membership(graph, &member, Vec::new()))
    }

    fn from_membership(graph: &Graph, member: &[bool], undetermined: Vec<usize>) -> Self {
        let nodes: Vec<usize> = (0..member.len()).filter(|&i| member[i]).collect();
        let boundary_edges: Vec<usize> = graph
            .edges()
            .iter()
            .enumerate()
            .filter(|(_, e)| member[e.head] != member[e.tail])
            .map(|(k, _)| k)
            .collect();
        let indicator = member
            .iter()
            .map(|&m| if m { 1.0 } else { -1.0 })
            .collect();
        let mut removed = vec![false; graph.edge_count()];
        for &k in &boundary_edges {
            removed[k] = true;
        }
        let is_two_cutset =
            !boundary_edges.is_empty() && graph.component_count_without(&removed) == 2;
        CutSet {
            nodes,
            boundary_edges,
            indicator,
            is_two_cutset,
            undetermined,
        }
    }

    /// Boundary edges as 1-based `(head, tail)` labels.
    pub fn boundary_labels(&self, graph: &Graph) -> Vec<(usize, usize)> {
        self.boundary_edges
            .iter()
            .map(|&k| {
                let e = graph.edges()[k];
                (e.head + 1, e.tail + 1)
            })
            .collect()
    }

    pub fn contains(&self, node: usize) -> bool {
        self.nodes.binary_search(&node).is_ok()
    }
}

/// Splits nodes by the sign of a residual vector.
///
/// `S` holds the nodes with `r_j > tol`. Nodes with `|r_j| <= tol` are
/// reported as undetermined and kept out of `S`. Errors with `EmptyCut` when
/// no node is strictly positive or none is strictly negative.
pub fn cut_from_signs(graph: &Graph, r: &[f64], tol: f64) -> Result<CutSet> {
    let n = graph.node_count();
    if r.len() != n {
        return Err(Error::InvalidArgument(format!(
            "residual has {} entries for {n} nodes",
            r.len()
        )));
    }
    if !(tol >= 0.0) {
        return Err(Error::InvalidArgument("sign tolerance must be >= 0".into()));
    }
    let member: Vec<bool> = r.iter().map(|&x| x > tol).collect();
    let undetermined: Vec<usize> = (0..n).filter(|&i| r[i].abs() <= tol).collect();
    let positives = member.iter().filter(|&&m| m).count();
    let negatives = r.iter().filter(|&&x| x < -tol).count();
    if positives == 0 || negatives == 0 {
        return Err(Error::EmptyCut);
    }
    Ok(CutSet::from_membership(graph, &member, undetermined))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Six-node tree with node 2 hanging off node 3.
    fn tree6() -> Graph {
        Graph::from_triples(
            6,
            &[(1, 3, 1.0), (2, 3, 1.0), (3, 4, 1.0), (3, 5, 1.0), (3, 6, 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn sign_pattern_isolating_node_two() {
        let g = tree6();
        let r = [0.3, -0.9, 0.2, 0.1, 0.1, 0.2];
        let cut = cut_from_signs(&g, &r, 0.0).unwrap();
        assert_eq!(cut.nodes, vec![0, 2, 3, 4, 5]);
        assert_eq!(cut.boundary_labels(&g), vec![(2, 3)]);
        assert!(cut.is_two_cutset);
    }

    #[test]
    fn one_sided_residual_is_empty_cut() {
        let g = tree6();
        assert!(matches!(cut_from_signs(&g, &[1.0; 6], 0.0), Err(Error::EmptyCut)));
        assert!(matches!(cut_from_signs(&g, &[-1.0; 6], 0.0), Err(Error::EmptyCut)));
    }

    #[test]
    fn small_entries_are_undetermined() {
        let g = tree6();
        let r = [0.5, -0.5, 1e-4, 0.4, -1e-5, 0.3];
        let cut = cut_from_signs(&g, &r, 1e-3).unwrap();
        assert_eq!(cut.undetermined, vec![2, 4]);
        assert!(!cut.contains(2) && !cut.contains(4));
    }

    #[test]
    fn indicator_roundtrip() {
        let g = tree6();
        let cut = CutSet::from_labels(&g, &[1, 2, 3]).unwrap();
        let again = cut_from_signs(&g, &cut.indicator, 0.0).unwrap();
        assert_eq!(again, cut);
    }

    #[test]
    fn non_two_cutsets_are_flagged() {
        let g = tree6();
        // {1, 2} is not connected once node 3 is removed from its side.
        let cut = CutSet::from_labels(&g, &[1, 2]).unwrap();
        assert_eq!(cut.boundary_edges.len(), 2);
        assert!(!cut.is_two_cutset);
    }

    #[test]
    fn bridge_side() {
        let g = tree6();
        let cut = CutSet::from_bridge(&g, 1).unwrap();
        assert_eq!(cut.nodes, vec![1]);
        assert!(cut.is_two_cutset);
        let cyc = Graph::from_triples(3, &[(1, 2, 1.0), (2, 3, 1.0), (3, 1, 1.0)]).unwrap();
        assert!(CutSet::from_bridge(&cyc, 0).is_err());
    }
}
