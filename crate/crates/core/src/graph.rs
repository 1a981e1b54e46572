//! Undirected simple graphs and connected Erdős–Rényi sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use thiserror::Error;

/// Resample attempts before Erdős–Rényi generation gives up on connectivity.
pub const ERDOS_RENYI_RETRY_CAP: usize = 1000;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("node index {index} out of range for {count} nodes")]
    InvalidNode { index: usize, count: usize },
    #[error("self-loop at node {node} rejected")]
    SelfLoop { node: usize },
    #[error("{0}")]
    InvalidParameter(String),
    #[error("no connected graph with m={m}, p_edge={p_edge} after {attempts} attempts")]
    GenerationFailure { m: usize, p_edge: f64, attempts: usize },
    #[error("edge list line {line}: {reason}")]
    ParseEdgeList { line: usize, reason: String },
}

/// Undirected simple graph on nodes 0..m. No self-loops, no multi-edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    m: usize,
    edges: BTreeSet<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph on m nodes from undirected edges. Duplicate edges and
    /// reversed duplicates collapse; self-loops and out-of-range indices are
    /// rejected.
    pub fn new(
        m: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        if m == 0 {
            return Err(GraphError::InvalidParameter("graph needs at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i == j {
                return Err(GraphError::SelfLoop { node: i });
            }
            for idx in [i, j] {
                if idx >= m {
                    return Err(GraphError::InvalidNode { index: idx, count: m });
                }
            }
            set.insert((i.min(j), i.max(j)));
        }
        let mut adjacency = vec![Vec::new(); m];
        for &(i, j) in &set {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }
        Ok(Graph { m, edges: set, adjacency })
    }

    /// Path 0-1-...-(m-1).
    pub fn path(m: usize) -> Self {
        Graph::new(m, (1..m).map(|i| (i - 1, i))).expect("path edges are valid")
    }

    /// Cycle 0-1-...-(m-1)-0. Requires m >= 3 to stay simple.
    pub fn cycle(m: usize) -> Self {
        assert!(m >= 3, "cycle needs m >= 3");
        Graph::new(m, (0..m).map(|i| (i, (i + 1) % m))).expect("cycle edges are valid")
    }

    /// Complete graph K_m.
    pub fn complete(m: usize) -> Self {
        let edges = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j)));
        Graph::new(m, edges).expect("complete-graph edges are valid")
    }

    /// Samples G(m, p_edge) with a seeded generator, resampling until the
    /// graph is connected. Fails after [`ERDOS_RENYI_RETRY_CAP`] attempts.
    pub fn erdos_renyi(m: usize, p_edge: f64, seed: u64) -> Result<Self, GraphError> {
        if m < 2 {
            return Err(GraphError::InvalidParameter(format!(
                "erdos_renyi needs m >= 2, got {m}"
            )));
        }
        if !(p_edge > 0.0 && p_edge <= 1.0) {
            return Err(GraphError::InvalidParameter(format!(
                "erdos_renyi needs p_edge in (0, 1], got {p_edge}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..ERDOS_RENYI_RETRY_CAP {
            let mut edges = Vec::new();
            for i in 0..m {
                for j in i + 1..m {
                    if rng.random_bool(p_edge) {
                        edges.push((i, j));
                    }
                }
            }
            let g = Graph::new(m, edges).expect("sampled edges are valid");
            if g.is_connected() {
                return Ok(g);
            }
        }
        Err(GraphError::GenerationFailure { m, p_edge, attempts: ERDOS_RENYI_RETRY_CAP })
    }

    pub fn node_count(&self) -> usize {
        self.m
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as (i, j) with i < j, ascending.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.edges.contains(&(i.min(j), i.max(j)))
    }

    /// Neighbor indices of node i, ascending.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        assert!(i < self.m, "node {i} out of range for {} nodes", self.m);
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors(i).len()
    }

    /// Breadth-first reachability from node 0. A single node with no edges
    /// counts as connected.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.m];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &self.adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.m
    }

    /// Parses "i j" lines (whitespace separated, blank lines ignored). The
    /// node count is inferred as max index + 1.
    pub fn from_edge_list(text: &str) -> Result<Self, GraphError> {
        let mut edges = Vec::new();
        let mut max_index = 0usize;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<usize, GraphError> {
                tok.ok_or_else(|| GraphError::ParseEdgeList {
                    line: lineno + 1,
                    reason: "expected two node indices".into(),
                })?
                .parse()
                .map_err(|e| GraphError::ParseEdgeList {
                    line: lineno + 1,
                    reason: format!("bad node index: {e}"),
                })
            };
            let i = parse(parts.next())?;
            let j = parse(parts.next())?;
            if parts.next().is_some() {
                return Err(GraphError::ParseEdgeList {
                    line: lineno + 1,
                    reason: "expected exactly two node indices".into(),
                });
            }
            max_index = max_index.max(i).max(j);
            edges.push((i, j));
        }
        if edges.is_empty() {
            return Err(GraphError::InvalidParameter("edge list is empty".into()));
        }
        Graph::new(max_index + 1, edges)
    }

    /// One "i j" line per edge, i < j, ascending.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (i, j) in self.edges() {
            out.push_str(&format!("{i} {j}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_degrees() {
        let g = Graph::new(3, [(0, 1), (1, 2)]).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 2);
        assert_eq!((g.degree(0), g.degree(1), g.degree(2)), (1, 2, 1));
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert!(g.has_edge(2, 1));
        assert!(!g.has_edge(0, 2));
    }

    #[test]
    fn self_loop_rejected() {
        assert!(matches!(
            Graph::new(3, [(1, 1)]),
            Err(GraphError::SelfLoop { node: 1 })
        ));
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(matches!(
            Graph::new(2, [(0, 5)]),
            Err(GraphError::InvalidNode { index: 5, count: 2 })
        ));
    }

    #[test]
    fn duplicate_and_reversed_edges_collapse() {
        let g = Graph::new(2, [(0, 1), (1, 0), (0, 1)]).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1)]);
    }

    #[test]
    fn connectivity_cases() {
        let single = Graph::new(1, []).unwrap();
        assert!(single.is_connected());
        let split = Graph::new(4, [(0, 1), (2, 3)]).unwrap();
        assert!(!split.is_connected());
        assert!(Graph::cycle(4).is_connected());
        assert!(Graph::path(5).is_connected());
        assert_eq!(Graph::complete(4).edge_count(), 6);
    }

    #[test]
    fn erdos_renyi_two_nodes_full_probability() {
        let g = Graph::erdos_renyi(2, 1.0, 7).unwrap();
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1)]);
    }

    #[test]
    fn erdos_renyi_is_deterministic_and_connected() {
        let a = Graph::erdos_renyi(5, 0.5, 42).unwrap();
        let b = Graph::erdos_renyi(5, 0.5, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.is_connected());
        // Frozen against the pinned RNG stack; a change here means the seeded
        // sampling path changed and every downstream fixture moved with it.
        assert_eq!(
            a.edges().collect::<Vec<_>>(),
            vec![(0, 3), (1, 2), (1, 3), (1, 4), (3, 4)]
        );
    }

    #[test]
    fn erdos_renyi_gives_up_below_connectivity_threshold() {
        // Expected edges per attempt ~ 0.39 on 40 nodes: essentially never connected.
        let err = Graph::erdos_renyi(40, 0.0005, 1).unwrap_err();
        assert!(matches!(err, GraphError::GenerationFailure { attempts: 1000, .. }));
    }

    #[test]
    fn erdos_renyi_rejects_bad_parameters() {
        assert!(matches!(Graph::erdos_renyi(1, 0.5, 0), Err(GraphError::InvalidParameter(_))));
        assert!(matches!(Graph::erdos_renyi(3, 0.0, 0), Err(GraphError::InvalidParameter(_))));
        assert!(matches!(Graph::erdos_renyi(3, 1.5, 0), Err(GraphError::InvalidParameter(_))));
    }

    #[test]
    fn edge_list_round_trip() {
        let g = Graph::new(4, [(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        let text = g.to_edge_list();
        assert_eq!(text, "0 1\n0 3\n1 2\n2 3\n");
        let back = Graph::from_edge_list(&text).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn edge_list_parse_errors() {
        assert!(matches!(
            Graph::from_edge_list("0 1\n2\n"),
            Err(GraphError::ParseEdgeList { line: 2, .. })
        ));
        assert!(matches!(
            Graph::from_edge_list("0 x\n"),
            Err(GraphError::ParseEdgeList { line: 1, .. })
        ));
        assert!(matches!(
            Graph::from_edge_list("  \n"),
            Err(GraphError::InvalidParameter(_))
        ));
    }
}
