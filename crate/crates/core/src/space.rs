//! Feasible-set oracles: linear minimization, feasibility and enumeration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Solution;

/// Enumeration refuses spaces with more solutions than this unless told otherwise.
pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000;

/// The feasible set `𝒳` of the underlying combinatorial problem.
pub trait FeasibleSpace: Send + Sync {
    /// Number of binary variables `n`.
    fn dim(&self) -> usize;

    /// Feasible solution minimizing `c^T x`; among optima the lexicographically
    /// smallest solution vector is returned.
    fn min_linear(&self, c: &[f64]) -> Solution;

    fn is_feasible(&self, x: &Solution) -> bool;

    /// Number of feasible solutions, if known.
    fn count(&self) -> Option<u128>;

    /// All feasible solutions in ascending lexicographic order, without a cap check.
    fn enumerate_unchecked(&self) -> Vec<Solution>;

    /// All feasible solutions in ascending lexicographic order.
    fn enumerate(&self, cap: u128) -> Result<Vec<Solution>> {
        let count = self.count().unwrap_or(u128::MAX);
        if count > cap {
            return Err(Error::CapExceeded { what: "feasible solutions", count, cap });
        }
        Ok(self.enumerate_unchecked())
    }
}

fn lex_tolerance(value: f64) -> f64 {
    1e-9 * value.abs().max(1.0)
}

/// Single-source single-sink path problem on a directed acyclic graph.
/// Variable `e` is 1 iff edge `e` lies on the chosen path.
#[derive(Debug, Clone, PartialEq)]
pub struct DagPathSpace {
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
    source: usize,
    sink: usize,
    topo: Vec<usize>,
    incoming: Vec<Vec<usize>>,
    outgoing: Vec<Vec<usize>>,
}

impl DagPathSpace {
    pub fn new(n_nodes: usize, edges: Vec<(usize, usize)>, source: usize, sink: usize) -> Result<Self> {
        if source >= n_nodes || sink >= n_nodes || source == sink {
            return Err(Error::InvalidConfig("source and sink must be distinct nodes of the graph".into()));
        }
        let mut incoming = vec![Vec::new(); n_nodes];
        let mut outgoing = vec![Vec::new(); n_nodes];
        for (e, &(u, v)) in edges.iter().enumerate() {
            if u >= n_nodes || v >= n_nodes {
                return Err(Error::InvalidConfig(format!("edge {e} references a missing node")));
            }
            outgoing[u].push(e);
            incoming[v].push(e);
        }
        let mut indeg: Vec<usize> = incoming.iter().map(Vec::len).collect();
        let mut stack: Vec<usize> = (0..n_nodes).rev().filter(|&v| indeg[v] == 0).collect();
        let mut topo = Vec::with_capacity(n_nodes);
        while let Some(u) = stack.pop() {
            topo.push(u);
            for &e in outgoing[u].iter().rev() {
                let v = edges[e].1;
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    stack.push(v);
                }
            }
        }
        if topo.len() != n_nodes {
            return Err(Error::InvalidConfig("graph contains a cycle".into()));
        }
        let space = DagPathSpace { n_nodes, edges, source, sink, topo, incoming, outgoing };
        if space.count() == Some(0) {
            return Err(Error::InvalidConfig("sink is unreachable from source".into()));
        }
        Ok(space)
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    /// Shortest-path distances from the source, skipping `forbidden` edges.
    fn distances(&self, c: &[f64], forbidden: &[bool]) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.n_nodes];
        dist[self.source] = 0.0;
        for &v in &self.topo {
            if v == self.source {
                continue;
            }
            for &e in &self.incoming[v] {
                if forbidden[e] {
                    continue;
                }
                let cand = dist[self.edges[e].0] + c[e];
                if cand < dist[v] {
                    dist[v] = cand;
                }
            }
        }
        dist
    }

    fn extract_path(&self, c: &[f64], forbidden: &[bool], dist: &[f64]) -> Solution {
        let mut x = vec![0u8; self.edges.len()];
        let mut v = self.sink;
        while v != self.source {
            let e = self.incoming[v]
                .iter()
                .copied()
                .filter(|&e| !forbidden[e] && dist[self.edges[e].0].is_finite())
                .min_by(|&a, &b| {
                    let da = (dist[self.edges[a].0] + c[a] - dist[v]).abs();
                    let db = (dist[self.edges[b].0] + c[b] - dist[v]).abs();
                    da.total_cmp(&db).then(a.cmp(&b))
                })
                .expect("reachable node has an incoming edge");
            x[e] = 1;
            v = self.edges[e].0;
        }
        Solution::from_indicator(x).expect("binary")
    }
}

impl FeasibleSpace for DagPathSpace {
    fn dim(&self) -> usize {
        self.edges.len()
    }

    fn min_linear(&self, c: &[f64]) -> Solution {
        assert_eq!(c.len(), self.edges.len(), "cost vector length");
        let mut forbidden = vec![false; self.edges.len()];
        let best = self.distances(c, &forbidden)[self.sink];
        // Fix variables to 0 in index order whenever the optimum survives it.
        for e in 0..self.edges.len() {
            forbidden[e] = true;
            let d = self.distances(c, &forbidden)[self.sink];
            if !(d.is_finite() && d <= best + lex_tolerance(best)) {
                forbidden[e] = false;
            }
        }
        let dist = self.distances(c, &forbidden);
        self.extract_path(c, &forbidden, &dist)
    }

    fn is_feasible(&self, x: &Solution) -> bool {
        if x.len() != self.edges.len() || !x.is_binary() {
            return false;
        }
        // Unit flow conservation; a 0/1 flow of value one in a DAG is a single path.
        let mut balance = vec![0i64; self.n_nodes];
        for (e, &b) in x.bits().iter().enumerate() {
            if b == 1 {
                let (u, v) = self.edges[e];
                balance[u] += 1;
                balance[v] -= 1;
            }
        }
        balance.iter().enumerate().all(|(v, &b)| match v {
            _ if v == self.source => b == 1,
            _ if v == self.sink => b == -1,
            _ => b == 0,
        })
    }

    fn count(&self) -> Option<u128> {
        let mut ways = vec![0u128; self.n_nodes];
        ways[self.source] = 1;
        for &v in &self.topo {
            if v == self.source {
                continue;
            }
            ways[v] = self.incoming[v].iter().map(|&e| ways[self.edges[e].0]).fold(0u128, u128::saturating_add);
        }
        Some(ways[self.sink])
    }

    fn enumerate_unchecked(&self) -> Vec<Solution> {
        let mut out = Vec::new();
        let mut x = vec![0u8; self.edges.len()];
        fn dfs(space: &DagPathSpace, v: usize, x: &mut Vec<u8>, out: &mut Vec<Solution>) {
            if v == space.sink {
                out.push(Solution::from_indicator(x.clone()).expect("binary"));
                return;
            }
            for &e in &space.outgoing[v] {
                x[e] = 1;
                dfs(space, space.edges[e].1, x, out);
                x[e] = 0;
            }
        }
        dfs(self, self.source, &mut x, &mut out);
        out.sort();
        out.dedup();
        out
    }
}

/// `g × g` grid with edges directed west→east and south→north, from the
/// south-western to the north-eastern corner.
///
/// Node `(row, col)` has id `row * g + col`, row 0 being the southern row.
/// Edge order: all horizontal edges in row-major order, then all vertical
/// edges in row-major order, giving `n = 2 g (g - 1)` variables.
#[derive(Debug, Clone, PartialEq)]
pub struct GridGraph {
    side: usize,
    paths: DagPathSpace,
}

impl GridGraph {
    pub fn new(side: usize) -> Result<Self> {
        if side < 2 {
            return Err(Error::InvalidConfig(format!("grid side must be at least 2, got {side}")));
        }
        let id = |r: usize, c: usize| r * side + c;
        let mut edges = Vec::with_capacity(2 * side * (side - 1));
        for r in 0..side {
            for c in 0..side - 1 {
                edges.push((id(r, c), id(r, c + 1)));
            }
        }
        for r in 0..side - 1 {
            for c in 0..side {
                edges.push((id(r, c), id(r + 1, c)));
            }
        }
        let paths = DagPathSpace::new(side * side, edges, 0, side * side - 1)?;
        Ok(GridGraph { side, paths })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn n_edges(&self) -> usize {
        self.paths.edges.len()
    }

    /// `((row, col), (row, col))` of tail and head.
    pub fn edge_endpoints(&self, e: usize) -> ((usize, usize), (usize, usize)) {
        let (u, v) = self.paths.edges[e];
        ((u / self.side, u % self.side), (v / self.side, v % self.side))
    }

    pub fn as_dag(&self) -> &DagPathSpace {
        &self.paths
    }
}

impl FeasibleSpace for GridGraph {
    fn dim(&self) -> usize {
        self.paths.dim()
    }

    fn min_linear(&self, c: &[f64]) -> Solution {
        self.paths.min_linear(c)
    }

    fn is_feasible(&self, x: &Solution) -> bool {
        self.paths.is_feasible(x)
    }

    fn count(&self) -> Option<u128> {
        self.paths.count()
    }

    fn enumerate_unchecked(&self) -> Vec<Solution> {
        self.paths.enumerate_unchecked()
    }
}

/// Choose exactly `p` of `n` items.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionSpace {
    n: usize,
    p: usize,
}

impl SelectionSpace {
    pub fn new(n: usize, p: usize) -> Result<Self> {
        if n == 0 || p > n {
            return Err(Error::InvalidConfig(format!("selection needs 0 <= p <= n and n > 0, got n={n}, p={p}")));
        }
        Ok(SelectionSpace { n, p })
    }

    pub fn cardinality(&self) -> usize {
        self.p
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128) / (i as u128 + 1))
}

impl FeasibleSpace for SelectionSpace {
    fn dim(&self) -> usize {
        self.n
    }

    fn min_linear(&self, c: &[f64]) -> Solution {
        assert_eq!(c.len(), self.n, "cost vector length");
        // Cheapest items first; equal costs prefer the later index, which
        // yields the lexicographically smallest optimal vector.
        let mut order: Vec<usize> = (0..self.n).collect();
        order.sort_by(|&a, &b| c[a].total_cmp(&c[b]).then(b.cmp(&a)));
        let mut x = vec![0u8; self.n];
        for &i in &order[..self.p] {
            x[i] = 1;
        }
        Solution::from_indicator(x).expect("binary")
    }

    fn is_feasible(&self, x: &Solution) -> bool {
        x.len() == self.n && x.is_binary() && x.ones() == self.p
    }

    fn count(&self) -> Option<u128> {
        Some(binomial(self.n, self.p))
    }

    fn enumerate_unchecked(&self) -> Vec<Solution> {
        // Lexicographic order of 0/1 vectors: ones pushed as far right as possible first.
        let mut out = Vec::new();
        let mut x = vec![0u8; self.n];
        fn rec(i: usize, left: usize, n: usize, x: &mut Vec<u8>, out: &mut Vec<Solution>) {
            if left == 0 {
                out.push(Solution::from_indicator(x.clone()).expect("binary"));
                return;
            }
            if n - i < left {
                return;
            }
            rec(i + 1, left, n, x, out);
            x[i] = 1;
            rec(i + 1, left - 1, n, x, out);
            x[i] = 0;
        }
        rec(0, self.p, self.n, &mut x, &mut out);
        out
    }
}

/// Serializable description of a built-in feasible space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SpaceSpec {
    Grid { side: usize },
    Dag { nodes: usize, edges: Vec<(usize, usize)>, source: usize, sink: usize },
    Selection { n: usize, p: usize },
}

impl SpaceSpec {
    pub fn build(&self) -> Result<Space> {
        Ok(match self {
            SpaceSpec::Grid { side } => Space::Grid(GridGraph::new(*side)?),
            SpaceSpec::Dag { nodes, edges, source, sink } => {
                Space::Dag(DagPathSpace::new(*nodes, edges.clone(), *source, *sink)?)
            }
            SpaceSpec::Selection { n, p } => Space::Selection(SelectionSpace::new(*n, *p)?),
        })
    }
}

/// Any of the built-in spaces.
#[derive(Debug, Clone, PartialEq)]
pub enum Space {
    Grid(GridGraph),
    Dag(DagPathSpace),
    Selection(SelectionSpace),
}

impl Space {
    fn inner(&self) -> &dyn FeasibleSpace {
        match self {
            Space::Grid(g) => g,
            Space::Dag(d) => d,
            Space::Selection(s) => s,
        }
    }
}

impl FeasibleSpace for Space {
    fn dim(&self) -> usize {
        self.inner().dim()
    }

    fn min_linear(&self, c: &[f64]) -> Solution {
        self.inner().min_linear(c)
    }

    fn is_feasible(&self, x: &Solution) -> bool {
        self.inner().is_feasible(x)
    }

    fn count(&self) -> Option<u128> {
        self.inner().count()
    }

    fn enumerate_unchecked(&self) -> Vec<Solution> {
        self.inner().enumerate_unchecked()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn sol(bits: &[u8]) -> Solution {
        Solution::from_indicator(bits.to_vec()).unwrap()
    }

    #[test]
    fn motivating_graph_min_linear() {
        let g = fixtures::motivating_space();
        let x = g.min_linear(&[0.0, 1.0, 7.0, 9.0]);
        assert_eq!(x, sol(&[1, 1, 0, 0]));
        assert_eq!(x.cost(&[0.0, 1.0, 7.0, 9.0]), 1.0);
    }

    #[test]
    fn motivating_graph_enumeration_and_feasibility() {
        let g = fixtures::motivating_space();
        assert_eq!(g.enumerate(DEFAULT_ENUMERATION_CAP).unwrap(), vec![sol(&[0, 0, 1, 1]), sol(&[1, 1, 0, 0])]);
        assert!(g.is_feasible(&sol(&[1, 1, 0, 0])));
        assert!(!g.is_feasible(&sol(&[1, 0, 1, 0])));
        assert!(!g.is_feasible(&sol(&[0, 0, 0, 0])));
        assert!(!g.is_feasible(&sol(&[1, 1, 1, 1])));
    }

    #[test]
    fn selection_examples() {
        let s = SelectionSpace::new(3, 1).unwrap();
        assert_eq!(s.min_linear(&[5.0, 2.0, 7.0]), sol(&[0, 1, 0]));
        let s = SelectionSpace::new(4, 2).unwrap();
        assert_eq!(s.enumerate(DEFAULT_ENUMERATION_CAP).unwrap().len(), 6);
        assert!(!s.is_feasible(&sol(&[1, 1, 1, 0])));
        assert!(s.is_feasible(&sol(&[0, 1, 0, 1])));
        // ties resolve to the lexicographically smallest vector
        assert_eq!(s.min_linear(&[1.0, 1.0, 1.0, 1.0]), sol(&[0, 0, 1, 1]));
    }

    #[test]
    fn grid_counts_and_layout() {
        let g = GridGraph::new(4).unwrap();
        assert_eq!(g.dim(), 24);
        assert_eq!(g.count(), Some(20));
        assert_eq!(g.enumerate(DEFAULT_ENUMERATION_CAP).unwrap().len(), 20);
        assert_eq!(g.edge_endpoints(0), ((0, 0), (0, 1)));
        assert_eq!(g.edge_endpoints(12), ((0, 0), (1, 0)));
        assert_eq!(g.edge_endpoints(23), ((2, 3), (3, 3)));
        assert_eq!(GridGraph::new(6).unwrap().count(), Some(252));
        assert!(GridGraph::new(1).is_err());
    }

    #[test]
    fn grid_two_tie_break() {
        let g = GridGraph::new(2).unwrap();
        let x = g.min_linear(&[1.0; 4]);
        assert_eq!(x, sol(&[0, 1, 1, 0]));
        assert_eq!(x.cost(&[1.0; 4]), 2.0);
    }

    #[test]
    fn negative_costs_are_handled() {
        let g = GridGraph::new(3).unwrap();
        let mut c = vec![1.0; g.dim()];
        c[5] = -100.0;
        let x = g.min_linear(&c);
        assert_eq!(x.bits()[5], 1);
        assert!(g.is_feasible(&x));
    }

    #[test]
    fn enumeration_cap() {
        let g = GridGraph::new(4).unwrap();
        assert!(matches!(g.enumerate(19), Err(Error::CapExceeded { count: 20, .. })));
        let s = SelectionSpace::new(30, 15).unwrap();
        assert!(s.enumerate(DEFAULT_ENUMERATION_CAP).is_err());
    }

    #[test]
    fn cyclic_graph_is_rejected() {
        assert!(DagPathSpace::new(3, vec![(0, 1), (1, 2), (2, 0)], 0, 2).is_err());
        assert!(DagPathSpace::new(3, vec![(0, 1)], 0, 2).is_err());
    }

    #[test]
    fn space_spec_json() {
        let spec: SpaceSpec = serde_json::from_str(r#"{"kind": "selection", "n": 4, "p": 2}"#).unwrap();
        assert_eq!(spec.build().unwrap().count(), Some(6));
        let spec: SpaceSpec = serde_json::from_str(r#"{"kind": "grid", "side": 3}"#).unwrap();
        assert_eq!(spec.build().unwrap().dim(), 12);
    }
}
