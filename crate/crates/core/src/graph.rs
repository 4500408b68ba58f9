//! Leader-rooted directed communication topology.
//!
//! Node 0 is the leader (the reference model); followers are `1..=N`. An edge
//! `j -> i` with weight `a_ij > 0` means agent `i` receives the state and
//! (protocol permitting) the input of `j`.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use thiserror::Error;

/// Index of the leader node.
pub const LEADER: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

impl Edge {
    pub fn new(from: usize, to: usize, weight: f64) -> Self {
        Self { from, to, weight }
    }

    /// Unit-weight edge.
    pub fn unit(from: usize, to: usize) -> Self {
        Self::new(from, to, 1.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph needs at least one follower")]
    NoAgents,
    #[error("edge {from} -> {to} references a node outside 0..={max}")]
    EndpointOutOfRange { from: usize, to: usize, max: usize },
    #[error("edge {from} -> {to} has non-positive weight {weight}")]
    InvalidWeight { from: usize, to: usize, weight: f64 },
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge {from} -> {to}")]
    DuplicateEdge { from: usize, to: usize },
    #[error("cycle through node {0}")]
    CycleDetected(usize),
    #[error("agent {0} is not reachable from the leader")]
    UnreachableAgent(usize),
    #[error("agent index {index} out of range 1..={n_agents}")]
    IndexOutOfRange { index: usize, n_agents: usize },
}

/// Validated acyclic graph over `{0..=N}` in which every follower is reachable
/// from the leader. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CommGraph {
    n_agents: usize,
    edges: Vec<Edge>,
    /// `parents[i]` lists `(j, a_ij)` in edge insertion order.
    parents: Vec<Vec<(usize, f64)>>,
    /// Followers in an order where every parent precedes its children.
    order: Vec<usize>,
}

impl CommGraph {
    pub fn new(n_agents: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self, GraphError> {
        if n_agents == 0 {
            return Err(GraphError::NoAgents);
        }
        let edges: Vec<Edge> = edges.into_iter().collect();
        let nodes = n_agents + 1;
        let mut parents = vec![Vec::new(); nodes];
        let mut children = vec![Vec::new(); nodes];
        for e in &edges {
            if e.from > n_agents || e.to > n_agents {
                return Err(GraphError::EndpointOutOfRange { from: e.from, to: e.to, max: n_agents });
            }
            if e.from == e.to {
                return Err(GraphError::SelfLoop(e.from));
            }
            if !(e.weight > 0.0) || !e.weight.is_finite() {
                return Err(GraphError::InvalidWeight { from: e.from, to: e.to, weight: e.weight });
            }
            if parents[e.to].iter().any(|&(j, _)| j == e.from) {
                return Err(GraphError::DuplicateEdge { from: e.from, to: e.to });
            }
            parents[e.to].push((e.from, e.weight));
            children[e.from].push(e.to);
        }

        let order = topological_order(&children)?;

        // Breadth-first reachability from the leader.
        let mut seen = vec![false; nodes];
        let mut queue = VecDeque::from([LEADER]);
        seen[LEADER] = true;
        while let Some(u) = queue.pop_front() {
            for &w in &children[u] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        if let Some(i) = (1..nodes).find(|&i| !seen[i]) {
            return Err(GraphError::UnreachableAgent(i));
        }

        let order = order.into_iter().filter(|&i| i != LEADER).collect();
        Ok(Self { n_agents, edges, parents, order })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// `(N+1) x (N+1)` adjacency with `A[(i, j)] = a_ij` for an edge `j -> i`.
    pub fn adjacency(&self) -> DMatrix<f64> {
        let n = self.n_agents + 1;
        let mut a = DMatrix::zeros(n, n);
        for e in &self.edges {
            a[(e.to, e.from)] = e.weight;
        }
        a
    }

    /// `L = D - A` with `D` the diagonal of in-degree weights.
    pub fn laplacian(&self) -> DMatrix<f64> {
        laplacian_from_adjacency(&self.adjacency())
    }

    /// In-neighbors of follower `i` as `(j, a_ij)` pairs; `j = 0` is the leader.
    pub fn in_neighbors(&self, i: usize) -> Result<&[(usize, f64)], GraphError> {
        self.check_index(i)?;
        Ok(&self.parents[i])
    }

    /// `ā_i = Σ_j a_ij`, leader included.
    pub fn in_neighbor_sum(&self, i: usize) -> Result<f64, GraphError> {
        Ok(self.in_neighbors(i)?.iter().map(|&(_, w)| w).sum())
    }

    /// Followers ordered so that each agent comes after all of its parents.
    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    fn check_index(&self, i: usize) -> Result<(), GraphError> {
        if i == 0 || i > self.n_agents {
            Err(GraphError::IndexOutOfRange { index: i, n_agents: self.n_agents })
        } else {
            Ok(())
        }
    }
}

/// `L = D - A` for a square adjacency matrix.
pub fn laplacian_from_adjacency(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut l = -a;
    for i in 0..a.nrows() {
        l[(i, i)] += a.row(i).sum();
    }
    l
}

/// Depth-first search with three colors; returns reverse post-order.
fn topological_order(children: &[Vec<usize>]) -> Result<Vec<usize>, GraphError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        White,
        Grey,
        Black,
    }
    let n = children.len();
    let mut mark = vec![Mark::White; n];
    let mut post = Vec::with_capacity(n);
    for root in 0..n {
        if mark[root] != Mark::White {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        mark[root] = Mark::Grey;
        while let Some(&mut (u, ref mut next)) = stack.last_mut() {
            if let Some(&w) = children[u].get(*next) {
                *next += 1;
                match mark[w] {
                    Mark::Grey => return Err(GraphError::CycleDetected(w)),
                    Mark::White => {
                        mark[w] = Mark::Grey;
                        stack.push((w, 0));
                    }
                    Mark::Black => {}
                }
            } else {
                mark[u] = Mark::Black;
                post.push(u);
                stack.pop();
            }
        }
    }
    post.reverse();
    Ok(post)
}
