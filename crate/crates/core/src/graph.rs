//! Immutable undirected graphs in CSR form and the structural queries the
//! rest of the pipeline needs.

use crate::error::{Error, Result};
use rayon::prelude::*;
use std::collections::VecDeque;

/// Simple undirected graph. Every edge is stored in both directions and
/// neighbor lists are sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

/// Builds a graph from an edge list, dropping self-loops and duplicates.
pub fn build_graph(edges: &[(usize, usize)], node_count: usize) -> Result<Graph> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); node_count];
    for (i, &(u, v)) in edges.iter().enumerate() {
        if u >= node_count || v >= node_count {
            return Err(Error::input(
                format!("edge {i}"),
                format!("({u}, {v}) has a node id outside 0..{node_count}"),
            ));
        }
        if u != v {
            adj[u].push(v);
            adj[v].push(u);
        }
    }
    let mut offsets = Vec::with_capacity(node_count + 1);
    offsets.push(0);
    let mut neighbors = Vec::with_capacity(edges.len() * 2);
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
        neighbors.extend_from_slice(list);
        offsets.push(neighbors.len());
    }
    let g = Graph { offsets, neighbors };
    debug_assert_eq!(g.degrees().iter().sum::<usize>(), 2 * g.edge_count());
    Ok(g)
}

impl Graph {
    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.node_count()).map(|v| self.degree(v)).collect()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Undirected edge list with `u < v`, in CSR order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.node_count())
            .flat_map(|u| {
                self.neighbors(u)
                    .iter()
                    .filter(move |v| **v > u)
                    .map(move |v| (u, *v))
            })
            .collect()
    }

    pub(crate) fn check_node(&self, v: usize) -> Result<()> {
        if v >= self.node_count() {
            return Err(Error::input(
                "node id",
                format!("{v} is outside 0..{}", self.node_count()),
            ));
        }
        Ok(())
    }

    /// Shortest-path hop distances from `src` (`usize::MAX` if unreachable).
    pub fn bfs(&self, src: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.node_count()];
        let mut queue = VecDeque::new();
        dist[src] = 0;
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            for &w in self.neighbors(u) {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Connected-component id per node (ids in order of smallest member) and
    /// the number of components.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let n = self.node_count();
        let mut comp = vec![usize::MAX; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = count;
            stack.push(s);
            while let Some(u) = stack.pop() {
                for &w in self.neighbors(u) {
                    if comp[w] == usize::MAX {
                        comp[w] = count;
                        stack.push(w);
                    }
                }
            }
            count += 1;
        }
        (comp, count)
    }

    /// Nodes of the largest connected component (lowest component id on ties),
    /// ascending.
    pub fn largest_component(&self) -> Vec<usize> {
        let (comp, count) = self.components();
        let mut sizes = vec![0usize; count];
        for c in &comp {
            sizes[*c] += 1;
        }
        let best = (0..count).max_by_key(|c| (sizes[*c], std::cmp::Reverse(*c)));
        match best {
            Some(b) => (0..self.node_count()).filter(|v| comp[*v] == b).collect(),
            None => Vec::new(),
        }
    }

    /// Subgraph induced by `nodes`, relabelled `0..nodes.len()` in the given order.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Graph {
        let mut index = vec![usize::MAX; self.node_count()];
        for (i, v) in nodes.iter().enumerate() {
            index[*v] = i;
        }
        let mut edges = Vec::new();
        for (i, v) in nodes.iter().enumerate() {
            for w in self.neighbors(*v) {
                let j = index[*w];
                if j != usize::MAX && i < j {
                    edges.push((i, j));
                }
            }
        }
        build_graph(&edges, nodes.len()).expect("relabelled ids are in range")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct GraphMetrics {
    /// Radius of the largest component.
    pub radius: usize,
    /// Diameter of the largest component.
    pub diameter: usize,
    pub is_connected: bool,
    pub is_bipartite: bool,
    /// Eccentricity of every node within its own component.
    pub eccentricities: Vec<usize>,
}

/// Exact eccentricities by one BFS per node (parallel over sources).
pub fn compute_metrics(g: &Graph) -> GraphMetrics {
    let n = g.node_count();
    let eccentricities: Vec<usize> = (0..n)
        .into_par_iter()
        .map(|s| {
            g.bfs(s)
                .into_iter()
                .filter(|d| *d != usize::MAX)
                .max()
                .unwrap_or(0)
        })
        .collect();
    let largest = g.largest_component();
    let radius = largest
        .iter()
        .map(|v| eccentricities[*v])
        .min()
        .unwrap_or(0);
    let diameter = largest
        .iter()
        .map(|v| eccentricities[*v])
        .max()
        .unwrap_or(0);
    GraphMetrics {
        radius,
        diameter,
        is_connected: largest.len() == n,
        is_bipartite: is_bipartite(g),
        eccentricities,
    }
}

/// Two-colouring check over every component.
pub fn is_bipartite(g: &Graph) -> bool {
    let n = g.node_count();
    let mut color = vec![u8::MAX; n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        if color[s] != u8::MAX {
            continue;
        }
        color[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &w in g.neighbors(u) {
                if color[w] == u8::MAX {
                    color[w] = 1 - color[u];
                    queue.push_back(w);
                } else if color[w] == color[u] {
                    return false;
                }
            }
        }
    }
    true
}

/// Nodes at shortest-path distance `1..=k` from `v`, ascending.
pub fn k_hop_neighborhood(g: &Graph, v: usize, k: usize) -> Result<Vec<usize>> {
    g.check_node(v)?;
    if k == 0 {
        return Err(Error::Config("k-hop neighborhood needs k >= 1".into()));
    }
    let mut dist = vec![usize::MAX; g.node_count()];
    let mut frontier = vec![v];
    dist[v] = 0;
    let mut out = Vec::new();
    for depth in 1..=k {
        let mut next = Vec::new();
        for u in frontier {
            for &w in g.neighbors(u) {
                if dist[w] == usize::MAX {
                    dist[w] = depth;
                    next.push(w);
                }
            }
        }
        out.extend_from_slice(&next);
        frontier = next;
    }
    out.sort_unstable();
    Ok(out)
}
