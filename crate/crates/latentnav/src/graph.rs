//! k-nearest-neighbor frame graphs and a shortest-path oracle.
//!
//! Nodes are training frames. Edges join each frame to its `k` nearest
//! neighbors under latent Euclidean distance and are weighted by the image
//! distance between the two frames, so a minimum-weight path is the
//! discrete, graph-constrained counterpart of a decoded geodesic.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::image::{image_distance, Image};

/// Symmetric weighted graph over frame indices.
#[derive(Debug, Clone)]
pub struct FrameGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl FrameGraph {
    /// Builds a graph from explicit undirected edges (mainly for tests).
    pub fn from_edges(nodes: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); nodes];
        for &(a, b, w) in edges {
            if a >= nodes || b >= nodes {
                return Err(Error::config("edges", format!("edge ({a}, {b}) out of range")));
            }
            if w.is_nan() || w < 0.0 {
                return Err(Error::config("edges", format!("edge ({a}, {b}) has weight {w}")));
            }
            adjacency[a].push((b, w));
            adjacency[b].push((a, w));
        }
        for list in adjacency.iter_mut() {
            list.sort_by_key(|x| x.0);
            list.dedup_by(|x, y| x.0 == y.0);
        }
        Ok(FrameGraph { adjacency })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, f64)] {
        &self.adjacency[node]
    }

    pub fn edge_weight(&self, a: usize, b: usize) -> Option<f64> {
        self.adjacency[a]
            .iter()
            .find(|(n, _)| *n == b)
            .map(|&(_, w)| w)
    }
}

/// Symmetric kNN graph: node `i` connects to its `k` nearest latent
/// neighbors (ties broken by lower index); each edge is weighted by the
/// Euclidean distance between the two frames' images.
pub fn build_frame_graph(latents: &[Vec<f64>], images: &[Image], k: usize) -> Result<FrameGraph> {
    let n = latents.len();
    if n == 0 || images.len() != n {
        return Err(Error::Shape(format!(
            "{n} latent vectors but {} images",
            images.len()
        )));
    }
    if k == 0 || k >= n {
        return Err(Error::config("k", format!("need 1 <= k < {n}, got {k}")));
    }
    let dim = latents[0].len();
    if latents.iter().any(|z| z.len() != dim) {
        return Err(Error::Shape("latent vectors must share one dimension".into()));
    }

    let mut neighbor_sets: Vec<Vec<usize>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut by_distance: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let d: f64 = latents[i]
                    .iter()
                    .zip(&latents[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                (d, j)
            })
            .collect();
        by_distance.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        neighbor_sets.push(by_distance[..k].iter().map(|&(_, j)| j).collect());
    }

    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, neighbors) in neighbor_sets.iter().enumerate() {
        for &j in neighbors {
            if adjacency[i].iter().any(|(node, _)| *node == j) {
                continue;
            }
            let w = image_distance(&images[i], &images[j]);
            adjacency[i].push((j, w));
            adjacency[j].push((i, w));
        }
    }
    for list in adjacency.iter_mut() {
        list.sort_by_key(|x| x.0);
    }
    Ok(FrameGraph { adjacency })
}

#[derive(PartialEq)]
struct HeapEntry {
    distance: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Weights are validated finite and nonnegative.
        self.distance
            .partial_cmp(&other.distance)
            .expect("finite distances")
            .then(self.node.cmp(&other.node))
    }
}

/// Dijkstra over nonnegative weights. Returns the node sequence from
/// `start` to `end` and its total weight. Among equal-distance frontier
/// nodes the smaller index settles first, so results are deterministic.
pub fn oracle_shortest_path(
    graph: &FrameGraph,
    start: usize,
    end: usize,
) -> Result<(Vec<usize>, f64)> {
    let n = graph.node_count();
    if start >= n || end >= n {
        return Err(Error::config(
            "endpoints",
            format!("start {start} / end {end} out of range for {n} nodes"),
        ));
    }
    if start == end {
        return Ok((vec![start], 0.0));
    }

    let mut distance = vec![f64::INFINITY; n];
    let mut predecessor = vec![usize::MAX; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    distance[start] = 0.0;
    heap.push(Reverse(HeapEntry {
        distance: 0.0,
        node: start,
    }));

    while let Some(Reverse(entry)) = heap.pop() {
        let u = entry.node;
        if settled[u] {
            continue;
        }
        settled[u] = true;
        if u == end {
            break;
        }
        for &(v, w) in graph.neighbors(u) {
            let candidate = distance[u] + w;
            if candidate < distance[v] {
                distance[v] = candidate;
                predecessor[v] = u;
                heap.push(Reverse(HeapEntry {
                    distance: candidate,
                    node: v,
                }));
            }
        }
    }

    if !settled[end] {
        return Err(Error::Disconnected { start, end });
    }
    let mut path = vec![end];
    let mut node = end;
    while node != start {
        node = predecessor[node];
        path.push(node);
    }
    path.reverse();
    Ok((path, distance[end]))
}
