//! Dijkstra search with a deterministic predecessor tie-break.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{Path, Roadmap};

/// Adjacency view used by the search; lets query-time overlays reuse it.
pub(crate) trait WeightedGraph {
    fn node_count(&self) -> usize;
    fn for_each_neighbor<F: FnMut(usize, f64)>(&self, u: usize, f: F);
}

impl WeightedGraph for Roadmap {
    fn node_count(&self) -> usize {
        self.len()
    }

    fn for_each_neighbor<F: FnMut(usize, f64)>(&self, u: usize, mut f: F) {
        for e in self.neighbors(u) {
            f(e.to, e.cost);
        }
    }
}

/// One-to-all shortest path result. Unreachable nodes have infinite distance
/// and no predecessor.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortestPathTree {
    pub source: usize,
    pub dist: Vec<f64>,
    pub pred: Vec<Option<usize>>,
}

impl ShortestPathTree {
    pub fn is_reachable(&self, target: usize) -> bool {
        self.dist[target].is_finite()
    }

    /// Node sequence from the source to `target`, if reachable.
    pub fn path_to(&self, target: usize) -> Option<Path> {
        if !self.is_reachable(target) {
            return None;
        }
        let mut nodes = vec![target];
        let mut cur = target;
        while let Some(p) = self.pred[cur] {
            nodes.push(p);
            cur = p;
        }
        nodes.reverse();
        Some(Path {
            nodes,
            cost: self.dist[target],
        })
    }
}

#[derive(Copy, Clone, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, then on node index
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra from `source`. Stops early once a node satisfying `is_target`
/// is settled; returns that node alongside the (partial) tree.
///
/// Among equal-cost predecessors the smallest index wins, so the resulting
/// tree does not depend on heap order.
pub(crate) fn dijkstra<G, T>(g: &G, source: usize, is_target: T) -> (ShortestPathTree, Option<usize>)
where
    G: WeightedGraph,
    T: Fn(usize) -> bool,
{
    let n = g.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<usize>> = vec![None; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapEntry {
        dist: 0.0,
        node: source,
    });
    let mut hit = None;
    while let Some(HeapEntry { dist: d, node: u }) = heap.pop() {
        if settled[u] || d > dist[u] {
            continue;
        }
        settled[u] = true;
        if is_target(u) {
            hit = Some(u);
            break;
        }
        g.for_each_neighbor(u, |v, w| {
            if settled[v] {
                return;
            }
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                pred[v] = Some(u);
                heap.push(HeapEntry { dist: nd, node: v });
            } else if nd == dist[v] && pred[v].is_some_and(|p| u < p) {
                pred[v] = Some(u);
            }
        });
    }
    (ShortestPathTree { source, dist, pred }, hit)
}
