//! Shortest paths on the base graph and on finite windows of its cyclic cover.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::complex::{Step, ToroidalComplex};

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    dist: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Result of a single-source (or multi-source) shortest path run.
#[derive(Debug, Clone)]
pub struct ShortestPaths {
    pub dist: Vec<f64>,
    /// `(previous node, edge step used to arrive)`.
    pub pred: Vec<Option<(usize, Step)>>,
}

impl ShortestPaths {
    /// Steps from the source tree root to `target`, or `None` if unreachable.
    pub fn walk_to(&self, target: usize) -> Option<Vec<Step>> {
        if !self.dist[target].is_finite() {
            return None;
        }
        let mut steps = Vec::new();
        let mut at = target;
        while let Some((prev, step)) = self.pred[at] {
            steps.push(step);
            at = prev;
        }
        steps.reverse();
        Some(steps)
    }
}

/// Dijkstra on an implicit graph. `neighbors(x, out)` pushes `(y, weight, step)`.
/// Sources carry initial offsets.
pub fn dijkstra<F>(n: usize, sources: &[(usize, f64)], mut neighbors: F) -> ShortestPaths
where
    F: FnMut(usize, &mut Vec<(usize, f64, Step)>),
{
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![None; n];
    let mut heap = BinaryHeap::new();
    for &(s, d0) in sources {
        if d0 < dist[s] {
            dist[s] = d0;
            heap.push(Entry { dist: d0, node: s });
        }
    }
    let mut buf = Vec::new();
    while let Some(Entry { dist: d, node }) = heap.pop() {
        if d > dist[node] {
            continue;
        }
        buf.clear();
        neighbors(node, &mut buf);
        for &(y, wt, step) in &buf {
            let nd = d + wt;
            if nd < dist[y] {
                dist[y] = nd;
                pred[y] = Some((node, step));
                heap.push(Entry { dist: nd, node: y });
            }
        }
    }
    ShortestPaths { dist, pred }
}

/// Sheets `lo..=hi` of the cyclic cover defined by a cocycle `w`.
/// Node `(x, s)` has index `(s - lo) * n + x`; edge `e` joins `(u, s)` and `(v, s + w_e)`.
pub struct SheetWindow<'a> {
    pub complex: &'a ToroidalComplex,
    pub cocycle: &'a [i32],
    pub lo: i32,
    pub hi: i32,
    incidence: Vec<Vec<usize>>,
}

impl<'a> SheetWindow<'a> {
    pub fn new(complex: &'a ToroidalComplex, cocycle: &'a [i32], lo: i32, hi: i32) -> Self {
        Self { complex, cocycle, lo, hi, incidence: complex.incidence() }
    }

    pub fn num_nodes(&self) -> usize {
        (self.hi - self.lo + 1) as usize * self.complex.num_vertices()
    }

    pub fn node(&self, x: usize, sheet: i32) -> Option<usize> {
        if sheet < self.lo || sheet > self.hi {
            return None;
        }
        Some((sheet - self.lo) as usize * self.complex.num_vertices() + x)
    }

    pub fn split(&self, node: usize) -> (usize, i32) {
        let n = self.complex.num_vertices();
        (node % n, (node / n) as i32 + self.lo)
    }

    /// Lifted neighbours of `node` inside the window, with per-edge weights.
    pub fn neighbors(&self, node: usize, weights: &[f64], out: &mut Vec<(usize, f64, Step)>) {
        let (x, s) = self.split(node);
        for &e in &self.incidence[x] {
            let edge = &self.complex.edges[e];
            let w = self.cocycle[e];
            let (y, t, forward) = if edge.u == x && edge.v != x {
                (edge.v, s + w, true)
            } else {
                (edge.u, s - w, false)
            };
            if let Some(m) = self.node(y, t) {
                out.push((m, weights[e], Step { edge: e, forward }));
            }
        }
    }

    pub fn shortest_paths(&self, sources: &[(usize, f64)], weights: &[f64]) -> ShortestPaths {
        dijkstra(self.num_nodes(), sources, |x, out| self.neighbors(x, weights, out))
    }
}

/// Cheapest walk from `(v, 0)` to `(v, 1)` in sheets `-1..=2`, with its weight.
pub fn shortest_lift_path(c: &ToroidalComplex, weights: &[f64], v: usize) -> Option<(f64, Vec<Step>)> {
    let w: Vec<i32> = c.edges.iter().map(|e| e.w).collect();
    let win = SheetWindow::new(c, &w, -1, 2);
    let sp = win.shortest_paths(&[(win.node(v, 0)?, 0.0)], weights);
    let target = win.node(v, 1)?;
    let walk = sp.walk_to(target)?;
    Some((sp.dist[target], walk))
}

/// Plain Dijkstra on the base graph from several sources with offsets.
pub fn base_shortest_paths(c: &ToroidalComplex, sources: &[(usize, f64)], weights: &[f64]) -> ShortestPaths {
    let inc = c.incidence();
    dijkstra(c.num_vertices(), sources, |x, out| {
        for &e in &inc[x] {
            let edge = &c.edges[e];
            let forward = edge.u == x;
            out.push((edge.other(x), weights[e], Step { edge: e, forward }));
        }
    })
}
