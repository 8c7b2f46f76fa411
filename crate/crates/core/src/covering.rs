//! Winding numbers, degrees of circle-valued maps, and the cyclic cover.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complex::{is_closed_walk, Step, ToroidalComplex};
use crate::graph::shortest_lift_path;

/// Absolute tolerance for integer-valued sums of real increments.
pub const SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoveringError {
    #[error("walk is not closed")]
    NotClosed,
    #[error("edge {edge}: increment is ambiguous (|delta| = 1/2)")]
    NotEdgeFine { edge: usize },
    #[error("face {face}: increments sum to {sum}, not 0")]
    FaceInconsistent { face: usize, sum: f64 },
    #[error("edge {edge}: increments are not the coboundary of a potential plus a multiple of the cocycle")]
    HolonomyMismatch { edge: usize },
    #[error("period count must be at least 1")]
    InvalidPeriods,
    #[error("sheet {sheet}: deck relation violated by {error}")]
    DeckViolation { sheet: usize, error: f64 },
    #[error("circle map value {value} at vertex {vertex} is not in [0, 1)")]
    InvalidValue { vertex: usize, value: f64 },
    #[error("map has {got} values for {expected} vertices")]
    SizeMismatch { got: usize, expected: usize },
    #[error("complex has no winding-1 cycle")]
    NoWindingCycle,
}

/// A map to R/Z, stored as representatives in `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleMap {
    pub values: Vec<f64>,
}

impl CircleMap {
    pub fn new(values: Vec<f64>) -> Result<Self, CoveringError> {
        for (vertex, &value) in values.iter().enumerate() {
            if !(0.0..1.0).contains(&value) {
                return Err(CoveringError::InvalidValue { vertex, value });
            }
        }
        Ok(Self { values })
    }

    /// Reduces arbitrary reals mod 1.
    pub fn from_reals(values: &[f64]) -> Self {
        Self { values: values.iter().map(|&x| frac(x)).collect() }
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self { values: vec![frac(value); n] }
    }
}

/// Representative of `x mod 1` in `[0, 1)`.
pub fn frac(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Real-valued map on sheets `0..K` of the cover, `sheets[k][v] = sheets[0][v] + k * deg`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedMap {
    pub period_count: usize,
    pub deg: i64,
    pub sheets: Vec<Vec<f64>>,
}

/// `K` periods of the cover, materialized. The last sheet keeps only the
/// meridian copies so that a single period is a fundamental domain with both
/// boundary slices.
#[derive(Debug, Clone)]
pub struct PeriodicCover {
    pub periods: usize,
    /// `(base vertex, sheet)` per cover vertex.
    pub nodes: Vec<(usize, usize)>,
    /// `(tail, head, base edge)` per lifted edge.
    pub edges: Vec<(usize, usize, usize)>,
    /// Cover vertices of the meridian on sheet 0.
    pub m0: Vec<usize>,
    /// Cover vertices of the meridian on sheet K.
    pub m1: Vec<usize>,
}

impl PeriodicCover {
    pub fn num_vertices(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }
}

/// Signed sum of winding labels along a closed walk.
pub fn winding_number(c: &ToroidalComplex, walk: &[Step]) -> Result<i64, CoveringError> {
    if !is_closed_walk(c, walk) {
        return Err(CoveringError::NotClosed);
    }
    Ok(walk.iter().map(|s| i64::from(s.sign() * c.edges[s.edge].w)).sum())
}

/// Signed sum of a real edge field along a walk.
pub fn walk_sum(walk: &[Step], field: &[f64]) -> f64 {
    walk.iter().map(|s| f64::from(s.sign()) * field[s.edge]).sum()
}

fn check_len(c: &ToroidalComplex, f: &CircleMap) -> Result<(), CoveringError> {
    if f.values.len() != c.num_vertices() {
        return Err(CoveringError::SizeMismatch { got: f.values.len(), expected: c.num_vertices() });
    }
    Ok(())
}

/// The representative of `f(v) - f(u)` in `(-1/2, 1/2]` for every edge.
pub fn edge_increments(c: &ToroidalComplex, f: &CircleMap) -> Result<Vec<f64>, CoveringError> {
    check_len(c, f)?;
    let mut out = Vec::with_capacity(c.num_edges());
    for (i, e) in c.edges.iter().enumerate() {
        let r = frac(f.values[e.v] - f.values[e.u]);
        let d = if r > 0.5 { r - 1.0 } else { r };
        if (d.abs() - 0.5).abs() <= 1e-12 {
            return Err(CoveringError::NotEdgeFine { edge: i });
        }
        out.push(d);
    }
    for (face, fc) in c.faces.iter().enumerate() {
        let sum = walk_sum(&fc.cycle, &out);
        if sum.abs() > SUM_TOL {
            return Err(CoveringError::FaceInconsistent { face, sum });
        }
    }
    Ok(out)
}

/// A closed walk of winding number 1 (the cheapest with unit edge weights).
pub fn winding_one_cycle(c: &ToroidalComplex) -> Result<Vec<Step>, CoveringError> {
    let unit = vec![1.0; c.num_edges()];
    c.meridian()
        .into_iter()
        .find_map(|v| shortest_lift_path(c, &unit, v))
        .map(|(_, walk)| walk)
        .ok_or(CoveringError::NoWindingCycle)
}

/// Potentials `x` with `x_v - x_u + w_e * deg = t_e` on every edge and `x_0 = 0`.
pub fn integrate_increments(c: &ToroidalComplex, t: &[f64], deg: f64) -> Result<Vec<f64>, CoveringError> {
    let n = c.num_vertices();
    let inc = c.incidence();
    let mut x = vec![f64::NAN; n];
    for root in 0..n {
        if !x[root].is_nan() {
            continue;
        }
        x[root] = 0.0;
        let mut queue = VecDeque::from([root]);
        while let Some(a) = queue.pop_front() {
            for &e in &inc[a] {
                let edge = &c.edges[e];
                let rel = t[e] - f64::from(edge.w) * deg;
                let (b, xb) = if edge.u == a { (edge.v, x[a] + rel) } else { (edge.u, x[a] - rel) };
                if x[b].is_nan() {
                    x[b] = xb;
                    queue.push_back(b);
                }
            }
        }
    }
    for (i, e) in c.edges.iter().enumerate() {
        let r = x[e.v] - x[e.u] + f64::from(e.w) * deg - t[i];
        if r.abs() > SUM_TOL * (1.0 + deg.abs()) * (1.0 + n as f64).sqrt() {
            return Err(CoveringError::HolonomyMismatch { edge: i });
        }
    }
    Ok(x)
}

/// Holonomy of a real increment field: its sum over a winding-1 cycle, after
/// checking that the field is exact up to that multiple of the cocycle.
pub fn degree_of_increments(c: &ToroidalComplex, t: &[f64]) -> Result<f64, CoveringError> {
    let cycle = winding_one_cycle(c)?;
    let deg = walk_sum(&cycle, t);
    integrate_increments(c, t, deg)?;
    Ok(deg)
}

pub fn degree(c: &ToroidalComplex, f: &CircleMap) -> Result<i64, CoveringError> {
    let t = edge_increments(c, f)?;
    let deg = degree_of_increments(c, &t)?;
    Ok(deg.round() as i64)
}

/// Materializes `K` periods of the cover.
pub fn unroll(c: &ToroidalComplex, k: usize) -> Result<PeriodicCover, CoveringError> {
    if k < 1 {
        return Err(CoveringError::InvalidPeriods);
    }
    let n = c.num_vertices();
    let meridian = c.meridian();
    let mut index = vec![vec![None; n]; k + 1];
    let mut nodes = Vec::with_capacity(k * n + meridian.len());
    for (s, row) in index.iter_mut().enumerate().take(k) {
        for (v, slot) in row.iter_mut().enumerate() {
            *slot = Some(nodes.len());
            nodes.push((v, s));
        }
    }
    for &v in &meridian {
        index[k][v] = Some(nodes.len());
        nodes.push((v, k));
    }
    let mut edges = Vec::new();
    for s in 0..=k as i64 {
        for (i, e) in c.edges.iter().enumerate() {
            let t = s + i64::from(e.w);
            if !(0..=k as i64).contains(&t) {
                continue;
            }
            if let (Some(a), Some(b)) = (index[s as usize][e.u], index[t as usize][e.v]) {
                edges.push((a, b, i));
            }
        }
    }
    let m0 = meridian.iter().filter_map(|&v| index[0][v]).collect();
    let m1 = meridian.iter().filter_map(|&v| index[k][v]).collect();
    Ok(PeriodicCover { periods: k, nodes, edges, m0, m1 })
}

/// Lifts `f` to `K` sheets. Sheet 0 takes `f(0)` at vertex 0.
pub fn lift(c: &ToroidalComplex, f: &CircleMap, k: usize) -> Result<LiftedMap, CoveringError> {
    if k < 1 {
        return Err(CoveringError::InvalidPeriods);
    }
    let t = edge_increments(c, f)?;
    let deg = degree_of_increments(c, &t)?.round();
    let mut base = integrate_increments(c, &t, deg)?;
    let shift = f.values[0] - base[0];
    for x in &mut base {
        *x += shift;
    }
    let sheets = (0..k).map(|s| base.iter().map(|x| x + s as f64 * deg).collect()).collect();
    Ok(LiftedMap { period_count: k, deg: deg as i64, sheets })
}

pub fn project(g: &LiftedMap) -> Result<CircleMap, CoveringError> {
    for s in 1..g.sheets.len() {
        let err = g.sheets[s]
            .iter()
            .zip(&g.sheets[s - 1])
            .map(|(a, b)| (a - b - g.deg as f64).abs())
            .fold(0.0, f64::max);
        if err > SUM_TOL {
            return Err(CoveringError::DeckViolation { sheet: s, error: err });
        }
    }
    let first = g.sheets.first().ok_or(CoveringError::InvalidPeriods)?;
    Ok(CircleMap::from_reals(first))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{build_ring, build_solid_torus, TorusParams};

    fn ring_cycle(m: usize, times: usize) -> Vec<Step> {
        (0..m * times).map(|i| Step { edge: i % m, forward: true }).collect()
    }

    #[test]
    fn winding_numbers_on_ring() {
        let c = build_ring(3, 1.0, 1.0).unwrap();
        assert_eq!(winding_number(&c, &ring_cycle(3, 1)).unwrap(), 1);
        assert_eq!(winding_number(&c, &ring_cycle(3, 2)).unwrap(), 2);
        assert_eq!(winding_number(&c, &[]).unwrap(), 0);
        assert_eq!(winding_number(&c, &ring_cycle(3, 1)[..2]), Err(CoveringError::NotClosed));
    }

    #[test]
    fn increments_and_degree() {
        let c = build_ring(3, 1.0, 1.0).unwrap();
        let f = CircleMap::new(vec![0.0, 1.0 / 3.0, 2.0 / 3.0]).unwrap();
        let t = edge_increments(&c, &f).unwrap();
        for d in t {
            assert!((d - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(degree(&c, &f).unwrap(), 1);
        assert_eq!(degree(&c, &CircleMap::constant(3, 0.4)).unwrap(), 0);
        assert_eq!(edge_increments(&c, &CircleMap::constant(3, 0.4)).unwrap(), vec![0.0; 3]);

        let c4 = build_ring(4, 1.0, 1.0).unwrap();
        let half = CircleMap::new(vec![0.0, 0.5, 0.0, 0.5]).unwrap();
        assert_eq!(edge_increments(&c4, &half), Err(CoveringError::NotEdgeFine { edge: 0 }));

        let c6 = build_ring(6, 1.0, 1.0).unwrap();
        let f2 = CircleMap::new(vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 0.0, 1.0 / 3.0, 2.0 / 3.0]).unwrap();
        assert_eq!(degree(&c6, &f2).unwrap(), 2);
    }

    #[test]
    fn unrolled_ring_is_a_path() {
        let c = build_ring(3, 1.0, 1.0).unwrap();
        let one = unroll(&c, 1).unwrap();
        assert_eq!(one.num_edges(), 3);
        assert_eq!(one.num_vertices(), 4);
        let two = unroll(&c, 2).unwrap();
        assert_eq!(two.num_edges(), 6);
        assert_eq!(two.num_vertices(), 7);
        // Path: every vertex has degree at most two, the ends are M_0 and M_1.
        let mut deg = vec![0; two.num_vertices()];
        for &(a, b, _) in &two.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        assert_eq!(deg[two.m0[0]], 1);
        assert_eq!(deg[two.m1[0]], 1);
        assert!(unroll(&c, 0).is_err());
    }

    #[test]
    fn torus_cover_edges_are_base_edges() {
        let c = build_solid_torus(&TorusParams::flat(8, 1, 4)).unwrap();
        let cover = unroll(&c, 2).unwrap();
        assert_eq!(cover.num_vertices(), 2 * c.num_vertices() + c.meridian().len());
        for &(a, b, e) in &cover.edges {
            assert_eq!(cover.nodes[a].0, c.edges[e].u);
            assert_eq!(cover.nodes[b].0, c.edges[e].v);
        }
    }

    #[test]
    fn lift_and_project() {
        let c = build_ring(3, 1.0, 1.0).unwrap();
        let f = CircleMap::new(vec![0.0, 1.0 / 3.0, 2.0 / 3.0]).unwrap();
        let g = lift(&c, &f, 2).unwrap();
        let want = [[0.0, 1.0 / 3.0, 2.0 / 3.0], [1.0, 4.0 / 3.0, 5.0 / 3.0]];
        for (row, w) in g.sheets.iter().zip(want) {
            for (a, b) in row.iter().zip(w) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let back = project(&g).unwrap();
        for (a, b) in back.values.iter().zip(&f.values) {
            assert!((a - b).abs() < 1e-12);
        }

        let k = CircleMap::constant(3, 0.25);
        let g = lift(&c, &k, 3).unwrap();
        assert_eq!(g.deg, 0);
        assert!(g.sheets.iter().flatten().all(|&x| x == 0.25));

        let mut bad = lift(&c, &f, 2).unwrap();
        bad.sheets[1][0] += 0.1;
        assert!(matches!(project(&bad), Err(CoveringError::DeckViolation { .. })));
    }
}
