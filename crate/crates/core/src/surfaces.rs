//! Separating edge cuts: the min-cut oracle, surface modulus, level cuts of
//! circle-valued maps, and the construction of a degree-1 map from a cut.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complex::{Density, ToroidalComplex};
use crate::covering::{degree, degree_of_increments, edge_increments, lift, CircleMap, CoveringError};
use crate::graph::{base_shortest_paths, SheetWindow};
use crate::maxflow::FlowNetwork;
use crate::modulus::{solve_modulus, ConstraintOracle, Member, ModulusError, SolveOptions, SolveReport};

/// Label range `[-J, J]` of the cut oracle.
pub const DEFAULT_LABEL_RANGE: i32 = 2;

/// Most cuts returned by one candidate query.
const CUT_CANDIDATES: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SurfaceError {
    #[error("map has degree {0}, expected 1")]
    DegreeNotOne(i64),
    #[error(transparent)]
    Covering(#[from] CoveringError),
    #[error("edge set does not meet every winding cycle")]
    NotSeparating,
    #[error("neighbourhood radius too large: {0}")]
    EpsTooLarge(String),
    #[error("neighbourhood radius must be positive")]
    InvalidEps,
    #[error("cut enumeration limited to 20 edges (got {0})")]
    TooLarge(usize),
}

/// An edge set meeting every winding-1 cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatingCut {
    pub edges: Vec<usize>,
    pub h_weight: f64,
}

impl SeparatingCut {
    pub fn new(c: &ToroidalComplex, mut edges: Vec<usize>) -> Self {
        edges.sort_unstable();
        edges.dedup();
        let h_weight = edges.iter().map(|&e| c.h(e)).sum();
        Self { edges, h_weight }
    }

    pub fn member(&self, c: &ToroidalComplex) -> Member {
        Member::new(self.edges.iter().map(|&e| (e, c.h(e))).collect())
    }

    /// `sum_{e in S} g_e h_e`.
    pub fn weight(&self, c: &ToroidalComplex, g: &[f64]) -> f64 {
        self.edges.iter().map(|&e| g[e] * c.h(e)).sum()
    }
}

/// Integer potentials `phi` with `phi_v - phi_u = w_e` on every edge not
/// removed, plus component labels. `None` if some cycle avoiding the removed
/// edges has nonzero winding.
pub fn component_potentials(c: &ToroidalComplex, removed: &[bool]) -> Option<(Vec<i64>, Vec<usize>)> {
    let n = c.num_vertices();
    let inc = c.incidence();
    let mut phi = vec![0i64; n];
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    for root in 0..n {
        if comp[root] != usize::MAX {
            continue;
        }
        comp[root] = next;
        let mut q = VecDeque::from([root]);
        while let Some(a) = q.pop_front() {
            for &e in &inc[a] {
                if removed[e] {
                    continue;
                }
                let edge = &c.edges[e];
                let w = i64::from(edge.w);
                let (b, pb) = if edge.u == a { (edge.v, phi[a] + w) } else { (edge.u, phi[a] - w) };
                if comp[b] == usize::MAX {
                    comp[b] = next;
                    phi[b] = pb;
                    q.push_back(b);
                } else if phi[b] != pb {
                    return None;
                }
            }
        }
        next += 1;
    }
    Some((phi, comp))
}

pub fn is_separating(c: &ToroidalComplex, edges: &[usize]) -> bool {
    let mut removed = vec![false; c.num_edges()];
    for &e in edges {
        removed[e] = true;
    }
    component_potentials(c, &removed).is_some()
}

/// Minimum-weight cut by a layered min-cut over integer vertex labels.
///
/// A labelling `phi` with values in `[-J, J]` (vertex 0 pinned to 0) defines
/// the cut `{e : w_e + phi_u - phi_v != 0}`. The network charges
/// `g_e h_e |w_e + phi_u - phi_v|`, which equals the cut weight whenever no
/// edge jumps by more than one label.
pub struct WindingCutOracle<'a> {
    complex: &'a ToroidalComplex,
    pub label_range: i32,
}

enum Slot {
    Source,
    Sink,
    Node(usize),
}

impl<'a> WindingCutOracle<'a> {
    pub fn new(complex: &'a ToroidalComplex) -> Self {
        Self { complex, label_range: DEFAULT_LABEL_RANGE }
    }

    fn slot(&self, v: usize, k: i32) -> Slot {
        let j = self.label_range;
        if v == 0 {
            return if k <= 0 { Slot::Source } else { Slot::Sink };
        }
        if k <= -j {
            Slot::Source
        } else if k > j {
            Slot::Sink
        } else {
            Slot::Node(v * (2 * j as usize) + (k + j - 1) as usize)
        }
    }

    /// Canonical minimum cut: labels from the source side of the residual network.
    pub fn cut(&self, g: &[f64]) -> (SeparatingCut, f64) {
        let c = self.complex;
        let j = self.label_range;
        let layers = 2 * j as usize;
        let n_nodes = c.num_vertices() * layers;
        let (s, t) = (n_nodes, n_nodes + 1);
        let caps: Vec<f64> = c.edges.iter().zip(g).map(|(e, x)| x * e.h()).collect();
        let total: f64 = caps.iter().sum::<f64>() * f64::from(2 * j + 2);
        let big = 1e6 * (1.0 + total);
        let eps = 1e-14 * (1.0 + total);
        let mut net = FlowNetwork::new(n_nodes + 2);
        let idx = |sl: Slot| match sl {
            Slot::Source => s,
            Slot::Sink => t,
            Slot::Node(i) => i,
        };
        for v in 1..c.num_vertices() {
            for k in -j + 1..j {
                net.add_arc(idx(self.slot(v, k + 1)), idx(self.slot(v, k)), big);
            }
        }
        for (e, edge) in c.edges.iter().enumerate() {
            if caps[e] <= 0.0 {
                continue;
            }
            for k in -j - 1..=j + 2 {
                let a = idx(self.slot(edge.v, k));
                let b = idx(self.slot(edge.u, k - edge.w));
                if a == b || (a >= n_nodes && b >= n_nodes) {
                    continue;
                }
                net.add_undirected(a, b, caps[e]);
            }
        }
        net.max_flow(s, t, eps);
        let side = net.source_side(s, eps);
        let phi: Vec<i32> = (0..c.num_vertices())
            .map(|v| {
                if v == 0 {
                    return 0;
                }
                let mut lab = -j;
                for k in -j + 1..=j {
                    if let Slot::Node(i) = self.slot(v, k) {
                        if side[i] {
                            lab = k;
                        }
                    }
                }
                lab
            })
            .collect();
        let edges: Vec<usize> = c
            .edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.w + phi[e.u] - phi[e.v] != 0)
            .map(|(i, _)| i)
            .collect();
        let cut = SeparatingCut::new(c, edges);
        let w = cut.weight(c, g);
        (cut, w)
    }
}

impl ConstraintOracle for WindingCutOracle<'_> {
    fn most_violated(&self, rho: &[f64]) -> Option<(Member, f64)> {
        let (cut, _) = self.cut(rho);
        let m = cut.member(self.complex);
        let w = m.weight(rho);
        Some((m, w))
    }

    /// The minimum cut, then further cuts found after penalising the edges of
    /// those already returned. Stops at the first cut that is not violated.
    fn candidates(&self, rho: &[f64]) -> Vec<(Member, f64)> {
        let penalty = 10.0 * rho.iter().copied().fold(0.0, f64::max);
        let mut g = rho.to_vec();
        let mut out: Vec<(Member, f64)> = Vec::new();
        for _ in 0..CUT_CANDIDATES {
            let (cut, _) = self.cut(&g);
            let m = cut.member(self.complex);
            let w = m.weight(rho);
            if !out.is_empty() && w >= 1.0 {
                break;
            }
            for &e in &cut.edges {
                g[e] += penalty;
            }
            out.push((m, w));
        }
        out
    }

    fn enumerate_all(&self) -> Option<Vec<Member>> {
        let cuts = enumerate_minimal_cuts(self.complex).ok()?;
        Some(cuts.iter().map(|s| s.member(self.complex)).collect())
    }
}

pub fn winding_cut_oracle(c: &ToroidalComplex, g: &[f64]) -> (SeparatingCut, f64) {
    WindingCutOracle::new(c).cut(g)
}

pub fn surface_modulus(c: &ToroidalComplex, p_star: f64, opts: &SolveOptions) -> Result<SolveReport, ModulusError> {
    solve_modulus(c, &WindingCutOracle::new(c), p_star, opts)
}

/// All inclusion-minimal separating edge sets of a complex with at most 20 edges.
pub fn enumerate_minimal_cuts(c: &ToroidalComplex) -> Result<Vec<SeparatingCut>, SurfaceError> {
    let m = c.num_edges();
    if m > 20 {
        return Err(SurfaceError::TooLarge(m));
    }
    let full = 1usize << m;
    let mut blocking = vec![false; full];
    let mut removed = vec![false; m];
    for mask in 0..full {
        for (e, r) in removed.iter_mut().enumerate() {
            *r = mask >> e & 1 == 1;
        }
        blocking[mask] = component_potentials(c, &removed).is_some();
    }
    let mut out = Vec::new();
    for mask in 0..full {
        if blocking[mask] && (0..m).all(|e| mask >> e & 1 == 0 || !blocking[mask & !(1 << e)]) {
            out.push(SeparatingCut::new(c, (0..m).filter(|e| mask >> e & 1 == 1).collect()));
        }
    }
    Ok(out)
}

fn hits_vertex(f: &CircleMap, t: f64) -> bool {
    f.values.iter().any(|&x| {
        let d = (x - t).rem_euclid(1.0);
        d.min(1.0 - d) < 1e-12
    })
}

/// Edges whose lifted increment interval crosses a level `t + n`.
pub fn level_cut(c: &ToroidalComplex, f: &CircleMap, t: f64) -> Result<SeparatingCut, SurfaceError> {
    let deg = degree(c, f)?;
    if deg != 1 {
        return Err(SurfaceError::DegreeNotOne(deg));
    }
    let inc = edge_increments(c, f)?;
    let base = &lift(c, f, 1)?.sheets[0];
    level_cut_lifted(c, base, &inc, t)
}

/// [`level_cut`] for a degree-1 map given by potentials and lifted increments,
/// which need not be edge-fine.
pub fn level_cut_lifted(c: &ToroidalComplex, base: &[f64], inc: &[f64], t: f64) -> Result<SeparatingCut, SurfaceError> {
    let f = CircleMap::from_reals(base);
    let mut t = t.rem_euclid(1.0);
    while hits_vertex(&f, t) {
        t += 1e-9;
    }
    let edges: Vec<usize> = c
        .edges
        .iter()
        .enumerate()
        .filter(|&(i, e)| {
            let a = base[e.u];
            let b = a + inc[i];
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            (hi - t).floor() > (lo - t).floor()
        })
        .map(|(i, _)| i)
        .collect();
    let cut = SeparatingCut::new(c, edges);
    if !is_separating(c, &cut.edges) {
        return Err(SurfaceError::NotSeparating);
    }
    Ok(cut)
}

/// Degree-1 map built from a cut, with an upper gradient supported near the cut.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMap {
    pub psi: CircleMap,
    pub rho: Density,
    /// Lifted increments of `psi` (sum to 1 around winding-1 cycles). These
    /// can exceed 1/2 in absolute value, so `psi` alone need not be edge-fine.
    pub increments: Vec<f64>,
    /// Edges within distance `eps` of the cut.
    pub neighborhood: Vec<usize>,
    /// Shortest crossing length through the neighbourhood.
    pub crossing: f64,
}

/// Shifts per-component potentials so the cut cocycle `w - d phi` takes values in {-1, 0, 1}.
fn reduced_cocycle(c: &ToroidalComplex, phi: &[i64], comp: &[usize], cut: &[bool]) -> Vec<i32> {
    let ncomp = comp.iter().max().map_or(0, |m| m + 1);
    let base = |e: usize| {
        let edge = &c.edges[e];
        i64::from(edge.w) - (phi[edge.v] - phi[edge.u])
    };
    // Difference constraints shift_j - shift_i <= k on arcs i -> j.
    let mut arcs = Vec::new();
    for e in (0..c.num_edges()).filter(|&e| cut[e]) {
        let (i, j) = (comp[c.edges[e].u], comp[c.edges[e].v]);
        let b = base(e);
        arcs.push((i, j, b + 1));
        arcs.push((j, i, 1 - b));
    }
    let mut shift = vec![0i64; ncomp];
    let mut feasible = false;
    for _ in 0..=ncomp {
        let mut changed = false;
        for &(i, j, k) in &arcs {
            if shift[i] + k < shift[j] {
                shift[j] = shift[i] + k;
                changed = true;
            }
        }
        if !changed {
            feasible = true;
            break;
        }
    }
    if !feasible {
        shift = vec![0; ncomp];
    }
    (0..c.num_edges())
        .map(|e| {
            let edge = &c.edges[e];
            (base(e) - (shift[comp[edge.v]] - shift[comp[edge.u]])) as i32
        })
        .collect()
}

/// Builds `psi` from a separating cut.
///
/// The cut is thickened to all edges whose midpoints lie within `eps` of a cut
/// midpoint. Outside the thickening the map is locally constant; across it the
/// density is the reciprocal of the shortest crossing length, and `psi` is the
/// distance to the nearest lower translate of the untouched region.
pub fn surface_to_degree_one_map(c: &ToroidalComplex, cut: &SeparatingCut, eps: f64) -> Result<SurfaceMap, SurfaceError> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(SurfaceError::InvalidEps);
    }
    let m = c.num_edges();
    let mut in_cut = vec![false; m];
    for &e in &cut.edges {
        in_cut[e] = true;
    }
    let (phi, comp) = component_potentials(c, &in_cut).ok_or(SurfaceError::NotSeparating)?;
    let wp = reduced_cocycle(c, &phi, &comp, &in_cut);

    let lengths: Vec<f64> = c.edges.iter().map(|e| e.ell).collect();
    let mut sources = Vec::new();
    for &e in &cut.edges {
        let edge = &c.edges[e];
        sources.push((edge.u, 0.5 * edge.ell));
        sources.push((edge.v, 0.5 * edge.ell));
    }
    let d = base_shortest_paths(c, &sources, &lengths).dist;
    let radius = eps * (1.0 - 1e-9);
    let in_nbhd: Vec<bool> = (0..m)
        .map(|e| in_cut[e] || 0.5 * c.edges[e].ell + d[c.edges[e].u].min(d[c.edges[e].v]) < radius)
        .collect();
    let mut in_z = vec![true; c.num_vertices()];
    for (e, edge) in c.edges.iter().enumerate() {
        if in_nbhd[e] {
            in_z[edge.u] = false;
            in_z[edge.v] = false;
        }
    }
    let z: Vec<usize> = (0..c.num_vertices()).filter(|&v| in_z[v]).collect();
    if z.is_empty() {
        return Err(SurfaceError::EpsTooLarge("neighbourhood covers every vertex".into()));
    }

    let nweights: Vec<f64> = (0..m).map(|e| if in_nbhd[e] { c.edges[e].ell } else { 0.0 }).collect();
    let win = SheetWindow::new(c, &wp, -3, 3);
    let from_lower: Vec<(usize, f64)> = z.iter().filter_map(|&v| win.node(v, -1)).map(|x| (x, 0.0)).collect();
    let sp = win.shortest_paths(&from_lower, &nweights);
    let crossing = z
        .iter()
        .filter_map(|&v| win.node(v, 0))
        .map(|x| sp.dist[x])
        .fold(f64::INFINITY, f64::min);
    if !(crossing.is_finite() && crossing > 0.0) {
        return Err(SurfaceError::EpsTooLarge(format!("crossing length {crossing}")));
    }
    let level = 1.0 / crossing;
    let rho: Vec<f64> = (0..m).map(|e| if in_nbhd[e] { level } else { 0.0 }).collect();

    let mut sources = Vec::new();
    for k in win.lo..=win.hi {
        for &v in &z {
            sources.push((win.node(v, k).unwrap(), f64::from(k)));
        }
    }
    let rho_len: Vec<f64> = (0..m).map(|e| rho[e] * c.edges[e].ell).collect();
    let psi_t = win.shortest_paths(&sources, &rho_len).dist;
    let at = |v: usize, k: i32| psi_t[win.node(v, k).unwrap()];

    for v in 0..c.num_vertices() {
        let drift = (at(v, 1) - at(v, 0) - 1.0).abs().max((at(v, 0) - at(v, -1) - 1.0).abs());
        if drift > 1e-9 {
            return Err(SurfaceError::EpsTooLarge(format!("deck relation off by {drift:.3e} at vertex {v}")));
        }
    }
    if z.iter().any(|&v| at(v, 0).abs() > 1e-12) {
        return Err(SurfaceError::EpsTooLarge("map is not zero on the untouched region".into()));
    }
    let increments: Vec<f64> = c.edges.iter().enumerate().map(|(e, edge)| at(edge.v, wp[e]) - at(edge.u, 0)).collect();
    for e in 0..m {
        if increments[e].abs() > rho_len[e] * (1.0 + 1e-12) + 1e-12 {
            return Err(SurfaceError::EpsTooLarge(format!("edge {e} breaks the upper-gradient bound")));
        }
    }
    let deg = degree_of_increments(c, &increments)?;
    if (deg - 1.0).abs() > 1e-9 {
        return Err(SurfaceError::EpsTooLarge(format!("constructed map has degree {deg}")));
    }
    let base: Vec<f64> = (0..c.num_vertices()).map(|v| at(v, 0)).collect();
    Ok(SurfaceMap {
        psi: CircleMap::from_reals(&base),
        rho: Density { values: rho },
        increments,
        neighborhood: (0..m).filter(|&e| in_nbhd[e]).collect(),
        crossing,
    })
}

/// Limit of the construction as the neighbourhood shrinks onto the cut: the
/// map jumps by the reduced cocycle across each cut edge and is locally
/// constant elsewhere. Works for cuts that touch every vertex.
pub fn step_map(c: &ToroidalComplex, cut: &SeparatingCut) -> Result<SurfaceMap, SurfaceError> {
    let m = c.num_edges();
    let mut in_cut = vec![false; m];
    for &e in &cut.edges {
        in_cut[e] = true;
    }
    let (phi, comp) = component_potentials(c, &in_cut).ok_or(SurfaceError::NotSeparating)?;
    let wp = reduced_cocycle(c, &phi, &comp, &in_cut);
    let increments: Vec<f64> = wp.iter().map(|&k| f64::from(k)).collect();
    let rho: Vec<f64> = (0..m).map(|e| increments[e].abs() / c.edges[e].ell).collect();
    let deg = degree_of_increments(c, &increments)?;
    if (deg - 1.0).abs() > 1e-9 {
        return Err(SurfaceError::EpsTooLarge(format!("step map has degree {deg}")));
    }
    let crossing = (0..m).filter(|&e| wp[e] != 0).map(|e| c.edges[e].ell).fold(f64::INFINITY, f64::min);
    Ok(SurfaceMap {
        psi: CircleMap::constant(c.num_vertices(), 0.0),
        rho: Density { values: rho },
        increments,
        neighborhood: cut.edges.clone(),
        crossing,
    })
}
