//! The family of winding-1 cycles and its p-modulus.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::complex::{Step, ToroidalComplex};
use crate::covering::winding_number;
use crate::graph::SheetWindow;
use crate::modulus::{
    prefer, prune_dominated, solve_modulus, ConstraintOracle, Member, ModulusError, SolveOptions, SolveReport,
};

/// Sheets searched by the oracle, relative to the start sheet 0.
pub const WINDOW: (i32, i32) = (-1, 2);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindingCycle {
    pub walk: Vec<Step>,
    pub winding: i64,
}

impl WindingCycle {
    /// Coefficients `ell_e` times the number of traversals.
    pub fn member(&self, c: &ToroidalComplex) -> Member {
        Member::new(self.walk.iter().map(|s| (s.edge, c.edges[s.edge].ell)).collect())
    }

    pub fn weight(&self, c: &ToroidalComplex, rho: &[f64]) -> f64 {
        self.walk.iter().map(|s| rho[s.edge] * c.edges[s.edge].ell).sum()
    }
}

fn walk_vertices(c: &ToroidalComplex, walk: &[Step]) -> Vec<usize> {
    walk.iter()
        .map(|s| {
            let e = &c.edges[s.edge];
            if s.forward {
                e.u
            } else {
                e.v
            }
        })
        .collect()
}

/// Splits a closed walk into simple closed sub-walks by popping loops.
fn simple_pieces(c: &ToroidalComplex, walk: &[Step]) -> Vec<Vec<Step>> {
    let starts = walk_vertices(c, walk);
    let mut pieces = Vec::new();
    let mut stack: Vec<(usize, Step)> = Vec::new();
    let n = walk.len();
    for i in 0..n {
        stack.push((starts[i], walk[i]));
        let head = starts[(i + 1) % n];
        if let Some(pos) = stack.iter().position(|&(v, _)| v == head) {
            pieces.push(stack.drain(pos..).map(|(_, s)| s).collect());
        }
    }
    pieces
}

/// Replaces a winding-1 closed walk by a simple winding-1 cycle of no larger
/// weight when the loop decomposition contains one.
pub fn simplify(c: &ToroidalComplex, walk: Vec<Step>, rho: &[f64]) -> WindingCycle {
    let mut best: Option<(Vec<Step>, f64)> = None;
    for piece in simple_pieces(c, &walk) {
        let k: i64 = piece.iter().map(|s| i64::from(s.sign() * c.edges[s.edge].w)).sum();
        let oriented: Vec<Step> = match k {
            1 => piece,
            -1 => piece.iter().rev().map(|s| Step { edge: s.edge, forward: !s.forward }).collect(),
            _ => continue,
        };
        let w: f64 = oriented.iter().map(|s| rho[s.edge] * c.edges[s.edge].ell).sum();
        let better = match &best {
            None => true,
            Some((b, bw)) => w < *bw || (w == *bw && support(&oriented) < support(b)),
        };
        if better {
            best = Some((oriented, w));
        }
    }
    let walk = best.map_or(walk, |b| b.0);
    WindingCycle { winding: 1, walk }
}

fn support(walk: &[Step]) -> Vec<usize> {
    let mut s: Vec<usize> = walk.iter().map(|s| s.edge).collect();
    s.sort_unstable();
    s.dedup();
    s
}

/// Shortest winding-1 cycles through each meridian vertex.
pub struct WindingCycleOracle<'a> {
    complex: &'a ToroidalComplex,
    cocycle: Vec<i32>,
    meridian: Vec<usize>,
}

impl<'a> WindingCycleOracle<'a> {
    pub fn new(complex: &'a ToroidalComplex) -> Self {
        Self { complex, cocycle: complex.edges.iter().map(|e| e.w).collect(), meridian: complex.meridian() }
    }

    /// One minimal cycle per meridian vertex, deduplicated and sorted by
    /// (weight, support).
    pub fn cycles(&self, rho: &[f64]) -> Vec<(WindingCycle, f64)> {
        let c = self.complex;
        let weights: Vec<f64> = c.edges.iter().zip(rho).map(|(e, r)| r * e.ell).collect();
        let win = SheetWindow::new(c, &self.cocycle, WINDOW.0, WINDOW.1);
        let mut out: Vec<(WindingCycle, f64)> = Vec::new();
        let mut seen = HashSet::new();
        for &v in &self.meridian {
            let (Some(s), Some(t)) = (win.node(v, 0), win.node(v, 1)) else { continue };
            let sp = win.shortest_paths(&[(s, 0.0)], &weights);
            let Some(walk) = sp.walk_to(t) else { continue };
            let cyc = simplify(c, walk, rho);
            let w = cyc.weight(c, rho);
            if seen.insert(support(&cyc.walk)) {
                out.push((cyc, w));
            }
        }
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| support(&a.0.walk).cmp(&support(&b.0.walk))));
        out
    }
}

impl ConstraintOracle for WindingCycleOracle<'_> {
    fn most_violated(&self, rho: &[f64]) -> Option<(Member, f64)> {
        let mut best: Option<(Member, f64)> = None;
        for (cyc, _) in self.cycles(rho) {
            let m = cyc.member(self.complex);
            let cand = (m.clone(), m.weight(rho));
            if best.as_ref().map_or(true, |b| prefer(&cand, b)) {
                best = Some(cand);
            }
        }
        best
    }

    fn candidates(&self, rho: &[f64]) -> Vec<(Member, f64)> {
        let mut out: Vec<(Member, f64)> = self
            .cycles(rho)
            .into_iter()
            .map(|(cyc, _)| {
                let m = cyc.member(self.complex);
                let w = m.weight(rho);
                (m, w)
            })
            .collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.support().cmp(&b.0.support())));
        out
    }

    fn enumerate_all(&self) -> Option<Vec<Member>> {
        if self.complex.num_edges() > 20 {
            return None;
        }
        enumerate_winding_members(self.complex, 200_000).ok()
    }
}

/// Cheapest winding-1 cycle for a density, with its weight `sum rho_e ell_e`.
pub fn winding_cycle_oracle(c: &ToroidalComplex, rho: &[f64]) -> (WindingCycle, f64) {
    let oracle = WindingCycleOracle::new(c);
    oracle
        .cycles(rho)
        .into_iter()
        .next()
        .expect("validated complexes contain a winding-1 cycle")
}

pub fn path_modulus(c: &ToroidalComplex, p: f64, opts: &SolveOptions) -> Result<SolveReport, ModulusError> {
    solve_modulus(c, &WindingCycleOracle::new(c), p, opts)
}

/// Every simple path from `(v, 0)` to `(v, 1)` inside the oracle window, for
/// each meridian vertex, as members with dominated ones removed.
/// Fails when more than `limit` paths are found.
pub fn enumerate_winding_members(c: &ToroidalComplex, limit: usize) -> Result<Vec<Member>, usize> {
    let cocycle: Vec<i32> = c.edges.iter().map(|e| e.w).collect();
    let win = SheetWindow::new(c, &cocycle, WINDOW.0, WINDOW.1);
    let ones = vec![1.0; c.num_edges()];
    let mut members = Vec::new();
    let mut keys = HashSet::new();
    let mut count = 0;
    for v in c.meridian() {
        let (Some(s), Some(t)) = (win.node(v, 0), win.node(v, 1)) else { continue };
        let mut on_path = vec![false; win.num_nodes()];
        let mut steps: Vec<Step> = Vec::new();
        on_path[s] = true;
        // Iterative DFS over (node, neighbour list, cursor).
        let mut buf = Vec::new();
        win.neighbors(s, &ones, &mut buf);
        let mut frames = vec![(s, buf.clone(), 0usize)];
        while let Some(frame) = frames.last_mut() {
            let (_, nbrs, cursor) = frame;
            if *cursor >= nbrs.len() {
                let (node, ..) = frames.pop().unwrap();
                on_path[node] = false;
                steps.pop();
                continue;
            }
            let (y, _, step) = nbrs[*cursor];
            *cursor += 1;
            if on_path[y] {
                continue;
            }
            if y == t {
                count += 1;
                if count > limit {
                    return Err(count);
                }
                let mut walk = steps.clone();
                walk.push(step);
                debug_assert_eq!(winding_number(c, &walk), Ok(1));
                let m = Member::new(walk.iter().map(|s| (s.edge, c.edges[s.edge].ell)).collect());
                let key: Vec<(usize, u64)> = m.coefs.iter().map(|&(e, x)| (e, x.to_bits())).collect();
                if keys.insert(key) {
                    members.push(m);
                }
                continue;
            }
            on_path[y] = true;
            steps.push(step);
            let mut nb = Vec::new();
            win.neighbors(y, &ones, &mut nb);
            frames.push((y, nb, 0));
        }
    }
    Ok(prune_dominated(&members))
}
