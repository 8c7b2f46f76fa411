//! Degree-1 p-capacity.
//!
//! A degree-1 map is parametrized by real vertex potentials `x`; its lifted
//! increment on edge `e = (u, v)` is `t_e = x_v - x_u + w_e`. The capacity is
//! the minimum of `E(x) = sum_e mu_e (|t_e| / ell_e)^p`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complex::{Density, ToroidalComplex};
use crate::covering::{degree_of_increments, edge_increments, CircleMap, CoveringError};
use crate::linalg::{norm, PinnedLaplacian};
use crate::modulus::clamp_p;

#[derive(Debug, Error)]
pub enum CapacityError {
    #[error("degenerate complex: {0}")]
    DegenerateComplex(String),
    #[error("capacity solve did not converge after {} iterations (stationarity residual {:.3e})", .0.iterations, .0.kkt_residual)]
    NotConverged(Box<CapacityReport>),
    #[error("exponent {0} is not a finite number greater than 1")]
    InvalidExponent(f64),
    #[error("edge {edge}: density is not an upper gradient of the supplied map")]
    NotUpperGradient { edge: usize },
    #[error("supplied map has degree {0}, expected 1")]
    DegreeNotOne(f64),
    #[error("expected {expected} values, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Covering(#[from] CoveringError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CapacityOptions {
    /// Gradient tolerance relative to `1 + E`. Defaults to 1e-8 at p = 2, 1e-6 otherwise.
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    /// Starting potentials; the p = 2 solution otherwise.
    pub init: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub p: f64,
    pub value: f64,
    pub minimizer: CircleMap,
    /// Real potentials with `x_0 = 0`.
    pub potentials: Vec<f64>,
    /// Lifted increments `x_v - x_u + w_e`.
    pub increments: Vec<f64>,
    pub rho0: Density,
    /// Stationarity residual at the minimizer, as measured by [`stationarity`].
    pub kkt_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationalCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

pub fn increments(c: &ToroidalComplex, x: &[f64]) -> Vec<f64> {
    c.edges.iter().map(|e| x[e.v] - x[e.u] + f64::from(e.w)).collect()
}

pub fn energy(c: &ToroidalComplex, x: &[f64], p: f64) -> f64 {
    c.edges.iter().map(|e| e.mu * ((x[e.v] - x[e.u] + f64::from(e.w)).abs() / e.ell).powf(p)).sum()
}

pub fn gradient(c: &ToroidalComplex, x: &[f64], p: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    for e in &c.edges {
        let t = x[e.v] - x[e.u] + f64::from(e.w);
        let s = p * e.mu * t.abs().powf(p - 1.0) * t.signum() / e.ell.powf(p);
        g[e.v] += s;
        g[e.u] -= s;
    }
    g
}

/// `|delta_e| / ell_e` for an edge-fine circle map.
pub fn minimal_upper_gradient(c: &ToroidalComplex, f: &CircleMap) -> Result<Density, CoveringError> {
    let d = edge_increments(c, f)?;
    Ok(Density { values: c.edges.iter().zip(d).map(|(e, t)| t.abs() / e.ell).collect() })
}

fn pinned_norm(g: &[f64]) -> f64 {
    norm(&g[1..])
}

/// Increments at most this fraction of the largest one count as zero when
/// measuring stationarity below p = 2.
pub const ZERO_INCREMENT: f64 = 1e-9;

/// First-order residual at `x`. For p >= 2 this is the gradient norm with
/// vertex 0 pinned. Below 2 the flux `p |t|^(p-1)` of an edge is steep at
/// zero, so rounding noise in a vanishing increment dominates the gradient;
/// vertices joined by vanishing increments are merged and their gradients summed.
pub fn stationarity(c: &ToroidalComplex, x: &[f64], p: f64) -> f64 {
    let g = gradient(c, x, p);
    if p >= 2.0 {
        return pinned_norm(&g);
    }
    let t = increments(c, x);
    let tmax = t.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut parent: Vec<usize> = (0..x.len()).collect();
    fn find(parent: &mut [usize], mut a: usize) -> usize {
        while parent[a] != a {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        a
    }
    for (e, edge) in c.edges.iter().enumerate() {
        if t[e].abs() <= ZERO_INCREMENT * tmax {
            let (a, b) = (find(&mut parent, edge.u), find(&mut parent, edge.v));
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut sum = vec![0.0; x.len()];
    for v in 0..x.len() {
        let r = find(&mut parent, v);
        sum[r] += g[v];
    }
    // The cluster holding the pinned vertex absorbs its imbalance.
    sum[find(&mut parent, 0)] = 0.0;
    norm(&sum)
}

/// Exact minimizer at p = 2: a weighted Laplacian system.
fn solve_quadratic(c: &ToroidalComplex) -> (Vec<f64>, usize) {
    let k: Vec<f64> = c.edges.iter().map(|e| e.mu / (e.ell * e.ell)).collect();
    let mut b = vec![0.0; c.num_vertices()];
    for (e, ke) in c.edges.iter().zip(&k) {
        let w = f64::from(e.w);
        b[e.v] -= ke * w;
        b[e.u] += ke * w;
    }
    let lap = PinnedLaplacian::new(c, &k);
    let (x, it, _) = lap.solve(&b, 1e-13, 20 * c.num_vertices() + 100);
    (x, it)
}

/// Damped Newton iterations with a regularized Hessian. Returns the number of
/// Newton steps and whether the gradient tolerance was met.
fn newton(c: &ToroidalComplex, x: &mut [f64], p: f64, tol: f64, max_iter: usize) -> (usize, bool) {
    let n = x.len();
    let mut k = vec![0.0; c.num_edges()];
    for it in 0..max_iter {
        let e0 = energy(c, x, p);
        let g = gradient(c, x, p);
        let r0 = stationarity(c, x, p);
        if r0 <= tol * (1.0 + e0) {
            return (it, true);
        }
        let t = increments(c, x);
        let tmax = t.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let floor = if p < 2.0 { 1e-14 } else { 1e-6 } * tmax.max(1e-12);
        for (i, e) in c.edges.iter().enumerate() {
            let a = t[i].abs();
            // Below 2 the curvature blows up at zero; small increments get the
            // secant weight of the quadratic majorant instead.
            let curv = if p < 2.0 && a < 1e-3 * tmax { 1.0 } else { p - 1.0 };
            k[i] = p * curv * e.mu * a.max(floor).powf(p - 2.0) / e.ell.powf(p);
        }
        let lap = PinnedLaplacian::new(c, &k);
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let (d, _, _) = lap.solve(&rhs, 1e-12, 40 * n + 200);
        let slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        let dir: Vec<f64> = if slope < 0.0 { d } else { rhs };
        let slope: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
        let mut step = 1.0;
        let mut trial = x.to_vec();
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                trial[i] = x[i] + step * dir[i];
            }
            let e1 = energy(c, &trial, p);
            if e1 <= e0 + 1e-4 * step * slope {
                accepted = e1 < e0;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // Energy differences are below rounding; settle for a smaller gradient.
            let mut step = 1.0;
            for _ in 0..30 {
                for i in 0..n {
                    trial[i] = x[i] + step * dir[i];
                }
                if stationarity(c, &trial, p) < r0 {
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
        }
        if !accepted {
            return (it, r0 <= tol * (1.0 + e0) * 10.0);
        }
        x.copy_from_slice(&trial);
    }
    (max_iter, stationarity(c, x, p) <= tol * (1.0 + energy(c, x, p)))
}

pub fn solve_capacity(c: &ToroidalComplex, p: f64, opts: &CapacityOptions) -> Result<CapacityReport, CapacityError> {
    if !p.is_finite() || p <= 1.0 {
        return Err(CapacityError::InvalidExponent(p));
    }
    let p = clamp_p(p);
    if !c.is_connected() {
        return Err(CapacityError::DegenerateComplex("graph is disconnected".into()));
    }
    if let Some(e) = c.edges.iter().position(|e| !(e.mu > 0.0) || !(e.ell > 0.0)) {
        return Err(CapacityError::DegenerateComplex(format!("edge {e} has zero measure or length")));
    }
    let n = c.num_vertices();
    let quadratic = (p - 2.0).abs() < 1e-15;
    let tol = opts.tol.unwrap_or(if quadratic { 1e-8 } else { 1e-6 });
    let max_iter = opts.max_iter.unwrap_or(500);

    let mut iterations = 0;
    let mut x = match &opts.init {
        Some(init) => {
            if init.len() != n {
                return Err(CapacityError::SizeMismatch { expected: n, got: init.len() });
            }
            let x0 = init[0];
            init.iter().map(|v| v - x0).collect()
        }
        None => {
            let (x, it) = solve_quadratic(c);
            iterations += it;
            x
        }
    };
    let mut converged = true;
    if !quadratic || opts.init.is_some() {
        // Continuation in p from 2 in steps of at most 0.5.
        let mut ladder = Vec::new();
        if opts.init.is_none() {
            let steps = ((p - 2.0).abs() / 0.5).ceil() as usize;
            for s in 1..steps {
                ladder.push(2.0 + (p - 2.0) * s as f64 / steps as f64);
            }
        }
        for q in ladder {
            let (it, _) = newton(c, &mut x, q, 1e-4, max_iter);
            iterations += it;
        }
        let (it, ok) = newton(c, &mut x, p, tol, max_iter);
        iterations += it;
        converged = ok;
    }
    let x0 = x[0];
    x.iter_mut().for_each(|v| *v -= x0);

    let t = increments(c, &x);
    let rho0: Vec<f64> = c.edges.iter().zip(&t).map(|(e, ti)| ti.abs() / e.ell).collect();
    let value: f64 = c.edges.iter().zip(&rho0).map(|(e, r)| e.mu * r.powf(p)).sum();
    let kkt_residual = stationarity(c, &x, p);
    if quadratic {
        converged = kkt_residual <= tol.max(1e-10) * (1.0 + value);
    }
    let report = CapacityReport {
        p,
        value,
        minimizer: CircleMap::from_reals(&x),
        potentials: x,
        increments: t,
        rho0: Density { values: rho0 },
        kkt_residual,
        iterations,
        converged,
    };
    if converged {
        Ok(report)
    } else {
        Err(CapacityError::NotConverged(Box::new(report)))
    }
}

/// Checks `cap <= sum_e mu_e rho0_e^(p-1) rho_e` for a density `rho` that is an
/// upper gradient of the degree-1 map with lifted increments `witness`.
pub fn variational_check(
    c: &ToroidalComplex,
    report: &CapacityReport,
    rho: &Density,
    witness: &[f64],
    tol: f64,
) -> Result<VariationalCheck, CapacityError> {
    let m = c.num_edges();
    for len in [rho.values.len(), witness.len()] {
        if len != m {
            return Err(CapacityError::SizeMismatch { expected: m, got: len });
        }
    }
    for (i, e) in c.edges.iter().enumerate() {
        let bound = rho.values[i] * e.ell;
        if witness[i].abs() > bound * (1.0 + 1e-12) + 1e-15 {
            return Err(CapacityError::NotUpperGradient { edge: i });
        }
    }
    let deg = degree_of_increments(c, witness)?;
    if (deg - 1.0).abs() > 1e-9 {
        return Err(CapacityError::DegreeNotOne(deg));
    }
    let p = report.p;
    let rhs: f64 = c
        .edges
        .iter()
        .enumerate()
        .map(|(i, e)| e.mu * report.rho0.values[i].powf(p - 1.0) * rho.values[i])
        .sum();
    let lhs = report.value;
    Ok(VariationalCheck { lhs, rhs, ok: lhs <= rhs + tol })
}
