//! Discrete solid-torus complexes.
//!
//! A [`ToroidalComplex`] is a weighted graph with faces. Every edge carries a
//! length `ell`, a measure `mu` and an integer winding label `w` (a 1-cocycle
//! whose pairing with a closed walk is the walk's winding number). The
//! codimension-1 weight `h = mu / ell` is always derived, never stored.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default Ahlfors exponent of a solid torus in R^3.
pub const DEFAULT_Q: f64 = 3.0;

#[derive(Debug, Error)]
pub enum ComplexError {
    #[error("invalid builder parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed complex document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("complex failed validation: {0}")]
    Invalid(ValidationReport),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub mu: f64,
}

/// An edge oriented from `u` to `v`. `w` is the winding label of that orientation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub ell: f64,
    pub mu: f64,
    pub w: i32,
}

impl Edge {
    #[inline]
    pub fn h(&self) -> f64 {
        self.mu / self.ell
    }

    /// The endpoint opposite to `x` (which must be an endpoint).
    #[inline]
    pub fn other(&self, x: usize) -> usize {
        if x == self.u {
            self.v
        } else {
            self.u
        }
    }
}

/// One step of an oriented walk: traverse `edge` from `u` to `v` when
/// `forward`, otherwise from `v` to `u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Step {
    pub edge: usize,
    pub forward: bool,
}

impl Step {
    pub fn sign(&self) -> i32 {
        if self.forward {
            1
        } else {
            -1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Face {
    pub cycle: Vec<Step>,
}

/// Nonnegative edge density. Used both for path densities and surface densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Density {
    pub values: Vec<f64>,
}

impl Density {
    pub fn new(values: Vec<f64>) -> Result<Self, ComplexError> {
        if let Some(i) = values.iter().position(|x| !x.is_finite() || *x < 0.0) {
            return Err(ComplexError::InvalidParameter(format!(
                "density value {} at edge {} is not finite and nonnegative",
                values[i], i
            )));
        }
        Ok(Self { values })
    }

    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n] }
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self { values: vec![value; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `sum_e mu_e * rho_e^p`.
    pub fn energy(&self, c: &ToroidalComplex, p: f64) -> f64 {
        c.edges
            .iter()
            .zip(&self.values)
            .map(|(e, r)| e.mu * r.powf(p))
            .sum()
    }
}

/// Conformal factor applied by [`build_solid_torus`].
#[derive(Debug, Clone, PartialEq)]
pub enum Warp {
    Flat,
    /// `1 + beta * sin(theta)`.
    Sin { beta: f64 },
    /// `1 + beta * r / R`.
    Radial { beta: f64 },
    /// Periodic piecewise-linear interpolation of samples taken at
    /// `theta = 2 pi i / n`.
    Tabulated(Vec<f64>),
}

impl Warp {
    pub fn eval(&self, theta: f64, r: f64, _phi: f64, big_r: f64) -> f64 {
        match self {
            Warp::Flat => 1.0,
            Warp::Sin { beta } => 1.0 + beta * theta.sin(),
            Warp::Radial { beta } => 1.0 + beta * r / big_r,
            Warp::Tabulated(samples) => {
                let n = samples.len();
                let x = theta.rem_euclid(2.0 * PI) / (2.0 * PI) * n as f64;
                let i = (x.floor() as usize).min(n - 1);
                let frac = x - i as f64;
                samples[i] * (1.0 - frac) + samples[(i + 1) % n] * frac
            }
        }
    }

    /// Parses `flat`, `sin:0.25`, `radial:0.5`.
    pub fn parse(s: &str) -> Result<Self, ComplexError> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let beta = |a: Option<&str>| -> Result<f64, ComplexError> {
            a.unwrap_or("0.5")
                .parse::<f64>()
                .map_err(|_| ComplexError::InvalidParameter(format!("bad warp parameter in {s:?}")))
        };
        match name {
            "flat" => Ok(Warp::Flat),
            "sin" => Ok(Warp::Sin { beta: beta(arg)? }),
            "radial" => Ok(Warp::Radial { beta: beta(arg)? }),
            _ => Err(ComplexError::InvalidParameter(format!("unknown warp preset {s:?}"))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Warp::Flat => "flat".into(),
            Warp::Sin { beta } => format!("sin:{beta}"),
            Warp::Radial { beta } => format!("radial:{beta}"),
            Warp::Tabulated(s) => format!("table:{}", s.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToroidalComplex {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    pub faces: Vec<Face>,
    pub q: f64,
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
}

/// A single violated invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonFinite { what: String },
    NonPositiveLength { edge: usize },
    NonPositiveEdgeMeasure { edge: usize },
    NegativeVertexMeasure { vertex: usize },
    BadEndpoint { edge: usize },
    SelfLoop { edge: usize },
    WindingLabel { edge: usize, w: i32 },
    BadExponent { q: f64 },
    FaceTooShort { face: usize },
    FaceNotClosed { face: usize },
    FaceBadEdge { face: usize },
    FaceCocycle { face: usize, sum: i64 },
    NoWindingOneCycle,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonFinite { what } => write!(f, "non-finite value in {what}"),
            Violation::NonPositiveLength { edge } => write!(f, "edge {edge}: length must be positive"),
            Violation::NonPositiveEdgeMeasure { edge } => {
                write!(f, "edge {edge}: measure must be positive")
            }
            Violation::NegativeVertexMeasure { vertex } => {
                write!(f, "vertex {vertex}: measure must be nonnegative")
            }
            Violation::BadEndpoint { edge } => write!(f, "edge {edge}: endpoint out of range"),
            Violation::SelfLoop { edge } => write!(f, "edge {edge}: self loop"),
            Violation::WindingLabel { edge, w } => {
                write!(f, "edge {edge}: winding label {w} not in {{-1, 0, 1}}")
            }
            Violation::BadExponent { q } => write!(f, "dimension exponent {q} must be positive"),
            Violation::FaceTooShort { face } => write!(f, "face {face}: needs 3 or 4 edges"),
            Violation::FaceNotClosed { face } => write!(f, "face {face}: edge cycle is not closed"),
            Violation::FaceBadEdge { face } => write!(f, "face {face}: unknown edge"),
            Violation::FaceCocycle { face, sum } => {
                write!(f, "face {face}: winding labels sum to {sum}, not 0")
            }
            Violation::NoWindingOneCycle => write!(f, "no winding-1 cycle"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

impl ToroidalComplex {
    /// Assembles a complex from raw parts and rejects it unless it validates.
    pub fn from_parts(
        vertices: Vec<Vertex>,
        edges: Vec<Edge>,
        faces: Vec<Face>,
        q: f64,
        meta: BTreeMap<String, serde_json::Value>,
    ) -> Result<Self, ComplexError> {
        let c = Self { vertices, edges, faces, q, meta };
        let report = validate(&c);
        if report.is_ok() {
            Ok(c)
        } else {
            Err(ComplexError::Invalid(report))
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn h(&self, e: usize) -> f64 {
        self.edges[e].h()
    }

    /// Incident edges per vertex, in increasing edge order.
    pub fn incidence(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.vertices.len()];
        for (i, e) in self.edges.iter().enumerate() {
            inc[e.u].push(i);
            inc[e.v].push(i);
        }
        inc
    }

    /// Vertices on the upper side of the cocycle's support: the head of each
    /// `w = +1` edge and the tail of each `w = -1` edge. Sorted, deduplicated.
    pub fn meridian(&self) -> Vec<usize> {
        let mut m: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|e| match e.w {
                1 => Some(e.v),
                -1 => Some(e.u),
                _ => None,
            })
            .collect();
        m.sort_unstable();
        m.dedup();
        m
    }

    /// `sum_v mu_v`, the volume of the discretized space.
    pub fn total_measure(&self) -> f64 {
        self.vertices.iter().map(|v| v.mu).sum()
    }

    pub fn total_edge_measure(&self) -> f64 {
        self.edges.iter().map(|e| e.mu).sum()
    }

    /// Whether the underlying graph is connected.
    pub fn is_connected(&self) -> bool {
        let n = self.vertices.len();
        if n == 0 {
            return false;
        }
        let inc = self.incidence();
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(x) = stack.pop() {
            for &e in &inc[x] {
                let y = self.edges[e].other(x);
                if !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Cycle graph on `m` vertices: the degenerate solid torus with a point cross-section.
pub fn build_ring(m: usize, length: f64, area: f64) -> Result<ToroidalComplex, ComplexError> {
    if m < 3 {
        return Err(ComplexError::InvalidParameter(format!("ring needs m >= 3, got {m}")));
    }
    if !(length > 0.0 && length.is_finite()) {
        return Err(ComplexError::InvalidParameter(format!("ring length {length} must be positive")));
    }
    if !(area > 0.0 && area.is_finite()) {
        return Err(ComplexError::InvalidParameter(format!("ring cross-section {area} must be positive")));
    }
    let ell = length / m as f64;
    let mu = length * area / m as f64;
    let edges = (0..m)
        .map(|i| Edge { u: i, v: (i + 1) % m, ell, mu, w: i32::from(i + 1 == m) })
        .collect();
    let mut meta = BTreeMap::new();
    meta.insert("builder".into(), "ring".into());
    meta.insert("m".into(), m.into());
    meta.insert("L".into(), length.into());
    meta.insert("A".into(), area.into());
    ToroidalComplex::from_parts(vec![Vertex { mu: 0.0 }; m], edges, Vec::new(), DEFAULT_Q, meta)
}

/// Parameters of the structured solid-torus mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusParams {
    pub k_theta: usize,
    pub n_r: usize,
    pub n_phi: usize,
    pub length: f64,
    pub radius: f64,
    pub warp: Warp,
    pub q: f64,
}

impl TorusParams {
    pub fn flat(k_theta: usize, n_r: usize, n_phi: usize) -> Self {
        Self { k_theta, n_r, n_phi, length: 1.0, radius: 1.0, warp: Warp::Flat, q: DEFAULT_Q }
    }
}

/// Structured mesh of `S^1_L x D_R`.
///
/// Each of the `k_theta` slices is a polar grid of the disk (one center vertex
/// plus `n_r` rings of `n_phi` vertices). Edge measures are finite-volume dual
/// volumes: within each edge direction (core, radial, angular) the edge
/// measures tile the whole volume. Vertex measures are the dual cells, so the
/// total measure is the volume `sum omega^q dV`.
pub fn build_solid_torus(params: &TorusParams) -> Result<ToroidalComplex, ComplexError> {
    let TorusParams { k_theta, n_r, n_phi, length, radius, ref warp, q } = *params;
    if k_theta < 3 || n_r < 1 || n_phi < 3 {
        return Err(ComplexError::InvalidParameter(format!(
            "torus needs k_theta >= 3, n_r >= 1, n_phi >= 3 (got {k_theta}, {n_r}, {n_phi})"
        )));
    }
    if !(length > 0.0 && radius > 0.0 && q > 0.0) || !length.is_finite() || !radius.is_finite() {
        return Err(ComplexError::InvalidParameter("L, R and q must be positive".into()));
    }
    if let Warp::Tabulated(s) = warp {
        if s.is_empty() {
            return Err(ComplexError::InvalidParameter("empty warp table".into()));
        }
    }

    let per_slice = 1 + n_r * n_phi;
    let dr = radius / n_r as f64;
    let dphi = 2.0 * PI / n_phi as f64;
    let dtheta = 2.0 * PI / k_theta as f64;
    let slab = length / k_theta as f64;
    let ring_r = |i: usize| i as f64 * dr;
    let disk = |i: usize, l: usize| -> usize {
        if i == 0 {
            0
        } else {
            1 + (i - 1) * n_phi + l % n_phi
        }
    };
    let vid = |j: usize, d: usize| (j % k_theta) * per_slice + d;

    // Disk dual areas (exact annular sectors, summing to pi R^2).
    let mut area = vec![0.0; per_slice];
    area[0] = PI * (dr / 2.0).powi(2);
    for i in 1..=n_r {
        let outer = if i == n_r { radius } else { ring_r(i) + dr / 2.0 };
        let a = PI * (outer.powi(2) - (ring_r(i) - dr / 2.0).powi(2)) / n_phi as f64;
        for l in 0..n_phi {
            area[disk(i, l)] = a;
        }
    }
    let disk_pos = |d: usize| -> (f64, f64) {
        if d == 0 {
            (0.0, 0.0)
        } else {
            let i = (d - 1) / n_phi + 1;
            let l = (d - 1) % n_phi;
            (ring_r(i), l as f64 * dphi)
        }
    };

    let mut omega_err = None;
    let mut omega = |theta: f64, r: f64, phi: f64| -> f64 {
        let v = warp.eval(theta, r, phi, radius);
        if !(v > 0.0 && v.is_finite()) && omega_err.is_none() {
            omega_err = Some(v);
        }
        v
    };

    let mut vertices = Vec::with_capacity(k_theta * per_slice);
    for j in 0..k_theta {
        for d in 0..per_slice {
            let (r, phi) = disk_pos(d);
            let om = omega(j as f64 * dtheta, r, phi);
            vertices.push(Vertex { mu: om.powf(q) * area[d] * slab });
        }
    }

    // In-slice edge template: (a, b, flat length, flat cross-section, r_mid, phi_mid).
    let mut template: Vec<(usize, usize, f64, f64, f64, f64)> = Vec::new();
    let mut spoke = vec![0usize; n_phi];
    let mut radial = vec![vec![0usize; n_phi]; n_r];
    let mut angular = vec![vec![0usize; n_phi]; n_r + 1];
    for l in 0..n_phi {
        spoke[l] = template.len();
        template.push((0, disk(1, l), dr, (dr / 2.0) * dphi * slab, dr / 2.0, l as f64 * dphi));
    }
    for i in 1..n_r {
        for l in 0..n_phi {
            let rm = ring_r(i) + dr / 2.0;
            radial[i][l] = template.len();
            template.push((disk(i, l), disk(i + 1, l), dr, rm * dphi * slab, rm, l as f64 * dphi));
        }
    }
    for i in 1..=n_r {
        let extent = if i == n_r { dr / 2.0 } else { dr };
        for l in 0..n_phi {
            angular[i][l] = template.len();
            let arc = ring_r(i) * dphi;
            template.push((disk(i, l), disk(i, l + 1), arc, extent * slab, ring_r(i), (l as f64 + 0.5) * dphi));
        }
    }

    let mut edges = Vec::new();
    // In-slice edges of slice j occupy [j * t, (j + 1) * t).
    let t = template.len();
    for j in 0..k_theta {
        let theta = j as f64 * dtheta;
        for &(a, b, len, cross, rm, pm) in &template {
            let om = omega(theta, rm, pm);
            edges.push(Edge { u: vid(j, a), v: vid(j, b), ell: om * len, mu: om.powf(q) * len * cross, w: 0 });
        }
    }
    // Core edges: slice j -> j + 1, crossing the theta = 0 meridian when j = k - 1.
    let core_base = edges.len();
    let core = |j: usize, d: usize| core_base + j * per_slice + d;
    for j in 0..k_theta {
        let theta = (j as f64 + 0.5) * dtheta;
        for d in 0..per_slice {
            let (r, phi) = disk_pos(d);
            let om = omega(theta, r, phi);
            edges.push(Edge {
                u: vid(j, d),
                v: vid(j + 1, d),
                ell: om * slab,
                mu: om.powf(q) * slab * area[d],
                w: i32::from(j + 1 == k_theta),
            });
        }
    }
    if let Some(v) = omega_err {
        return Err(ComplexError::InvalidParameter(format!("conformal factor {v} is not positive")));
    }

    let fwd = |edge| Step { edge, forward: true };
    let bwd = |edge| Step { edge, forward: false };
    let mut faces = Vec::new();
    for j in 0..k_theta {
        let s = |e: usize| j * t + e;
        for l in 0..n_phi {
            let l1 = (l + 1) % n_phi;
            faces.push(Face { cycle: vec![fwd(s(spoke[l])), fwd(s(angular[1][l])), bwd(s(spoke[l1]))] });
            for i in 1..n_r {
                faces.push(Face {
                    cycle: vec![
                        fwd(s(radial[i][l])),
                        fwd(s(angular[i + 1][l])),
                        bwd(s(radial[i][l1])),
                        bwd(s(angular[i][l])),
                    ],
                });
            }
        }
        let jn = (j + 1) % k_theta;
        for (ti, &(a, b, ..)) in template.iter().enumerate() {
            faces.push(Face {
                cycle: vec![fwd(core(j, a)), fwd(jn * t + ti), bwd(core(j, b)), bwd(j * t + ti)],
            });
        }
    }

    let mut meta = BTreeMap::new();
    meta.insert("builder".into(), "torus".into());
    meta.insert("k_theta".into(), k_theta.into());
    meta.insert("n_r".into(), n_r.into());
    meta.insert("n_phi".into(), n_phi.into());
    meta.insert("L".into(), length.into());
    meta.insert("R".into(), radius.into());
    meta.insert("warp".into(), warp.label().into());
    ToroidalComplex::from_parts(vertices, edges, faces, q, meta)
}

/// Reports every violated invariant; an empty report means the complex is usable.
pub fn validate(c: &ToroidalComplex) -> ValidationReport {
    let mut out = Vec::new();
    let n = c.vertices.len();
    if !(c.q > 0.0 && c.q.is_finite()) {
        out.push(Violation::BadExponent { q: c.q });
    }
    for (i, v) in c.vertices.iter().enumerate() {
        if !v.mu.is_finite() {
            out.push(Violation::NonFinite { what: format!("vertex {i}") });
        } else if v.mu < 0.0 {
            out.push(Violation::NegativeVertexMeasure { vertex: i });
        }
    }
    let mut endpoints_ok = true;
    for (i, e) in c.edges.iter().enumerate() {
        if !e.ell.is_finite() || !e.mu.is_finite() {
            out.push(Violation::NonFinite { what: format!("edge {i}") });
        } else {
            if e.ell <= 0.0 {
                out.push(Violation::NonPositiveLength { edge: i });
            }
            if e.mu <= 0.0 {
                out.push(Violation::NonPositiveEdgeMeasure { edge: i });
            }
        }
        if e.u >= n || e.v >= n {
            out.push(Violation::BadEndpoint { edge: i });
            endpoints_ok = false;
        } else if e.u == e.v {
            out.push(Violation::SelfLoop { edge: i });
        }
        if !(-1..=1).contains(&e.w) {
            out.push(Violation::WindingLabel { edge: i, w: e.w });
        }
    }
    for (fi, face) in c.faces.iter().enumerate() {
        if !(3..=4).contains(&face.cycle.len()) {
            out.push(Violation::FaceTooShort { face: fi });
        }
        if face.cycle.iter().any(|s| s.edge >= c.edges.len()) {
            out.push(Violation::FaceBadEdge { face: fi });
            continue;
        }
        if !endpoints_ok {
            continue;
        }
        if !is_closed_walk(c, &face.cycle) {
            out.push(Violation::FaceNotClosed { face: fi });
        }
        let sum: i64 = face.cycle.iter().map(|s| i64::from(s.sign() * c.edges[s.edge].w)).sum();
        if sum != 0 {
            out.push(Violation::FaceCocycle { face: fi, sum });
        }
    }
    if endpoints_ok && !has_winding_one_cycle(c) {
        out.push(Violation::NoWindingOneCycle);
    }
    ValidationReport { violations: out }
}

/// Whether consecutive steps chain head-to-tail and the walk returns to its start.
pub fn is_closed_walk(c: &ToroidalComplex, walk: &[Step]) -> bool {
    let ends = |s: &Step| {
        let e = &c.edges[s.edge];
        if s.forward {
            (e.u, e.v)
        } else {
            (e.v, e.u)
        }
    };
    let Some(first) = walk.first() else {
        return true;
    };
    let start = ends(first).0;
    let mut at = start;
    for s in walk {
        let (a, b) = ends(s);
        if a != at {
            return false;
        }
        at = b;
    }
    at == start
}

/// Constructive check: some meridian vertex reaches its own translate in the
/// unrolled cover window used by the winding-cycle search.
fn has_winding_one_cycle(c: &ToroidalComplex) -> bool {
    let unit = vec![1.0; c.edges.len()];
    c.meridian()
        .into_iter()
        .any(|v| crate::graph::shortest_lift_path(c, &unit, v).is_some())
}

/// `ell -> s ell`, `mu -> s^q mu` on edges and vertices.
pub fn scale_metric(c: &ToroidalComplex, s: f64) -> Result<ToroidalComplex, ComplexError> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(ComplexError::InvalidParameter(format!("scale factor {s} must be positive")));
    }
    let sq = s.powf(c.q);
    let mut out = c.clone();
    let prev = out.meta.get("scale").and_then(|v| v.as_f64()).unwrap_or(1.0);
    if (prev * s - 1.0).abs() > 1e-15 {
        out.meta.insert("scale".into(), (prev * s).into());
    } else {
        out.meta.remove("scale");
    }
    for v in &mut out.vertices {
        v.mu *= sq;
    }
    for e in &mut out.edges {
        e.ell *= s;
        e.mu *= sq;
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct VertexRecord {
    id: usize,
    mu: f64,
}

#[derive(Serialize, Deserialize)]
struct EdgeRecord {
    id: usize,
    u: usize,
    v: usize,
    ell: f64,
    mu: f64,
    w: i32,
}

#[derive(Serialize, Deserialize)]
struct FaceStepRecord {
    edge: usize,
    orient: i32,
}

#[derive(Serialize, Deserialize)]
struct FaceRecord {
    id: usize,
    cycle: Vec<FaceStepRecord>,
}

#[derive(Serialize, Deserialize)]
struct ComplexDocument {
    vertices: Vec<VertexRecord>,
    edges: Vec<EdgeRecord>,
    faces: Vec<FaceRecord>,
    q: f64,
    #[serde(default)]
    meta: BTreeMap<String, serde_json::Value>,
}

fn bad(msg: String) -> ComplexError {
    ComplexError::Parse(serde::de::Error::custom(msg))
}

pub fn save_complex<W: Write>(c: &ToroidalComplex, sink: W) -> Result<(), ComplexError> {
    let doc = ComplexDocument {
        vertices: c.vertices.iter().enumerate().map(|(id, v)| VertexRecord { id, mu: v.mu }).collect(),
        edges: c
            .edges
            .iter()
            .enumerate()
            .map(|(id, e)| EdgeRecord { id, u: e.u, v: e.v, ell: e.ell, mu: e.mu, w: e.w })
            .collect(),
        faces: c
            .faces
            .iter()
            .enumerate()
            .map(|(id, f)| FaceRecord {
                id,
                cycle: f.cycle.iter().map(|s| FaceStepRecord { edge: s.edge, orient: s.sign() }).collect(),
            })
            .collect(),
        q: c.q,
        meta: c.meta.clone(),
    };
    let mut sink = sink;
    serde_json::to_writer_pretty(&mut sink, &doc)?;
    sink.write_all(b"\n")?;
    Ok(())
}

/// Parses a complex document and validates it.
pub fn load_complex<R: Read>(source: R) -> Result<ToroidalComplex, ComplexError> {
    let doc: ComplexDocument = serde_json::from_reader(source)?;
    let mut vertices = Vec::with_capacity(doc.vertices.len());
    for (i, v) in doc.vertices.iter().enumerate() {
        if v.id != i {
            return Err(bad(format!("vertex ids must be 0..n in order (found {} at {i})", v.id)));
        }
        vertices.push(Vertex { mu: v.mu });
    }
    let mut edges = Vec::with_capacity(doc.edges.len());
    for (i, e) in doc.edges.iter().enumerate() {
        if e.id != i {
            return Err(bad(format!("edge ids must be 0..n in order (found {} at {i})", e.id)));
        }
        edges.push(Edge { u: e.u, v: e.v, ell: e.ell, mu: e.mu, w: e.w });
    }
    let mut faces = Vec::with_capacity(doc.faces.len());
    for f in &doc.faces {
        let mut cycle = Vec::with_capacity(f.cycle.len());
        for s in &f.cycle {
            let forward = match s.orient {
                1 => true,
                -1 => false,
                o => return Err(bad(format!("face {}: orientation {o} must be +1 or -1", f.id))),
            };
            cycle.push(Step { edge: s.edge, forward });
        }
        faces.push(Face { cycle });
    }
    ToroidalComplex::from_parts(vertices, edges, faces, doc.q, doc.meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn ring_arithmetic() {
        let c = build_ring(3, 1.0, 1.0).unwrap();
        assert_eq!(c.num_edges(), 3);
        for e in &c.edges {
            assert!(close(e.ell, 1.0 / 3.0, 1e-15));
            assert!(close(e.mu, 1.0 / 3.0, 1e-15));
            assert!(close(e.h(), 1.0, 1e-15));
        }
        let c = build_ring(4, 2.0, 1.0).unwrap();
        for e in &c.edges {
            assert_eq!((e.ell, e.mu, e.h()), (0.5, 0.5, 1.0));
        }
        assert!(build_ring(3, 1.0, 0.0).is_err());
        assert!(build_ring(2, 1.0, 1.0).is_err());
        assert!(build_ring(3, -1.0, 1.0).is_err());
    }

    #[test]
    fn validation_flags_broken_rings() {
        let c = build_ring(3, 1.0, 1.0).unwrap();
        assert!(validate(&c).is_ok());

        let mut flipped = c.clone();
        flipped.edges[2].w = 0;
        assert!(validate(&flipped).violations.contains(&Violation::NoWindingOneCycle));

        let mut zero = c.clone();
        zero.edges[1].ell = 0.0;
        assert!(validate(&zero).violations.contains(&Violation::NonPositiveLength { edge: 1 }));
    }

    #[test]
    fn smallest_torus_validates() {
        let c = build_solid_torus(&TorusParams::flat(3, 1, 3)).unwrap();
        assert!(validate(&c).is_ok());
        assert_eq!(c.num_vertices(), 12);
        assert_eq!(c.num_edges(), 30);
        assert_eq!(c.meridian(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn flat_torus_measures_tile_the_volume() {
        let c = build_solid_torus(&TorusParams::flat(16, 3, 8)).unwrap();
        let vol = PI;
        assert!(close(c.total_measure(), vol, 1e-12));
        // Each of the three edge directions carries the full volume.
        assert!(close(c.total_edge_measure(), 3.0 * vol, 1e-12));
    }

    #[test]
    fn nonpositive_warp_is_rejected() {
        let mut p = TorusParams::flat(4, 1, 4);
        p.warp = Warp::Sin { beta: 1.5 };
        assert!(build_solid_torus(&p).is_err());
    }

    #[test]
    fn scaling() {
        let c = build_ring(3, 1.0, 1.0).unwrap();
        assert_eq!(scale_metric(&c, 1.0).unwrap(), c);
        assert_eq!(scale_metric(&scale_metric(&c, 2.0).unwrap(), 0.5).unwrap().meta, c.meta);
        let s = scale_metric(&c, 2.0).unwrap();
        assert!(close(s.edges[0].ell, 2.0 / 3.0, 1e-15));
        assert!(close(s.edges[0].mu, 8.0 / 3.0, 1e-15));
        assert!(close(s.h(0), 4.0, 1e-15));
        let back = scale_metric(&s, 0.5).unwrap();
        assert_eq!(s.meta["scale"], 2.0);
        for (a, b) in back.edges.iter().zip(&c.edges) {
            assert!(close(a.ell, b.ell, 1e-12) && close(a.mu, b.mu, 1e-12));
        }
        assert!(scale_metric(&c, 0.0).is_err());
    }

    #[test]
    fn persistence() {
        let c = build_solid_torus(&TorusParams::flat(3, 1, 3)).unwrap();
        let mut buf = Vec::new();
        save_complex(&c, &mut buf).unwrap();
        assert_eq!(load_complex(buf.as_slice()).unwrap(), c);

        let truncated = &buf[..buf.len() / 2];
        assert!(matches!(load_complex(truncated), Err(ComplexError::Parse(_))));

        let ring = build_ring(3, 1.0, 1.0).unwrap();
        let mut buf = Vec::new();
        save_complex(&ring, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replacen("\"mu\": 0.3333333333333333", "\"mu\": -0.3333333333333333", 1);
        assert!(matches!(load_complex(text.as_bytes()), Err(ComplexError::Invalid(_))));
    }
}
