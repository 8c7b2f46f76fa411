//! Duality experiments, empirical coarea and isoperimetric constants, and sweeps.

use std::io::Write;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::capacity::{solve_capacity, variational_check, CapacityError, CapacityOptions, CapacityReport};
use crate::complex::{
    build_ring, build_solid_torus, load_complex, scale_metric, ComplexError, Density, TorusParams, ToroidalComplex,
    Warp, DEFAULT_Q,
};
use crate::covering::{edge_increments, lift, CircleMap, CoveringError};
use crate::graph::base_shortest_paths;
use crate::modulus::{clamp_p, conjugate, ModulusError, SolveOptions, SolveReport};
use crate::paths::path_modulus;
use crate::surfaces::{
    level_cut_lifted, step_map, surface_modulus, surface_to_degree_one_map, SeparatingCut, SurfaceError, SurfaceMap,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error(transparent)]
    Covering(#[from] CoveringError),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error(transparent)]
    Capacity(#[from] CapacityError),
    #[error(transparent)]
    Modulus(#[from] ModulusError),
    #[error("coarea estimate is unbounded: density has zero energy against the map but positive cut weight")]
    Unbounded,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
}

fn default_length() -> f64 {
    1.0
}
fn default_warp() -> String {
    "flat".into()
}
fn default_q() -> f64 {
    DEFAULT_Q
}

/// How to obtain a complex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "builder", rename_all = "lowercase")]
pub enum GeometrySpec {
    Ring {
        m: usize,
        #[serde(rename = "L", default = "default_length")]
        length: f64,
        #[serde(rename = "A", default = "default_length")]
        area: f64,
    },
    Torus {
        k_theta: usize,
        n_r: usize,
        n_phi: usize,
        #[serde(rename = "L", default = "default_length")]
        length: f64,
        #[serde(rename = "R", default = "default_length")]
        radius: f64,
        #[serde(default = "default_warp")]
        warp: String,
        #[serde(default = "default_q")]
        q: f64,
    },
    File {
        path: PathBuf,
    },
}

impl GeometrySpec {
    pub fn build(&self) -> Result<ToroidalComplex, HarnessError> {
        Ok(match self {
            GeometrySpec::Ring { m, length, area } => build_ring(*m, *length, *area)?,
            GeometrySpec::Torus { k_theta, n_r, n_phi, length, radius, warp, q } => build_solid_torus(&TorusParams {
                k_theta: *k_theta,
                n_r: *n_r,
                n_phi: *n_phi,
                length: *length,
                radius: *radius,
                warp: Warp::parse(warp)?,
                q: *q,
            })?,
            GeometrySpec::File { path } => load_complex(std::fs::File::open(path)?)?,
        })
    }
}

/// Builder parameters recovered from a complex's `meta` block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub geometry_id: String,
    pub builder: String,
    pub m: Option<usize>,
    pub k_theta: Option<usize>,
    pub n_r: Option<usize>,
    pub n_phi: Option<usize>,
    pub length: Option<f64>,
    pub radius: Option<f64>,
    pub area: Option<f64>,
    pub warp: String,
    pub q: f64,
    pub scale: f64,
}

pub fn describe(c: &ToroidalComplex) -> Descriptor {
    let get_u = |k: &str| c.meta.get(k).and_then(|v| v.as_u64()).map(|v| v as usize);
    let get_f = |k: &str| c.meta.get(k).and_then(|v| v.as_f64());
    let builder = c.meta.get("builder").and_then(|v| v.as_str()).unwrap_or("file").to_string();
    let warp = c.meta.get("warp").and_then(|v| v.as_str()).unwrap_or("flat").to_string();
    let scale = get_f("scale").unwrap_or(1.0);
    let mut d = Descriptor {
        geometry_id: String::new(),
        builder,
        m: get_u("m"),
        k_theta: get_u("k_theta"),
        n_r: get_u("n_r"),
        n_phi: get_u("n_phi"),
        length: get_f("L"),
        radius: get_f("R"),
        area: get_f("A"),
        warp,
        q: c.q,
        scale,
    };
    let mut id = match d.builder.as_str() {
        "ring" => format!("ring-m{}-L{}-A{}", d.m.unwrap_or(0), d.length.unwrap_or(0.0), d.area.unwrap_or(0.0)),
        "torus" => format!(
            "torus-{}x{}x{}-L{}-R{}-{}",
            d.k_theta.unwrap_or(0),
            d.n_r.unwrap_or(0),
            d.n_phi.unwrap_or(0),
            d.length.unwrap_or(0.0),
            d.radius.unwrap_or(0.0),
            d.warp
        ),
        _ => format!("file-v{}-e{}", c.num_vertices(), c.num_edges()),
    };
    if scale != 1.0 {
        id.push_str(&format!("-s{scale}"));
    }
    d.geometry_id = id;
    d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityOptions {
    pub modulus: SolveOptions,
    pub capacity: CapacityOptions,
    pub emit_fields: bool,
}

impl Default for DualityOptions {
    fn default() -> Self {
        Self { modulus: SolveOptions::default(), capacity: CapacityOptions::default(), emit_fields: false }
    }
}

/// Solution fields attached to a row on request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowFields {
    pub minimizer: Option<CircleMap>,
    pub rho0: Option<Density>,
    pub path_density: Option<Density>,
    pub surface_density: Option<Density>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityRow {
    pub descriptor: Descriptor,
    pub p: f64,
    pub p_star: f64,
    pub cap: f64,
    pub mod_paths: f64,
    pub mod_surf: f64,
    pub product: f64,
    pub gap_ratio: f64,
    pub cap_iters: usize,
    pub path_iters: usize,
    pub surf_iters: usize,
    pub cap_converged: bool,
    pub paths_converged: bool,
    pub surf_converged: bool,
    /// `mod_paths <= cap` within tolerance.
    pub paths_below_cap: bool,
    /// Per-cut bound `cap <= sum mu rho_psi rho0^(p-1)` for the minimizer's level cut.
    pub cut_bound_lhs: f64,
    pub cut_bound_rhs: f64,
    pub cut_bound_ok: bool,
    pub errors: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fields: Option<RowFields>,
}

impl DualityRow {
    pub fn all_converged(&self) -> bool {
        self.cap_converged && self.paths_converged && self.surf_converged
    }
}

pub fn duality_product(cap: f64, surf: f64, p: f64) -> f64 {
    cap.powf(1.0 / p) * surf.powf(1.0 / conjugate(p))
}

fn modulus_outcome(r: Result<SolveReport, ModulusError>, errors: &mut Vec<String>, what: &str) -> Option<SolveReport> {
    match r {
        Ok(rep) => Some(rep),
        Err(ModulusError::NotConverged(rep)) => {
            errors.push(format!("{what}: not converged"));
            Some(*rep)
        }
        Err(e) => {
            errors.push(format!("{what}: {e}"));
            None
        }
    }
}

/// Degree-1 map concentrated near a separating cut. Tries neighbourhood
/// radii from three edge lengths down to half of one, then the step map.
pub fn thicken_cut(c: &ToroidalComplex, cut: &SeparatingCut) -> Result<SurfaceMap, SurfaceError> {
    let lmax = cut.edges.iter().map(|&e| c.edges[e].ell).fold(0.0, f64::max);
    let mut last = SurfaceError::NotSeparating;
    for factor in [3.0, 2.0, 1.5, 1.01, 0.5] {
        match surface_to_degree_one_map(c, cut, factor * lmax) {
            Ok(sm) => return Ok(sm),
            Err(e) => last = e,
        }
    }
    step_map(c, cut).map_err(|_| last)
}

/// Per-cut upper bound: the level cut of the minimizer at `t`, thickened into a
/// degree-1 map, tested in the variational inequality.
pub fn cut_bound(
    c: &ToroidalComplex,
    cap: &CapacityReport,
    t: f64,
    tol: f64,
) -> Result<(SurfaceMap, crate::capacity::VariationalCheck), HarnessError> {
    let cut = level_cut_lifted(c, &cap.potentials, &cap.increments, t)?;
    let sm = thicken_cut(c, &cut)?;
    let chk = variational_check(c, cap, &sm.rho, &sm.increments, tol)?;
    Ok((sm, chk))
}

/// Capacity tolerance used before testing the per-cut bound.
pub const CUT_BOUND_CAP_TOL: f64 = 1e-10;

pub fn run_duality(c: &ToroidalComplex, p: f64, opts: &DualityOptions) -> DualityRow {
    let p = clamp_p(p);
    let p_star = conjugate(p);
    let mut errors = Vec::new();
    let tol = opts.modulus.tol;

    let cap = match solve_capacity(c, p, &opts.capacity) {
        Ok(r) => Some(r),
        Err(CapacityError::NotConverged(r)) => {
            errors.push("cap: not converged".into());
            Some(*r)
        }
        Err(e) => {
            errors.push(format!("cap: {e}"));
            None
        }
    };
    let paths = modulus_outcome(path_modulus(c, p, &opts.modulus), &mut errors, "paths");
    let surf = modulus_outcome(surface_modulus(c, p_star, &opts.modulus), &mut errors, "surf");

    let cap_value = cap.as_ref().map_or(f64::NAN, |r| r.value);
    let path_value = paths.as_ref().map_or(f64::NAN, |r| r.value);
    let surf_value = surf.as_ref().map_or(f64::NAN, |r| r.value);
    let paths_below_cap = path_value <= cap_value * (1.0 + tol) + tol;
    if !paths_below_cap {
        errors.push("paths: modulus exceeds capacity".into());
    }
    let (mut lhs, mut rhs, mut ok) = (f64::NAN, f64::NAN, false);
    if let Some(r) = &cap {
        // The bound is first order in the minimizer's error, so tighten it first.
        let polish = CapacityOptions { tol: Some(CUT_BOUND_CAP_TOL), init: Some(r.potentials.clone()), ..opts.capacity.clone() };
        let polished = match solve_capacity(c, p, &polish) {
            Ok(q) => q,
            Err(CapacityError::NotConverged(q)) => *q,
            Err(_) => r.clone(),
        };
        match cut_bound(c, &polished, 0.5, 1e-8 * (1.0 + polished.value)) {
            Ok((_, chk)) => {
                lhs = chk.lhs;
                rhs = chk.rhs;
                ok = chk.ok;
                if !ok {
                    errors.push("cut bound violated".into());
                }
            }
            Err(e) => errors.push(format!("cut bound: {e}")),
        }
    }
    let fields = opts.emit_fields.then(|| RowFields {
        minimizer: cap.as_ref().map(|r| r.minimizer.clone()),
        rho0: cap.as_ref().map(|r| r.rho0.clone()),
        path_density: paths.as_ref().map(|r| r.density.clone()),
        surface_density: surf.as_ref().map(|r| r.density.clone()),
    });
    DualityRow {
        descriptor: describe(c),
        p,
        p_star,
        cap: cap_value,
        mod_paths: path_value,
        mod_surf: surf_value,
        product: duality_product(cap_value, surf_value, p),
        gap_ratio: cap_value / path_value,
        cap_iters: cap.as_ref().map_or(0, |r| r.iterations),
        path_iters: paths.as_ref().map_or(0, |r| r.iterations),
        surf_iters: surf.as_ref().map_or(0, |r| r.iterations),
        cap_converged: cap.as_ref().is_some_and(|r| r.converged),
        paths_converged: paths.as_ref().is_some_and(|r| r.converged),
        surf_converged: surf.as_ref().is_some_and(|r| r.converged),
        paths_below_cap,
        cut_bound_lhs: lhs,
        cut_bound_rhs: rhs,
        cut_bound_ok: ok,
        errors,
        fields,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoareaEstimate {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// Riemann sum over `n_levels` levels of the `g`-weight of level cuts, against
/// `sum_e g_e (|t_e| / ell_e) mu_e`. Works on potentials and lifted increments.
pub fn coarea_check_lifted(
    c: &ToroidalComplex,
    base: &[f64],
    inc: &[f64],
    g: &Density,
    n_levels: usize,
) -> Result<CoareaEstimate, HarnessError> {
    if n_levels == 0 {
        return Err(HarnessError::Config("n_levels must be positive".into()));
    }
    let mut lhs = 0.0;
    for k in 0..n_levels {
        let t = (k as f64 + 0.5) / n_levels as f64;
        let cut = level_cut_lifted(c, base, inc, t)?;
        lhs += cut.weight(c, &g.values) / n_levels as f64;
    }
    let rhs: f64 = c
        .edges
        .iter()
        .enumerate()
        .map(|(i, e)| g.values[i] * inc[i].abs() / e.ell * e.mu)
        .sum();
    if rhs == 0.0 {
        if lhs > 0.0 {
            return Err(HarnessError::Unbounded);
        }
        return Ok(CoareaEstimate { lhs, rhs, ratio: 0.0 });
    }
    Ok(CoareaEstimate { lhs, rhs, ratio: lhs / rhs })
}

pub fn coarea_check(c: &ToroidalComplex, f: &CircleMap, g: &Density, n_levels: usize) -> Result<CoareaEstimate, HarnessError> {
    let inc = edge_increments(c, f)?;
    let lifted = lift(c, f, 1)?;
    if lifted.deg != 1 {
        return Err(SurfaceError::DegreeNotOne(lifted.deg).into());
    }
    coarea_check_lifted(c, &lifted.sheets[0], &inc, g, n_levels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoperimetricOptions {
    pub sample_balls: usize,
    /// Ball radii as multiples of the longest cut edge.
    pub radius_factors: Vec<f64>,
    /// Level of the cut.
    pub level: f64,
    pub dilation: f64,
    pub seed: u64,
}

impl Default for IsoperimetricOptions {
    fn default() -> Self {
        Self { sample_balls: 64, radius_factors: vec![1.0, 1.5, 2.0, 3.0], level: 0.5, dilation: 2.0, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsoperimetricEstimate {
    pub ratio: f64,
    pub balls_used: usize,
}

/// Largest ratio `min(mu(B & U+), mu(B & U-)) / mu(B)` over
/// `(r / mu(2B)) H(S & 2B)` for graph-metric balls around sampled vertices,
/// where `S` is a level cut and `U+`, `U-` are the two sides within a quarter
/// turn of the level. Balls whose dilation misses the cut contribute 0.
pub fn isoperimetric_check_lifted(
    c: &ToroidalComplex,
    base: &[f64],
    inc: &[f64],
    opts: &IsoperimetricOptions,
) -> Result<IsoperimetricEstimate, HarnessError> {
    let cut = level_cut_lifted(c, base, inc, opts.level)?;
    let mut in_cut = vec![false; c.num_edges()];
    for &e in &cut.edges {
        in_cut[e] = true;
    }
    // Signed offset of each edge midpoint from the level, in (-1/2, 1/2].
    let side: Vec<f64> = c
        .edges
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let r = (base[e.u] + 0.5 * inc[i] - opts.level).rem_euclid(1.0);
            if r > 0.5 {
                r - 1.0
            } else {
                r
            }
        })
        .collect();
    let lmax = cut.edges.iter().map(|&e| c.edges[e].ell).fold(0.0, f64::max);
    let lengths: Vec<f64> = c.edges.iter().map(|e| e.ell).collect();
    let mut centers: Vec<usize> = (0..c.num_vertices()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    centers.shuffle(&mut rng);
    centers.truncate(opts.sample_balls.max(1));
    centers.sort_unstable();

    let mut best: f64 = 0.0;
    let mut used = 0;
    for &x in &centers {
        let d = base_shortest_paths(c, &[(x, 0.0)], &lengths).dist;
        let mid: Vec<f64> = c.edges.iter().map(|e| 0.5 * e.ell + d[e.u].min(d[e.v])).collect();
        for &factor in &opts.radius_factors {
            let r = factor * lmax;
            let big = opts.dilation * r;
            let mut mu_b = 0.0;
            let mut mu_plus = 0.0;
            let mut mu_minus = 0.0;
            let mut mu_big = 0.0;
            let mut h_big = 0.0;
            for (i, e) in c.edges.iter().enumerate() {
                if mid[i] <= big {
                    mu_big += e.mu;
                    if in_cut[i] {
                        h_big += e.h();
                    }
                }
                if mid[i] <= r {
                    mu_b += e.mu;
                    if side[i] > 0.0 && side[i] < 0.25 {
                        mu_plus += e.mu;
                    } else if side[i] <= 0.0 && side[i] > -0.25 {
                        mu_minus += e.mu;
                    }
                }
            }
            if h_big == 0.0 || mu_b == 0.0 {
                continue;
            }
            used += 1;
            let lhs = mu_plus.min(mu_minus) / mu_b;
            let rhs = r / mu_big * h_big;
            best = best.max(lhs / rhs);
        }
    }
    Ok(IsoperimetricEstimate { ratio: best, balls_used: used })
}

pub fn isoperimetric_check(
    c: &ToroidalComplex,
    f: &CircleMap,
    opts: &IsoperimetricOptions,
) -> Result<IsoperimetricEstimate, HarnessError> {
    let inc = edge_increments(c, f)?;
    let lifted = lift(c, f, 1)?;
    if lifted.deg != 1 {
        return Err(SurfaceError::DegreeNotOne(lifted.deg).into());
    }
    isoperimetric_check_lifted(c, &lifted.sheets[0], &inc, opts)
}

fn default_ps() -> Vec<f64> {
    vec![2.0]
}
fn default_scales() -> Vec<f64> {
    vec![1.0]
}
fn default_jobs() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub geometries: Vec<GeometrySpec>,
    #[serde(default = "default_ps")]
    pub ps: Vec<f64>,
    /// Replaces `k_theta` of every torus geometry by each entry in turn.
    #[serde(default)]
    pub k_theta_ladder: Vec<usize>,
    /// Metric scale factors applied to every geometry.
    #[serde(default = "default_scales")]
    pub scales: Vec<f64>,
    #[serde(default)]
    pub options: DualityOptionsConfig,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Serializable subset of [`DualityOptions`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityOptionsConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub cap_tol: Option<f64>,
    pub emit_fields: bool,
}

impl Default for DualityOptionsConfig {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 10_000, cap_tol: None, emit_fields: false }
    }
}

impl From<&DualityOptionsConfig> for DualityOptions {
    fn from(o: &DualityOptionsConfig) -> Self {
        DualityOptions {
            modulus: SolveOptions { tol: o.tol, max_iter: o.max_iter },
            capacity: CapacityOptions { tol: o.cap_tol, ..Default::default() },
            emit_fields: o.emit_fields,
        }
    }
}

impl SweepConfig {
    /// Geometries after applying the refinement ladder.
    pub fn expanded_geometries(&self) -> Vec<GeometrySpec> {
        let mut out = Vec::new();
        for g in &self.geometries {
            match g {
                GeometrySpec::Torus { .. } if !self.k_theta_ladder.is_empty() => {
                    for &k in &self.k_theta_ladder {
                        let mut g = g.clone();
                        if let GeometrySpec::Torus { k_theta, .. } = &mut g {
                            *k_theta = k;
                        }
                        out.push(g);
                    }
                }
                _ => out.push(g.clone()),
            }
        }
        out
    }
}

/// Runs every (geometry, scale, p) combination. Rows come back in that order
/// regardless of `jobs`; a failing row carries its error instead of aborting.
pub fn sweep(config: &SweepConfig) -> Result<Vec<DualityRow>, HarnessError> {
    if config.ps.is_empty() {
        return Err(HarnessError::Config("no exponents".into()));
    }
    let opts = DualityOptions::from(&config.options);
    let mut tasks = Vec::new();
    for g in config.expanded_geometries() {
        for &s in &config.scales {
            for &p in &config.ps {
                tasks.push((g.clone(), s, p));
            }
        }
    }
    let run = |(g, s, p): &(GeometrySpec, f64, f64)| -> DualityRow {
        match g.build().and_then(|c| if *s == 1.0 { Ok(c) } else { Ok(scale_metric(&c, *s)?) }) {
            Ok(c) => run_duality(&c, *p, &opts),
            Err(e) => failed_row(g, *s, *p, e.to_string()),
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    Ok(pool.install(|| tasks.par_iter().map(run).collect()))
}

fn failed_row(g: &GeometrySpec, scale: f64, p: f64, err: String) -> DualityRow {
    let p = clamp_p(p);
    let id = serde_json::to_string(g).unwrap_or_default();
    DualityRow {
        descriptor: Descriptor {
            geometry_id: id,
            builder: "invalid".into(),
            m: None,
            k_theta: None,
            n_r: None,
            n_phi: None,
            length: None,
            radius: None,
            area: None,
            warp: String::new(),
            q: f64::NAN,
            scale,
        },
        p,
        p_star: conjugate(p),
        cap: f64::NAN,
        mod_paths: f64::NAN,
        mod_surf: f64::NAN,
        product: f64::NAN,
        gap_ratio: f64::NAN,
        cap_iters: 0,
        path_iters: 0,
        surf_iters: 0,
        cap_converged: false,
        paths_converged: false,
        surf_converged: false,
        paths_below_cap: false,
        cut_bound_lhs: f64::NAN,
        cut_bound_rhs: f64::NAN,
        cut_bound_ok: false,
        errors: vec![err],
        fields: None,
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    geometry_id: &'a str,
    k_theta: Option<usize>,
    n_r: Option<usize>,
    n_phi: Option<usize>,
    #[serde(rename = "L")]
    length: Option<f64>,
    #[serde(rename = "R")]
    radius: Option<f64>,
    warp: &'a str,
    q: f64,
    p: f64,
    p_star: f64,
    cap: f64,
    mod_paths: f64,
    mod_surf: f64,
    product: f64,
    gap_ratio: f64,
    cap_iters: usize,
    cap_converged: bool,
    paths_converged: bool,
    surf_converged: bool,
    paths_below_cap: bool,
    cut_bound_ok: bool,
    errors: String,
}

pub fn write_csv<W: Write>(rows: &[DualityRow], sink: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(sink);
    for r in rows {
        let d = &r.descriptor;
        w.serialize(CsvRow {
            geometry_id: &d.geometry_id,
            k_theta: d.k_theta,
            n_r: d.n_r,
            n_phi: d.n_phi,
            length: d.length,
            radius: d.radius,
            warp: &d.warp,
            q: d.q,
            p: r.p,
            p_star: r.p_star,
            cap: r.cap,
            mod_paths: r.mod_paths,
            mod_surf: r.mod_surf,
            product: r.product,
            gap_ratio: r.gap_ratio,
            cap_iters: r.cap_iters,
            cap_converged: r.cap_converged,
            paths_converged: r.paths_converged,
            surf_converged: r.surf_converged,
            paths_below_cap: r.paths_below_cap,
            cut_bound_ok: r.cut_bound_ok,
            errors: r.errors.join("; "),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// JSON report: the configuration echo followed by the rows.
pub fn write_json<W: Write, C: Serialize>(config: &C, rows: &[DualityRow], sink: W) -> Result<(), HarnessError> {
    #[derive(Serialize)]
    struct Report<'a, C> {
        config: &'a C,
        rows: &'a [DualityRow],
    }
    let mut sink = sink;
    serde_json::to_writer_pretty(&mut sink, &Report { config, rows })?;
    sink.write_all(b"\n")?;
    Ok(())
}
