use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use toromod::capacity::{solve_capacity, CapacityError, CapacityOptions};
use toromod::complex::{save_complex, validate, ToroidalComplex, DEFAULT_Q};
use toromod::harness::{
    run_duality, sweep, write_csv, write_json, DualityOptions, DualityOptionsConfig, DualityRow, GeometrySpec,
    HarnessError, SweepConfig,
};
use toromod::modulus::{clamp_p, conjugate, ModulusError, SolveOptions, SolveReport};
use toromod::paths::path_modulus;
use toromod::surfaces::surface_modulus;

#[derive(Parser, Debug)]
#[command(name = "toromod", version, about = "Capacity and modulus duality on discretized solid tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a complex and save it as JSON.
    Mesh(CommonArgs),
    /// Check the structural invariants of a complex.
    Validate(CommonArgs),
    /// Degree-1 p-capacity.
    Cap(CommonArgs),
    /// p-modulus of the winding-1 cycles.
    Modpaths(CommonArgs),
    /// Modulus of the separating surfaces, at the exponent given by --p.
    Modsurf(CommonArgs),
    /// Capacity, both moduli and the duality product for each --p.
    Duality(CommonArgs),
    /// Duality rows over every configured geometry, scale and exponent.
    Sweep(CommonArgs),
    /// Ring closed-form checks.
    Selftest(CommonArgs),
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Ring with m vertices.
    #[arg(long, value_name = "M", conflicts_with_all = ["torus", "complex"])]
    ring: Option<usize>,
    /// Solid torus with the given slice counts.
    #[arg(long, num_args = 3, value_names = ["K_THETA", "N_R", "N_PHI"], conflicts_with = "complex")]
    torus: Option<Vec<usize>>,
    /// Complex saved by `mesh`.
    #[arg(long)]
    complex: Option<PathBuf>,
    #[arg(long = "L")]
    length: Option<f64>,
    #[arg(long = "A")]
    area: Option<f64>,
    #[arg(long = "R")]
    radius: Option<f64>,
    /// flat, sin[:beta] or radial[:beta].
    #[arg(long)]
    warp: Option<String>,
    #[arg(long)]
    q: Option<f64>,
    /// Exponent; repeat for several.
    #[arg(long = "p")]
    ps: Vec<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Attach minimizers and densities to JSON output.
    #[arg(long)]
    emit_fields: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

/// Everything a run depends on. Missing fields take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    /// Single geometry used by every command except a multi-geometry sweep.
    geometry: Option<GeometrySpec>,
    /// Extra geometries for `sweep`.
    geometries: Vec<GeometrySpec>,
    ps: Vec<f64>,
    tol: f64,
    max_iter: usize,
    /// Capacity tolerance; solver default when absent.
    cap_tol: Option<f64>,
    k_theta_ladder: Vec<usize>,
    scales: Vec<f64>,
    out: Option<PathBuf>,
    format: Format,
    jobs: usize,
    seed: u64,
    emit_fields: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: None,
            geometries: Vec::new(),
            ps: vec![2.0],
            tol: 1e-6,
            max_iter: 10_000,
            cap_tol: None,
            k_theta_ladder: Vec::new(),
            scales: vec![1.0],
            out: None,
            format: Format::Csv,
            jobs: 1,
            seed: 0,
            emit_fields: false,
        }
    }
}

#[derive(Debug)]
enum CliError {
    Input(String),
    NotConverged(String),
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

fn apply_geometry_flags(args: &CommonArgs, base: Option<GeometrySpec>) -> Option<GeometrySpec> {
    let mut g = if let Some(m) = args.ring {
        Some(GeometrySpec::Ring { m, length: 1.0, area: 1.0 })
    } else if let Some(t) = &args.torus {
        Some(GeometrySpec::Torus {
            k_theta: t[0],
            n_r: t[1],
            n_phi: t[2],
            length: 1.0,
            radius: 1.0,
            warp: "flat".into(),
            q: DEFAULT_Q,
        })
    } else if let Some(path) = &args.complex {
        Some(GeometrySpec::File { path: path.clone() })
    } else {
        base
    };
    match &mut g {
        Some(GeometrySpec::Ring { length, area, .. }) => {
            *length = args.length.unwrap_or(*length);
            *area = args.area.unwrap_or(*area);
        }
        Some(GeometrySpec::Torus { length, radius, warp, q, .. }) => {
            *length = args.length.unwrap_or(*length);
            *radius = args.radius.unwrap_or(*radius);
            *q = args.q.unwrap_or(*q);
            if let Some(w) = &args.warp {
                *warp = w.clone();
            }
        }
        _ => {}
    }
    g
}

fn resolve(args: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    cfg.geometry = apply_geometry_flags(args, cfg.geometry.take());
    if !args.ps.is_empty() {
        cfg.ps = args.ps.clone();
    }
    cfg.tol = args.tol.unwrap_or(cfg.tol);
    cfg.max_iter = args.max_iter.unwrap_or(cfg.max_iter);
    cfg.out = args.out.clone().or(cfg.out);
    cfg.format = args.format.unwrap_or(cfg.format);
    cfg.jobs = args.jobs.unwrap_or(cfg.jobs);
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    cfg.emit_fields |= args.emit_fields;
    if !(cfg.tol > 0.0) {
        return Err(CliError::Input("--tol must be positive".into()));
    }
    if cfg.ps.iter().any(|p| !(p.is_finite() && *p > 1.0)) {
        return Err(CliError::Input("--p must be a finite exponent above 1".into()));
    }
    Ok(cfg)
}

fn complex_of(cfg: &RunConfig) -> Result<ToroidalComplex, CliError> {
    let g = cfg
        .geometry
        .as_ref()
        .ok_or_else(|| CliError::Input("no geometry: pass --ring, --torus or --complex".into()))?;
    Ok(g.build()?)
}

fn duality_options(cfg: &RunConfig) -> DualityOptions {
    DualityOptions::from(&options_config(cfg))
}

fn options_config(cfg: &RunConfig) -> DualityOptionsConfig {
    DualityOptionsConfig { tol: cfg.tol, max_iter: cfg.max_iter, cap_tol: cfg.cap_tol, emit_fields: cfg.emit_fields }
}

fn sink(cfg: &RunConfig) -> Result<Box<dyn Write>, CliError> {
    Ok(match &cfg.out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit_rows(cfg: &RunConfig, rows: &[DualityRow]) -> Result<(), CliError> {
    let out = sink(cfg)?;
    match cfg.format {
        Format::Csv => write_csv(rows, out)?,
        Format::Json => write_json(cfg, rows, out)?,
    }
    Ok(())
}

fn row_line(r: &DualityRow) -> String {
    format!(
        "geometry_id={} p={:.6} p_star={:.6} cap={:.6} mod_paths={:.6} mod_surf={:.6} product={:.6} gap_ratio={:.6} converged={}",
        r.descriptor.geometry_id,
        r.p,
        r.p_star,
        r.cap,
        r.mod_paths,
        r.mod_surf,
        r.product,
        r.gap_ratio,
        r.all_converged()
    )
}

fn check_rows(rows: &[DualityRow]) -> Result<(), CliError> {
    for r in rows {
        for e in &r.errors {
            warn!("{} p={}: {e}", r.descriptor.geometry_id, r.p);
        }
    }
    if rows.iter().any(|r| r.descriptor.builder == "invalid") {
        return Err(CliError::Input("some geometries could not be built".into()));
    }
    if let Some(r) = rows.iter().find(|r| !r.all_converged()) {
        return Err(CliError::NotConverged(format!("{} at p={}", r.descriptor.geometry_id, r.p)));
    }
    Ok(())
}

fn modulus_result(r: Result<SolveReport, ModulusError>) -> Result<SolveReport, CliError> {
    match r {
        Ok(rep) => Ok(rep),
        Err(ModulusError::NotConverged(rep)) => Ok(*rep),
        Err(e) => Err(CliError::Input(e.to_string())),
    }
}

fn write_reports<T: Serialize>(cfg: &RunConfig, reports: &[T]) -> Result<(), CliError> {
    if cfg.out.is_some() {
        let mut out = sink(cfg)?;
        serde_json::to_writer_pretty(&mut out, reports).map_err(|e| CliError::Input(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn run_modulus(cfg: &RunConfig, surfaces: bool) -> Result<(), CliError> {
    let c = complex_of(cfg)?;
    let opts = SolveOptions { tol: cfg.tol, max_iter: cfg.max_iter };
    let name = if surfaces { "mod_surf" } else { "mod_paths" };
    let mut reports = Vec::new();
    for &p in &cfg.ps {
        let rep = if surfaces { surface_modulus(&c, p, &opts) } else { path_modulus(&c, p, &opts) };
        let rep = modulus_result(rep)?;
        println!(
            "p={:.6} {name}={:.6} dual={:.6} members={} iters={} converged={}",
            rep.p,
            rep.value,
            rep.dual_value,
            rep.active_members.len(),
            rep.iterations,
            rep.converged
        );
        reports.push(rep);
    }
    write_reports(cfg, &reports)?;
    match reports.iter().find(|r| !r.converged) {
        Some(r) => Err(CliError::NotConverged(format!("{name} at p={}", r.p))),
        None => Ok(()),
    }
}

fn run_cap(cfg: &RunConfig) -> Result<(), CliError> {
    let c = complex_of(cfg)?;
    let opts = CapacityOptions { tol: cfg.cap_tol, ..Default::default() };
    let mut reports = Vec::new();
    for &p in &cfg.ps {
        let rep = match solve_capacity(&c, clamp_p(p), &opts) {
            Ok(r) => r,
            Err(CapacityError::NotConverged(r)) => *r,
            Err(e) => return Err(CliError::Input(e.to_string())),
        };
        println!(
            "p={:.6} cap={:.6} residual={:.3e} iters={} converged={}",
            rep.p, rep.value, rep.kkt_residual, rep.iterations, rep.converged
        );
        reports.push(rep);
    }
    write_reports(cfg, &reports)?;
    match reports.iter().find(|r| !r.converged) {
        Some(r) => Err(CliError::NotConverged(format!("cap at p={}", r.p))),
        None => Ok(()),
    }
}

fn run_sweep(cfg: &RunConfig) -> Result<(), CliError> {
    let mut geometries = cfg.geometries.clone();
    if let Some(g) = &cfg.geometry {
        geometries.insert(0, g.clone());
    }
    if geometries.is_empty() {
        return Err(CliError::Input("no geometries to sweep".into()));
    }
    let sc = SweepConfig {
        geometries,
        ps: cfg.ps.clone(),
        k_theta_ladder: cfg.k_theta_ladder.clone(),
        scales: cfg.scales.clone(),
        options: options_config(cfg),
        jobs: cfg.jobs,
        seed: cfg.seed,
    };
    info!("sweeping {} geometries", sc.expanded_geometries().len());
    let rows = sweep(&sc)?;
    emit_rows(cfg, &rows)?;
    check_rows(&rows)
}

/// Ring closed forms: cap = A L^(1-p), both moduli and a unit product.
fn run_selftest(cfg: &RunConfig) -> Result<(), CliError> {
    let opts = DualityOptions {
        modulus: SolveOptions { tol: cfg.tol.min(1e-8), max_iter: cfg.max_iter },
        ..Default::default()
    };
    let mut failed = 0;
    for m in [3, 4, 8] {
        for length in [1.0, 2.0] {
            for area in [1.0, 3.0] {
                let c = toromod::complex::build_ring(m, length, area).map_err(|e| CliError::Input(e.to_string()))?;
                for p in [1.5, 2.0, 3.0] {
                    let r = run_duality(&c, p, &opts);
                    let cap = area * f64::powf(length, 1.0 - p);
                    let surf = length * f64::powf(area, 1.0 - conjugate(p));
                    let rel = |x: f64, want: f64| (x - want).abs() / want;
                    let ok = rel(r.cap, cap) <= 1e-6
                        && rel(r.mod_paths, cap) <= 1e-6
                        && rel(r.mod_surf, surf) <= 1e-6
                        && (r.product - 1.0).abs() <= 1e-6;
                    if !ok {
                        failed += 1;
                    }
                    println!(
                        "{} ring m={m} L={length} A={area} p={p}: cap={:.9} mod_paths={:.9} mod_surf={:.9} product={:.9}",
                        if ok { "PASS" } else { "FAIL" },
                        r.cap,
                        r.mod_paths,
                        r.mod_surf,
                        r.product
                    );
                }
            }
        }
    }
    if failed > 0 {
        return Err(CliError::NotConverged(format!("{failed} closed-form checks failed")));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Mesh(a) => {
            let cfg = resolve(&a)?;
            let c = complex_of(&cfg)?;
            save_complex(&c, sink(&cfg)?).map_err(|e| CliError::Input(e.to_string()))?;
            info!("{} vertices, {} edges, {} faces", c.num_vertices(), c.num_edges(), c.faces.len());
            Ok(())
        }
        Command::Validate(a) => {
            let cfg = resolve(&a)?;
            let c = complex_of(&cfg)?;
            let report = validate(&c);
            println!(
                "vertices={} edges={} faces={} status={report}",
                c.num_vertices(),
                c.num_edges(),
                c.faces.len()
            );
            if report.is_ok() {
                Ok(())
            } else {
                Err(CliError::Input("invalid complex".into()))
            }
        }
        Command::Cap(a) => run_cap(&resolve(&a)?),
        Command::Modpaths(a) => run_modulus(&resolve(&a)?, false),
        Command::Modsurf(a) => run_modulus(&resolve(&a)?, true),
        Command::Duality(a) => {
            let cfg = resolve(&a)?;
            let c = complex_of(&cfg)?;
            let opts = duality_options(&cfg);
            let rows: Vec<DualityRow> = cfg.ps.iter().map(|&p| run_duality(&c, p, &opts)).collect();
            for r in &rows {
                println!("{}", row_line(r));
            }
            if cfg.out.is_some() {
                emit_rows(&cfg, &rows)?;
            }
            check_rows(&rows)
        }
        Command::Sweep(a) => run_sweep(&resolve(&a)?),
        Command::Selftest(a) => run_selftest(&resolve(&a)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TOROMOD_LOG", "error")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::NotConverged(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_byte_identically() {
        let cfg = RunConfig {
            geometry: Some(GeometrySpec::Torus {
                k_theta: 8,
                n_r: 2,
                n_phi: 6,
                length: 1.0,
                radius: 1.0,
                warp: "sin:0.25".into(),
                q: 3.0,
            }),
            ps: vec![1.5, 2.0, 3.0],
            tol: 1e-7,
            ..Default::default()
        };
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(serde_json::to_string_pretty(&back).unwrap(), text);
    }

    #[test]
    fn flags_override_config_geometry() {
        let args = CommonArgs { length: Some(2.0), ..Default::default() };
        let g = apply_geometry_flags(&args, Some(GeometrySpec::Ring { m: 4, length: 1.0, area: 3.0 }));
        assert_eq!(g, Some(GeometrySpec::Ring { m: 4, length: 2.0, area: 3.0 }));
    }
}
